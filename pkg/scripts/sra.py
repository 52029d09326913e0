# scripts/sra.py
"""Entry point: python scripts/sra.py train --config lab.cfg --out runs/demo"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))  # run from anywhere

from backend.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
