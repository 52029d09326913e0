# backend/report_utils.py
import io
import os
import shutil
from datetime import datetime

import pandas as pd

from backend.log_utils import get_logger

RUNS_DIR = "runs"

log = get_logger(__name__)


def new_run_dir(mode, root=None):
    """Create runs/<mode>_<timestamp>/ (suffixed if the second is taken)."""
    root = root or RUNS_DIR
    os.makedirs(root, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    base = os.path.join(root, f"{mode}_{timestamp}")
    path, n = base, 1
    while os.path.exists(path):
        n += 1
        path = f"{base}_{n}"
    os.makedirs(path)
    return path


def is_run_dir(path):
    return os.path.isfile(os.path.join(path, "metrics.csv"))


def list_all_runs(root=None, max_runs=50):
    """Run directories under root holding a metrics.csv, newest first."""
    root = root or RUNS_DIR
    runs = []
    if not os.path.exists(root):
        return runs
    for dirpath, dirnames, _ in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
        if is_run_dir(dirpath):
            runs.append(dirpath)
    runs = sorted(runs, key=lambda p: os.path.getmtime(os.path.join(p, "metrics.csv")), reverse=True)
    return runs[:max_runs]


def delete_run(path, root=None):
    """Delete a run directory; refuses anything outside root."""
    root = os.path.realpath(root or RUNS_DIR)
    target = os.path.realpath(path)
    if os.path.commonpath([root, target]) != root or target == root:
        log.warning("refusing to delete outside runs root", path=path)
        return False
    try:
        if os.path.isdir(target):
            shutil.rmtree(target)
            return True
        return False
    except OSError as e:
        log.error("delete failed", path=path, error=str(e))
        return False


def save_report(file_bytes, run_dir, name, extension="xlsx"):
    """Write an export next to the run it describes, timestamped."""
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    file_path = os.path.join(run_dir, f"{name}_{timestamp}.{extension}")
    with open(file_path, "wb") as f:
        f.write(file_bytes)
    return file_path


def df_to_excel_bytes(df, sheet_name="metrics"):
    output = io.BytesIO()
    with pd.ExcelWriter(output, engine="openpyxl") as writer:
        df.to_excel(writer, index=False, sheet_name=sheet_name)
    return output.getvalue()
