# scripts/run_sweep.py
"""One training run per (value, seed) with a single config key swept.

    python scripts/run_sweep.py mis.epsilon 0 1 2 4 --seeds 3 --config lab.cfg --out sweeps/eps
    python scripts/run_sweep.py policy.operators --leave-one-out --seeds 1 --out sweeps/ops
"""
import argparse
import os
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import pandas as pd  # noqa: E402

from backend.augment_ops import ALL_KINDS  # noqa: E402
from backend.config import KEY_INDEX, dump_config, parse_config  # noqa: E402
from backend.errors import ConfigError, LabError  # noqa: E402
from backend.log_utils import configure_logging, get_logger  # noqa: E402
from backend.policy import operator_ablation_subsets  # noqa: E402
from backend.run_summary import summarize_run  # noqa: E402
from backend.trainer import load_datasets, train  # noqa: E402

log = get_logger("run_sweep")

SUMMARY_COLUMNS = ["key", "value", "seed", "final_test_acc", "final_mean_mis"]


def sweep_values(key, values, leave_one_out=False):
    """(label, raw value) pairs; leave-one-out expands policy.operators."""
    if leave_one_out:
        if key != "policy.operators":
            raise ConfigError("--leave-one-out only applies to policy.operators", key=key)
        return [(f"no_{kind.value}", ",".join(k.value for k in subset))
                for kind, subset in operator_ablation_subsets(ALL_KINDS)]
    return [(v, v) for v in values]


def run_dir_for(out, key, label, seed):
    return os.path.join(out, f"{key}_{label}", f"seed_{seed}")


def run_sweep(key, values, seeds, config_text="", out="sweeps", base_seed=0, leave_one_out=False):
    if key not in KEY_INDEX:
        raise ConfigError("unknown key", key=key)
    rows = []
    for label, raw in sweep_values(key, values, leave_one_out):
        for s in range(seeds):
            seed = base_seed + s
            cfg = parse_config(config_text, {key: raw, "seed": str(seed)})
            run_dir = run_dir_for(out, key, label, seed)
            os.makedirs(run_dir, exist_ok=True)
            with open(os.path.join(run_dir, "config.txt"), "w", encoding="utf-8") as f:
                f.write(dump_config(cfg))
            train_set, test_set = load_datasets(cfg.data, cfg.seed)
            result = train(cfg, train_set, test_set, run_dir)
            history = pd.DataFrame([r.as_row() for r in result.history])
            summary = summarize_run(history)
            rows.append({"key": key, "value": label, "seed": seed,
                         "final_test_acc": summary["final_test_acc"],
                         "final_mean_mis": summary["final_mean_mis"]})
            log.info("sweep run finished", key=key, value=label, seed=seed,
                     test_acc=summary["final_test_acc"])
    df = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    os.makedirs(out, exist_ok=True)
    df.to_csv(os.path.join(out, "summary.csv"), index=False, float_format="%.10g", na_rep="")
    return df


def main(argv=None):
    parser = argparse.ArgumentParser(description="sweep one config key over values and seeds")
    parser.add_argument("key")
    parser.add_argument("values", nargs="*")
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--base-seed", type=int, default=0)
    parser.add_argument("--config")
    parser.add_argument("--out", default="sweeps")
    parser.add_argument("--leave-one-out", action="store_true",
                        help="with policy.operators: one run per dropped operator")
    args = parser.parse_args(argv)
    configure_logging()
    if not args.values and not args.leave_one_out:
        parser.error("give at least one value (or --leave-one-out)")
    try:
        text = ""
        if args.config:
            with open(args.config, "r", encoding="utf-8") as f:
                text = f.read()
        run_sweep(args.key, args.values, args.seeds, text, args.out, args.base_seed, args.leave_one_out)
    except (LabError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
