# backend/cli.py
"""Command-line surface: train, augment, score, bench."""
import argparse
import io
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from backend import augment_ops as ops
from backend import mis as mis_lib
from backend import model as net
from backend import policy
from backend.config import dump_config, parse_config, split_override_args
from backend.errors import ConfigError, ContractViolation, LabError
from backend.log_utils import configure_logging, get_logger
from backend.pixel_core import Image, list_ppm_files, read_ppm_file, write_ppm_file
from backend.report_utils import new_run_dir
from backend.rng import derive_stream
from backend.trainer import CHECKPOINT_FILE, METRICS_FILE, load_datasets, train

log = get_logger(__name__)

CONFIG_FILE = "config.txt"
SCORE_COLUMNS = ["sample_index", "label", "target_prob", "mis"]
BENCH_COLUMNS = ["op", "images_per_sec", "img_size", "iters"]
BENCH_MAGNITUDE = 0.5


# ---------------- Helpers ----------------
def _read_text(path):
    if path is None:
        return ""
    with open(path, "r", encoding="utf-8") as f:
        return f.read()


def _write_csv(df, out):
    buf = io.StringIO()
    df.to_csv(buf, index=False, float_format="%.10g", na_rep="")
    out.write(buf.getvalue())
    out.flush()


# ---------------- train ----------------
def cmd_train(args, extra, out=None):
    out = out or sys.stdout
    overrides = split_override_args(extra)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.threads is not None:
        overrides["trainer.threads"] = str(args.threads)
    cfg = parse_config(_read_text(args.config), overrides)
    if args.dump_config:
        out.write(dump_config(cfg))
        out.flush()
        return 0

    train_set, test_set = load_datasets(cfg.data, cfg.seed)
    run_dir = args.out or new_run_dir(cfg.mode.value)
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, CONFIG_FILE), "w", encoding="utf-8") as f:
        f.write(dump_config(cfg))
    log.info("run directory", path=run_dir)
    result = train(cfg, train_set, test_set, run_dir)
    final = result.history[-1] if result.history else None
    log.info("training finished", metrics=os.path.join(run_dir, METRICS_FILE),
             checkpoint=os.path.join(run_dir, CHECKPOINT_FILE),
             test_acc=final.test_acc if final else None)
    return 0


# ---------------- augment ----------------
def build_sub_policy(mode, magnitude, depth, operators, fill, streams):
    """One sub-policy for the standalone augment command."""
    if not 0.0 <= magnitude <= 1.0:
        raise ContractViolation(f"--magnitude must be in [0, 1], got {magnitude}")
    cfg = policy.PolicyConfig(depth=depth, operator_subset=operators, fill=fill)
    if mode == "explore":
        return policy.sample_explore(cfg, streams)
    if mode == "refine":
        return policy.sample_refine(cfg, magnitude, streams)
    ra = policy.RaBaselineConfig(n_ops=depth, magnitude_level=magnitude * policy.RA_MAX_LEVEL)
    return policy.sample_ra_baseline(ra, streams, operators, fill)


def _parse_ops(text):
    if not text or text.strip().lower() == "all":
        return ops.ALL_KINDS
    return tuple(ops.OpKind.parse(p) for p in text.split(",") if p.strip())


def cmd_augment(args, extra=None, out=None):
    src, dst = Path(args.input), Path(args.output)
    if not src.is_dir():
        raise ConfigError(f"input directory {src} does not exist", key="--in")
    operators = _parse_ops(args.ops)
    files = list_ppm_files(src)
    dst.mkdir(parents=True, exist_ok=True)
    for i, path in enumerate(files):
        img = read_ppm_file(path)
        streams = policy.PolicyStreams.derive(args.seed, 0, 0, i, args.mode)
        sub = build_sub_policy(args.mode, args.magnitude, args.depth, operators, ops.DEFAULT_FILL, streams)
        write_ppm_file(dst / path.name, policy.augment_image(img, sub))
    log.info("augmented", mode=args.mode, images=len(files), out=str(dst))
    return 0


# ---------------- score ----------------
def score_dataset(model, dataset, mis_cfg, mean, std, batch_size=256):
    """Per-sample (index, label, p_target, MIS) rows for a trained model."""
    if len(dataset) and tuple(dataset.samples[0].image.pixels.shape) != model.input_shape:
        raise ContractViolation(
            f"checkpoint expects {model.input_shape} images, data has "
            f"{dataset.samples[0].image.pixels.shape}"
        )
    if dataset.class_count != model.num_classes:
        raise ContractViolation(
            f"checkpoint has {model.num_classes} classes, data has {dataset.class_count}"
        )
    rows = []
    for start in range(0, len(dataset), batch_size):
        chunk = dataset.samples[start:start + batch_size]
        x = net.normalize_images(np.stack([s.image.pixels for s in chunk]), mean, std, model.dtype)
        logits = net.forward(model, x)
        probs = mis_lib.softmax(logits)
        for j, s in enumerate(chunk):
            rows.append({
                "sample_index": start + j,
                "label": s.label,
                "target_prob": float(probs[j, s.label]),
                "mis": mis_lib.compute_mis(logits[j], s.label, mis_cfg),
            })
    return pd.DataFrame(rows, columns=SCORE_COLUMNS)


def cmd_score(args, extra=None, out=None):
    out = out or sys.stdout
    cfg = parse_config(_read_text(args.config))
    with open(args.checkpoint, "rb") as f:
        model, _ = net.load_checkpoint(f.read())
    data = replace(cfg.data, source=args.data)
    train_set, test_set = load_datasets(data, cfg.seed)
    dataset = train_set if args.split == "train" else test_set
    gamma = None if args.gamma is None else float(args.gamma)
    mis_cfg = mis_lib.MisConfig(args.scorer, args.epsilon, model.num_classes, gamma)
    df = score_dataset(model, dataset, mis_cfg, data.mean, data.std)
    _write_csv(df, out)
    log.info("scored", samples=len(df), mean_mis=float(df["mis"].mean()) if len(df) else None)
    return 0


# ---------------- bench ----------------
def bench_images(size, count, seed=0):
    rng = derive_stream(seed, 0, 0, 0, "bench")
    return [Image(rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)) for _ in range(count)]


def bench_operators(size=32, iters=100, repeats=3, kinds=ops.ALL_KINDS):
    """Images per second per operator, mean over repeats."""
    if size < 1 or iters < 1 or repeats < 1:
        raise ContractViolation("--size, --iters and --repeats must be >= 1")
    images = bench_images(size, iters)
    rows = []
    for kind in kinds:
        app = ops.OpApplication(kind, BENCH_MAGNITUDE, 1)
        rates = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            for img in images:
                ops.apply_op(img, app)
            elapsed = max(time.perf_counter() - t0, 1e-9)
            rates.append(iters / elapsed)
        rows.append({"op": kind.value, "images_per_sec": float(np.mean(rates)),
                     "img_size": size, "iters": iters})
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def cmd_bench(args, extra=None, out=None):
    out = out or sys.stdout
    df = bench_operators(args.size, args.iters, args.repeats)
    _write_csv(df, out)
    return 0


# ---------------- Parser ----------------
def build_parser():
    parser = argparse.ArgumentParser(prog="sra", description="Sample-aware RandAugment lab")
    parser.add_argument("--log-level", default="INFO", help="structlog level (stderr)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model; unknown --key value pairs override the config")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="run directory (default runs/<mode>_<timestamp>)")
    p.add_argument("--threads", type=int)
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
    p.set_defaults(func=cmd_train, accepts_overrides=True)

    p = sub.add_parser("augment", help="apply one sampled policy to every PPM in a folder")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--mode", choices=("explore", "refine", "ra"), required=True)
    p.add_argument("--magnitude", type=float, default=0.5)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ops", help="comma-separated operator subset (default all)")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("score", help="per-sample MIS of a checkpoint as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="data source, same syntax as data.source")
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--scorer", choices=[s.value for s in mis_lib.Scorer], default="cosine_gamma")
    p.add_argument("--gamma", type=float, help="fixed gamma (overrides epsilon)")
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--config", help="config file for normalization and synthetic sizes")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="per-operator throughput as CSV")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None, out=None, err=None):
    err = err or sys.stderr
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra and not getattr(args, "accepts_overrides", False):
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    configure_logging(args.log_level, err)
    try:
        return args.func(args, extra, out)
    except (LabError, OSError) as e:
        err.write(f"error: {e}\n")
        err.flush()
        return 1


if __name__ == "__main__":
    sys.exit(main())
