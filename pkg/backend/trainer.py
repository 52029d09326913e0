# backend/trainer.py
"""The asymmetric explore / refine training loop, its ablations and baselines."""
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from backend import mis as mis_lib
from backend import model as net
from backend import policy
from backend.policy import PolicyConfig, RaBaselineConfig
from backend.errors import ConfigError, ContractViolation, require
from backend.log_utils import get_logger
from backend.pixel_core import (
    LabeledImage,
    crop_flip,
    load_cifar_files,
    load_ppm_folder,
    synthesize_dataset,
)
from backend.rng import derive_stream

log = get_logger(__name__)

METRICS_COLUMNS = ["epoch", "explore_loss", "refine_loss", "mean_mis", "lr", "test_acc", "seconds"]
METRICS_FILE = "metrics.csv"
CHECKPOINT_FILE = "checkpoint.bin"


class Mode(str, Enum):
    SRA = "sra"
    RA_BASELINE = "ra_baseline"
    BASIC = "basic"
    NO_EXPLORE_RANDOM = "ablation-no_explore_random"
    ALL_EXPLORE = "ablation-all_explore"
    ALL_REFINE = "ablation-all_refine"
    ONE_BATCH = "ablation-one_batch"


ABLATION_MODES = frozenset(
    {Mode.NO_EXPLORE_RANDOM, Mode.ALL_EXPLORE, Mode.ALL_REFINE, Mode.ONE_BATCH}
)
BASIC_TRANSFORMS = ("none", "crop_flip")


# ---------------- Configuration ----------------
@dataclass(frozen=True)
class OptimConfig:
    base_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    label_smoothing: float = 0.0
    warmup_epochs: int = 2

    def __post_init__(self):
        require(self.base_lr >= 0, f"optim.base_lr must be >= 0, got {self.base_lr}")
        require(0 <= self.momentum < 1, f"optim.momentum must be in [0, 1), got {self.momentum}")
        require(self.weight_decay >= 0, f"optim.weight_decay must be >= 0, got {self.weight_decay}")
        require(0 <= self.label_smoothing < 1,
                f"optim.label_smoothing must be in [0, 1), got {self.label_smoothing}")
        require(self.warmup_epochs >= 0, f"optim.warmup_epochs must be >= 0, got {self.warmup_epochs}")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    class_count: int = 4
    samples_per_class: int = 50
    test_samples_per_class: int = 25
    image_size: int = 32
    limit_train: int = None
    limit_test: int = None
    basic_transform: str = "none"
    mean: tuple = (0.5, 0.5, 0.5)
    std: tuple = (0.5, 0.5, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        require(self.class_count >= 2, f"data.class_count must be >= 2, got {self.class_count}")
        require(self.image_size >= 4, f"data.image_size must be >= 4, got {self.image_size}")
        require(self.basic_transform in BASIC_TRANSFORMS,
                f"data.basic_transform must be one of {BASIC_TRANSFORMS}, got {self.basic_transform!r}")
        require(len(self.mean) == 3 and len(self.std) == 3, "data.mean / data.std need 3 values")
        require(all(s > 0 for s in self.std), "data.std values must be > 0")


@dataclass(frozen=True)
class ModelConfig:
    arch: str = net.DEFAULT_ARCH
    precision: str = "float32"

    def __post_init__(self):
        require(self.precision in net.DTYPES, f"model.precision must be float32|float64, got {self.precision!r}")


@dataclass(frozen=True)
class TrainConfig:
    mode: Mode = Mode.SRA
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    ra: RaBaselineConfig = field(default_factory=RaBaselineConfig)
    mis: mis_lib.MisConfig = field(default_factory=mis_lib.MisConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 30
    large_batch_size: int = 128
    repeat_factor: int = 1
    eval_every: int = 1
    threads: int = 1
    wall_clock: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        require(self.epochs >= 0, f"trainer.epochs must be >= 0, got {self.epochs}")
        require(self.large_batch_size >= 1, f"trainer.large_batch_size must be >= 1, got {self.large_batch_size}")
        if self.mode is not Mode.ONE_BATCH:
            require(self.large_batch_size % 2 == 0,
                    f"trainer.large_batch_size must be even (2B), got {self.large_batch_size}")
        require(self.repeat_factor >= 1, f"trainer.repeat_factor must be >= 1, got {self.repeat_factor}")
        require(self.eval_every >= 1, f"trainer.eval_every must be >= 1, got {self.eval_every}")
        require(self.threads >= 1, f"trainer.threads must be >= 1, got {self.threads}")
        require(self.epochs == 0 or self.optim.warmup_epochs < self.epochs,
                f"optim.warmup_epochs ({self.optim.warmup_epochs}) must be < trainer.epochs ({self.epochs})")


# ---------------- State / metrics ----------------
@dataclass
class EpochAccumulator:
    explore_losses: list = field(default_factory=list)
    refine_losses: list = field(default_factory=list)
    mis_scores: list = field(default_factory=list)


@dataclass
class TrainState:
    model: net.Model
    optim: net.OptimState
    schedule: net.LrSchedule
    cfg: TrainConfig
    mis_cfg: mis_lib.MisConfig
    global_iter: int = 0
    epoch: int = 1
    iteration: int = 0
    lr: float = 0.0
    acc: EpochAccumulator = field(default_factory=EpochAccumulator)
    executor: ThreadPoolExecutor = None

    @property
    def seed(self):
        return self.cfg.seed


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    explore_loss: float = None
    refine_loss: float = None
    mean_mis: float = None
    lr: float = 0.0
    test_acc: float = None
    seconds: float = None

    def as_row(self):
        return {c: getattr(self, c) for c in METRICS_COLUMNS}


@dataclass
class TrainResult:
    checkpoint: bytes
    history: list
    model: net.Model
    optim: net.OptimState


def _mean(values):
    return float(np.mean(values)) if values else None


# ---------------- Streams / fan-out ----------------
def policy_streams(state, purpose, sample_index):
    return policy.PolicyStreams.derive(state.seed, state.epoch, state.iteration, sample_index, purpose)


def _map(state, fn, items):
    if state.executor is None:
        return [fn(item) for item in items]
    return list(state.executor.map(fn, items))


def batch_augment_expand(batch, repeat, augment, executor=None):
    """K augmented copies per sample, copies of one sample contiguous.

    augment(i, k, image) builds copy k of sample i from its own stream.
    """
    require(repeat >= 1, f"repeat factor must be >= 1, got {repeat}")
    jobs = [(i, k) for i in range(len(batch)) for k in range(repeat)]

    def run(job):
        i, k = job
        return LabeledImage(augment(i, k, batch[i].image), batch[i].label)

    if executor is None:
        return [run(j) for j in jobs]
    return list(executor.map(run, jobs))


# ---------------- Step helpers ----------------
def _prepare(state, samples, offset):
    """Basic preprocessing (optional crop + flip) before any policy."""
    if state.cfg.data.basic_transform == "none":
        return list(samples)

    def one(i):
        rng = derive_stream(state.seed, state.epoch, state.iteration, offset + i, "basic")
        s = samples[i]
        return LabeledImage(crop_flip(s.image, rng), s.label)

    return _map(state, one, range(len(samples)))


def _batch_arrays(state, samples):
    data = state.cfg.data
    x = net.normalize_images(
        np.stack([s.image.pixels for s in samples]), data.mean, data.std, state.model.dtype
    )
    y = np.array([s.label for s in samples], dtype=np.int64)
    return x, y


def _update(state, samples, bucket):
    """One weight update; the LR schedule advances with it."""
    x, y = _batch_arrays(state, samples)
    loss, grad = net.loss_and_grad(state.model, x, y, state.optim.label_smoothing)
    lr = net.lr_at(state.schedule, state.global_iter)
    net.sgd_step(state.model, state.optim, grad, lr)
    state.global_iter += 1
    state.lr = lr
    bucket.append(loss)
    return loss


def score_batch(state, samples):
    """Step 2: forward-only MIS per sample; parameters are not touched."""
    x, y = _batch_arrays(state, samples)
    logits = net.forward(state.model, x)
    return [mis_lib.compute_mis(logits[i], int(y[i]), state.mis_cfg) for i in range(len(samples))]


def _explore(state, samples, offset):
    cfg = state.cfg
    k = cfg.repeat_factor

    def augment(i, copy, image):
        sub = policy.sample_explore(cfg.policy, policy_streams(state, "explore", (offset + i) * k + copy))
        return policy.augment_image(image, sub)

    return batch_augment_expand(samples, k, augment, state.executor)


def _refine(state, samples, scores, offset):
    cfg = state.cfg
    k = cfg.repeat_factor

    def augment(i, copy, image):
        sub = policy.sample_refine(
            cfg.policy, scores[i], policy_streams(state, "refine", (offset + i) * k + copy)
        )
        return policy.augment_image(image, sub)

    return batch_augment_expand(samples, k, augment, state.executor)


def _ra(state, samples, offset):
    cfg = state.cfg
    k = cfg.repeat_factor

    def augment(i, copy, image):
        sub = policy.sample_ra_baseline(
            cfg.ra, policy_streams(state, "ra", (offset + i) * k + copy),
            cfg.policy.operator_subset, cfg.policy.fill,
        )
        return policy.augment_image(image, sub)

    return batch_augment_expand(samples, k, augment, state.executor)


def _raw(state, samples):
    return batch_augment_expand(samples, state.cfg.repeat_factor, lambda i, copy, image: image)


def _explore_step(state, samples, offset):
    _update(state, _explore(state, samples, offset), state.acc.explore_losses)


def _refine_step(state, samples, offset):
    scores = score_batch(state, samples)
    state.acc.mis_scores.extend(scores)
    _update(state, _refine(state, samples, scores, offset), state.acc.refine_losses)


def _split(state, large_batch):
    if len(large_batch) % 2:
        raise ContractViolation(f"large batch of {len(large_batch)} samples cannot be split evenly")
    half = len(large_batch) // 2
    return _prepare(state, large_batch[:half], 0), _prepare(state, large_batch[half:], half), half


# ---------------- Iterations ----------------
def sra_iteration(state, large_batch):
    """B1: explore + update (M -> M'); B2: score with M', refine + update (M' -> M)."""
    b1, b2, half = _split(state, large_batch)
    _explore_step(state, b1, 0)
    _refine_step(state, b2, half)
    state.iteration += 1
    return state


def ablation_iteration(state, large_batch, variant):
    variant = Mode(variant)
    if variant not in ABLATION_MODES:
        raise ContractViolation(f"{variant.value} is not an ablation mode")
    if variant is Mode.ONE_BATCH:
        full = _prepare(state, large_batch, 0)
        _explore_step(state, full, 0)
        _refine_step(state, full, 0)
    else:
        b1, b2, half = _split(state, large_batch)
        if variant is Mode.NO_EXPLORE_RANDOM:
            _update(state, _raw(state, b1), state.acc.explore_losses)
            _refine_step(state, b2, half)
        elif variant is Mode.ALL_EXPLORE:
            _explore_step(state, b1, 0)
            _explore_step(state, b2, half)
        else:
            _refine_step(state, b1, 0)
            _refine_step(state, b2, half)
    state.iteration += 1
    return state


def baseline_iteration(state, large_batch):
    """RA / basic: two plain updates on the halves, same update count as SRA."""
    b1, b2, half = _split(state, large_batch)
    for samples, offset in ((b1, 0), (b2, half)):
        if state.cfg.mode is Mode.RA_BASELINE:
            batch = _ra(state, samples, offset)
        else:
            batch = _raw(state, samples)
        _update(state, batch, state.acc.explore_losses)
    state.iteration += 1
    return state


def run_iteration(state, large_batch):
    mode = state.cfg.mode
    if mode is Mode.SRA:
        return sra_iteration(state, large_batch)
    if mode in ABLATION_MODES:
        return ablation_iteration(state, large_batch, mode)
    return baseline_iteration(state, large_batch)


# ---------------- Evaluation ----------------
def evaluate(model, dataset, mean=(0.5, 0.5, 0.5), std=(0.5, 0.5, 0.5), batch_size=256):
    """Top-1 accuracy on raw images; argmax ties go to the lowest class index."""
    if len(dataset) == 0:
        return 0.0
    correct = 0
    samples = dataset.samples
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        x = net.normalize_images(np.stack([s.image.pixels for s in chunk]), mean, std, model.dtype)
        pred = net.forward(model, x).argmax(axis=1)
        correct += int((pred == np.array([s.label for s in chunk])).sum())
    return correct / len(samples)


# ---------------- Data ----------------
def _split_source(source):
    train_part, _, test_part = source.partition(";")
    return train_part.strip(), test_part.strip()


def load_datasets(data, seed=0):
    """Resolve data.source into (train, test) Datasets."""
    kind, _, rest = data.source.partition(":")
    kind = kind.strip()
    if kind == "synthetic":
        train = synthesize_dataset(seed, data.class_count, data.samples_per_class, data.image_size, "train")
        test = synthesize_dataset(seed + 1, data.class_count, data.test_samples_per_class,
                                  data.image_size, "test")
    elif kind in ("cifar10", "cifar100"):
        train_part, test_part = _split_source(rest)
        if not train_part or not test_part:
            raise ConfigError("expected '<train files>;<test files>'", key="data.source")
        train = load_cifar_files([p for p in train_part.split(",") if p], kind, "train")
        test = load_cifar_files([p for p in test_part.split(",") if p], kind, "test")
    elif kind == "ppm":
        train_part, test_part = _split_source(rest)
        if not train_part or not test_part:
            raise ConfigError("expected 'ppm:<train dir>;<test dir>'", key="data.source")
        train = load_ppm_folder(train_part, "train")
        test = load_ppm_folder(test_part, "test")
    else:
        raise ConfigError(f"unknown data source {kind!r}", key="data.source")
    return train.head(data.limit_train), test.head(data.limit_test)


# ---------------- Metrics file ----------------
def append_metrics(path, record):
    """Append one epoch row; the header goes in with the first row."""
    path = Path(path)
    first = not path.exists()
    pd.DataFrame([record.as_row()], columns=METRICS_COLUMNS).to_csv(
        path, mode="a", header=first, index=False, float_format="%.10g", na_rep=""
    )


def _write_bytes(path, data):
    with open(path, "wb") as f:
        f.write(data)


# ---------------- Outer loop ----------------
def make_state(cfg, train_set):
    h, w = train_set.samples[0].image.height, train_set.samples[0].image.width
    c = train_set.class_count
    model = net.init_model(cfg.model.arch, (h, w, 3), c, seed=cfg.seed, dtype=cfg.model.precision)
    o = cfg.optim
    optim = net.OptimState.for_model(model, base_lr=o.base_lr, momentum=o.momentum,
                                     weight_decay=o.weight_decay, label_smoothing=o.label_smoothing)
    batches = len(train_set) // cfg.large_batch_size
    schedule = net.LrSchedule(o.warmup_epochs if cfg.epochs else 0, cfg.epochs, 2 * batches, o.base_lr)
    return TrainState(model, optim, schedule, cfg, replace(cfg.mis, class_count=c))


def train(cfg, train_set, test_set, out_dir=None):
    """Run cfg.epochs epochs; returns the final checkpoint bytes and the metrics history."""
    if train_set.class_count != test_set.class_count:
        raise ConfigError(
            f"train set has {train_set.class_count} classes, test set {test_set.class_count}"
        )
    if len(train_set) == 0:
        raise ConfigError("training set is empty", key="data.source")
    batches = len(train_set) // cfg.large_batch_size
    if cfg.epochs and batches == 0:
        raise ConfigError(
            f"{len(train_set)} training samples do not fill one large batch of {cfg.large_batch_size}",
            key="trainer.large_batch_size",
        )
    state = make_state(cfg, train_set)
    metrics_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = Path(out_dir) / METRICS_FILE
        if metrics_path.exists():
            metrics_path.unlink()

    log.info("training started", mode=cfg.mode.value, epochs=cfg.epochs, train=len(train_set),
             test=len(test_set), large_batch=cfg.large_batch_size, seed=cfg.seed)
    history = []
    executor = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    state.executor = executor
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            state.epoch, state.iteration, state.acc = epoch, 0, EpochAccumulator()
            order = derive_stream(cfg.seed, epoch, 0, 0, "shuffle").permutation(len(train_set))
            for b in range(batches):
                idx = order[b * cfg.large_batch_size:(b + 1) * cfg.large_batch_size]
                run_iteration(state, [train_set.samples[i] for i in idx])
            test_acc = None
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                test_acc = evaluate(state.model, test_set, cfg.data.mean, cfg.data.std)
            elapsed = time.perf_counter() - t0
            record = MetricsRecord(
                epoch=epoch,
                explore_loss=_mean(state.acc.explore_losses),
                refine_loss=_mean(state.acc.refine_losses),
                mean_mis=_mean(state.acc.mis_scores),
                lr=state.lr,
                test_acc=test_acc,
                seconds=elapsed if cfg.wall_clock else None,
            )
            history.append(record)
            if metrics_path is not None:
                append_metrics(metrics_path, record)
            log.info("epoch finished", epoch=epoch, explore_loss=record.explore_loss,
                     refine_loss=record.refine_loss, mean_mis=record.mean_mis, lr=record.lr,
                     test_acc=test_acc, seconds=round(elapsed, 3))
    finally:
        if executor is not None:
            executor.shutdown()
        state.executor = None

    checkpoint = net.save_checkpoint(state.model, state.optim)
    if out_dir is not None:
        _write_bytes(Path(out_dir) / CHECKPOINT_FILE, checkpoint)
    return TrainResult(checkpoint, history, state.model, state.optim)


def expected_updates(cfg, n_samples):
    """Weight updates for a full run: 2 per large batch."""
    return 2 * cfg.epochs * (n_samples // cfg.large_batch_size)

