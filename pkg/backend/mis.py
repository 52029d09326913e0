# backend/mis.py
"""Magnitude Instructor Score: per-sample difficulty in [0, 1], high = easy."""
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from backend.errors import ContractViolation, require

SQRT2 = math.sqrt(2.0)


class Scorer(str, Enum):
    COSINE_GAMMA = "cosine_gamma"
    EUCLIDEAN = "euclidean"
    JACCARD = "jaccard"


@dataclass(frozen=True)
class MisConfig:
    scorer: Scorer = Scorer.COSINE_GAMMA
    epsilon: float = 2.0
    class_count: int = 10
    gamma: float = None  # None: gamma_for_task(epsilon, class_count)

    def __post_init__(self):
        object.__setattr__(self, "scorer", Scorer(self.scorer))
        require(self.epsilon >= 0.0, f"mis.epsilon must be >= 0 (epsilon >= 0), got {self.epsilon}")
        require(self.class_count >= 2, f"class count must be >= 2, got {self.class_count}")
        require(self.gamma is None or self.gamma >= 0.0, f"mis.gamma must be >= 0, got {self.gamma}")


def gamma_for_task(epsilon, class_count):
    """gamma = epsilon / ln(c): uniform predictions score exp(-epsilon / 2) for every c."""
    if class_count < 2:
        raise ContractViolation(f"class count must be >= 2, got {class_count}")
    if epsilon < 0:
        raise ContractViolation(f"epsilon must be >= 0, got {epsilon}")
    return float(epsilon) / math.log(class_count)


def resolve_gamma(cfg):
    if cfg.gamma is not None:
        return float(cfg.gamma)
    return gamma_for_task(cfg.epsilon, cfg.class_count)


def _clamp01(x):
    return min(1.0, max(0.0, float(x)))


def cosine_mis(p, target, gamma):
    require(gamma >= 0, f"gamma must be >= 0, got {gamma}")
    p = np.asarray(p, dtype=np.float64)
    norm = float(np.sqrt(np.dot(p, p)))
    if norm == 0.0:
        return 0.0
    cos = float(p[target]) / norm
    # 0 ** 0 == 1 in Python, which is the convention we want
    return _clamp01(cos ** gamma)


def euclidean_mis(p, target):
    p = np.asarray(p, dtype=np.float64)
    diff = p.copy()
    diff[target] -= 1.0
    return _clamp01(1.0 - float(np.sqrt(np.dot(diff, diff))) / SQRT2)


def jaccard_mis(p, target):
    p = np.asarray(p, dtype=np.float64)
    onehot = np.zeros_like(p)
    onehot[target] = 1.0
    num = float(np.minimum(p, onehot).sum())
    den = float(np.maximum(p, onehot).sum())
    return _clamp01(num / den) if den > 0 else 0.0


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def score_probabilities(p, target, cfg):
    if cfg.scorer is Scorer.COSINE_GAMMA:
        return cosine_mis(p, target, resolve_gamma(cfg))
    if cfg.scorer is Scorer.EUCLIDEAN:
        return euclidean_mis(p, target)
    return jaccard_mis(p, target)


def compute_mis(logits, target, cfg):
    """Softmax the logits and score them against the one-hot target."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.shape[0] != cfg.class_count:
        raise ContractViolation(
            f"expected {cfg.class_count} logits, got shape {logits.shape}"
        )
    if not 0 <= int(target) < cfg.class_count:
        raise ContractViolation(f"target {target} outside [0, {cfg.class_count})")
    return score_probabilities(softmax(logits), int(target), cfg)
