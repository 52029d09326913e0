# backend/policy.py
"""Sub-policy sampling: exploration, refinement and RandAugment baselines."""
from dataclasses import dataclass

from backend.augment_ops import ALL_KINDS, DEFAULT_FILL, OpApplication, OpKind, apply_op
from backend.errors import ContractViolation, require
from backend.rng import derive_stream

RA_MAX_LEVEL = 30.0


@dataclass(frozen=True)
class PolicyConfig:
    depth: int = 2
    operator_subset: tuple = ALL_KINDS
    fill: tuple = DEFAULT_FILL

    def __post_init__(self):
        object.__setattr__(self, "operator_subset", tuple(OpKind(k) for k in self.operator_subset))
        object.__setattr__(self, "fill", tuple(int(v) for v in self.fill))
        require(int(self.depth) >= 1, f"policy.depth must be >= 1, got {self.depth}")
        require(len(self.operator_subset) > 0, "policy.operators must not be empty")
        require(len(self.fill) == 3 and all(0 <= v <= 255 for v in self.fill),
                f"policy.fill must be a byte triple, got {self.fill}")


@dataclass(frozen=True)
class RaBaselineConfig:
    """RandAugment (N, M) with optional magnitude noise (sigma > 0 is the timm variant)."""

    n_ops: int = 2
    magnitude_level: float = 9.0
    magnitude_std: float = 0.0

    def __post_init__(self):
        require(int(self.n_ops) >= 1, f"ra.n_ops must be >= 1, got {self.n_ops}")
        require(0.0 <= self.magnitude_level <= RA_MAX_LEVEL,
                f"ra.magnitude must be in [0, 30], got {self.magnitude_level}")
        require(self.magnitude_std >= 0.0, f"ra.magnitude_std must be >= 0, got {self.magnitude_std}")


@dataclass(frozen=True)
class SubPolicy:
    apps: tuple

    def __post_init__(self):
        object.__setattr__(self, "apps", tuple(self.apps))

    def __len__(self):
        return len(self.apps)

    @property
    def kinds(self):
        return tuple(a.kind for a in self.apps)

    @property
    def signs(self):
        return tuple(a.sign for a in self.apps)

    @property
    def magnitudes(self):
        return tuple(a.magnitude for a in self.apps)


@dataclass(frozen=True)
class PolicyStreams:
    """Kind/sign draws and magnitude draws come from separate streams."""

    kinds: object
    magnitudes: object

    @classmethod
    def derive(cls, seed, epoch=0, iteration=0, sample_index=0, purpose="policy"):
        return cls(
            kinds=derive_stream(seed, epoch, iteration, sample_index, f"{purpose}/kinds"),
            magnitudes=derive_stream(seed, epoch, iteration, sample_index, f"{purpose}/magnitudes"),
        )


def _draw_kinds_and_signs(subset, count, rng):
    out = []
    for _ in range(count):
        kind = subset[int(rng.integers(0, len(subset)))]
        sign = 1 if rng.random() < 0.5 else -1
        out.append((kind, sign))
    return out


def sample_explore(cfg, streams):
    """Step 1: uniform kinds with replacement, m ~ U(0, 1) per operator, random signs."""
    picks = _draw_kinds_and_signs(cfg.operator_subset, cfg.depth, streams.kinds)
    return SubPolicy(
        OpApplication(kind, float(streams.magnitudes.random()), sign, cfg.fill)
        for kind, sign in picks
    )


def sample_refine(cfg, mis, streams):
    """Step 3: same kind/sign draws as exploration, every magnitude = the sample's MIS."""
    if not 0.0 <= mis <= 1.0:
        raise ContractViolation(f"MIS {mis} outside [0, 1]")
    picks = _draw_kinds_and_signs(cfg.operator_subset, cfg.depth, streams.kinds)
    return SubPolicy(OpApplication(kind, float(mis), sign, cfg.fill) for kind, sign in picks)


def sample_ra_baseline(cfg, streams, subset=ALL_KINDS, fill=DEFAULT_FILL):
    picks = _draw_kinds_and_signs(tuple(subset), cfg.n_ops, streams.kinds)
    apps = []
    for kind, sign in picks:
        level = cfg.magnitude_level
        if cfg.magnitude_std > 0:
            level = level + cfg.magnitude_std * float(streams.magnitudes.standard_normal())
        m = min(1.0, max(0.0, level / RA_MAX_LEVEL))
        apps.append(OpApplication(kind, m, sign, fill))
    return SubPolicy(apps)


def augment_image(img, sub):
    for app in sub.apps:
        img = apply_op(img, app)
    return img


def operator_ablation_subsets(kinds=ALL_KINDS):
    """Leave-one-out operator sets, one per kind."""
    return [(kind, tuple(k for k in kinds if k is not kind)) for kind in kinds]
