# backend/config.py
"""Flat `key = value` run configuration.

Defaults < file values < command-line overrides. Unknown keys are errors.
"""
from dataclasses import dataclass, replace

from backend.augment_ops import ALL_KINDS, OpKind
from backend.errors import ConfigError, LabError
from backend.mis import Scorer
from backend.trainer import DataConfig, Mode, ModelConfig, OptimConfig, TrainConfig

SECTIONS = ("policy", "ra", "mis", "optim", "data", "model")


# ---------------- Value codecs ----------------
def _int(text):
    return int(text.strip())


def _float(text):
    return float(text.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _optional_int(text):
    t = text.strip().lower()
    return None if t in ("", "none", "all") else int(t)


def _optional_float(text):
    t = text.strip().lower()
    return None if t in ("", "auto", "none") else float(t)


def _triple(cast):
    def parse(text):
        parts = [p for p in text.replace(",", " ").split() if p]
        if len(parts) != 3:
            raise ValueError(f"expected 3 values, got {len(parts)}")
        return tuple(cast(p) for p in parts)
    return parse


def _operators(text):
    t = text.strip()
    if t.lower() in ("", "all"):
        return ALL_KINDS
    return tuple(OpKind.parse(p) for p in t.split(",") if p.strip())


def _str(text):
    return text.strip()


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, OpKind):
        return value.value
    if isinstance(value, (Mode, Scorer)):
        return value.value
    if isinstance(value, tuple):
        if value and isinstance(value[0], OpKind):
            return "all" if value == ALL_KINDS else ",".join(k.value for k in value)
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Key:
    name: str          # dotted key
    target: tuple      # (section or None, field)
    parse: object
    doc: str


KEYS = [
    Key("seed", (None, "seed"), _int, "all randomness flows from this seed"),
    Key("trainer.mode", (None, "mode"), lambda t: Mode(t.strip()),
        "sra | ra_baseline | basic | ablation-{no_explore_random,all_explore,all_refine,one_batch}"),
    Key("trainer.epochs", (None, "epochs"), _int, "training epochs"),
    Key("trainer.large_batch_size", (None, "large_batch_size"), _int,
        "2B: split into two sub-batches of B (even)"),
    Key("trainer.repeat_factor", (None, "repeat_factor"), _int, "Batch Augment copies per sample (K)"),
    Key("trainer.eval_every", (None, "eval_every"), _int, "evaluate on the test set every N epochs"),
    Key("trainer.threads", (None, "threads"), _int, "augmentation worker threads (output is identical)"),
    Key("trainer.wall_clock", (None, "wall_clock"), _bool,
        "write elapsed seconds to metrics (breaks bit-identical metrics files)"),
    Key("policy.depth", ("policy", "depth"), _int, "operators per sub-policy (D >= 1)"),
    Key("policy.operators", ("policy", "operator_subset"), _operators,
        "comma-separated operator names or 'all'"),
    Key("policy.fill", ("policy", "fill"), _triple(int), "fill color for pixels warped in from outside"),
    Key("ra.n_ops", ("ra", "n_ops"), _int, "RandAugment N"),
    Key("ra.magnitude", ("ra", "magnitude_level"), _float, "RandAugment M in [0, 30]"),
    Key("ra.magnitude_std", ("ra", "magnitude_std"), _float, "std of M (0 = plain RA, 0.5 = timm variant)"),
    Key("mis.scorer", ("mis", "scorer"), lambda t: Scorer(t.strip()), "cosine_gamma | euclidean | jaccard"),
    Key("mis.epsilon", ("mis", "epsilon"), _float, "epsilon >= 0; gamma = epsilon / ln(c)"),
    Key("mis.gamma", ("mis", "gamma"), _optional_float, "fixed gamma overriding epsilon ('auto' = off)"),
    Key("optim.base_lr", ("optim", "base_lr"), _float, "peak learning rate"),
    Key("optim.momentum", ("optim", "momentum"), _float, "SGD momentum"),
    Key("optim.weight_decay", ("optim", "weight_decay"), _float, "L2 weight decay"),
    Key("optim.label_smoothing", ("optim", "label_smoothing"), _float, "label smoothing in [0, 1)"),
    Key("optim.warmup_epochs", ("optim", "warmup_epochs"), _int, "linear warmup epochs before cosine decay"),
    Key("data.source", ("data", "source"), _str,
        "synthetic | cifar10:<train,...>;<test,...> | cifar100:... | ppm:<train dir>;<test dir>"),
    Key("data.class_count", ("data", "class_count"), _int, "synthetic classes"),
    Key("data.samples_per_class", ("data", "samples_per_class"), _int, "synthetic train samples per class"),
    Key("data.test_samples_per_class", ("data", "test_samples_per_class"), _int,
        "synthetic test samples per class"),
    Key("data.image_size", ("data", "image_size"), _int, "synthetic image side in pixels"),
    Key("data.limit_train", ("data", "limit_train"), _optional_int, "keep the first N train samples"),
    Key("data.limit_test", ("data", "limit_test"), _optional_int, "keep the first N test samples"),
    Key("data.basic_transform", ("data", "basic_transform"), _str, "none | crop_flip"),
    Key("data.mean", ("data", "mean"), _triple(float), "per-channel normalization mean"),
    Key("data.std", ("data", "std"), _triple(float), "per-channel normalization std"),
    Key("model.arch", ("model", "arch"), _str, "layer list; a bare final 'linear' has c outputs"),
    Key("model.precision", ("model", "precision"), _str, "float32 | float64"),
]
KEY_INDEX = {k.name: k for k in KEYS}


# ---------------- Parsing ----------------
def parse_lines(text):
    """-> list of (line number, key, raw value)."""
    out = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError("expected 'key = value'", line=n)
        out.append((n, key.strip(), value.strip()))
    return out


def _decode(name, value, line=None):
    key = KEY_INDEX.get(name)
    if key is None:
        raise ConfigError("unknown key", key=name, line=line)
    try:
        return key.parse(value)
    except (ValueError, LabError) as e:
        raise ConfigError(f"cannot parse {value!r}: {e}", key=name, line=line) from None


def _build(values):
    """values: {dotted name: (decoded value, line)} -> TrainConfig (invariants checked)."""
    sections = {s: {} for s in SECTIONS}
    top = {}
    origin = {}
    for name, (value, line) in values.items():
        section, fld = KEY_INDEX[name].target
        (sections[section] if section else top)[fld] = value
        origin[(section, fld)] = (name, line)

    def build(base, section):
        try:
            return replace(base, **sections[section])
        except LabError as e:
            name, line = _blame(e, section, sections[section], origin)
            raise ConfigError(str(e), key=name, line=line) from None

    defaults = TrainConfig()
    parts = {
        "policy": build(defaults.policy, "policy"),
        "ra": build(defaults.ra, "ra"),
        "mis": build(defaults.mis, "mis"),
        "optim": build(defaults.optim, "optim"),
        "data": build(defaults.data, "data"),
        "model": build(defaults.model, "model"),
    }
    try:
        return replace(defaults, **parts, **top)
    except LabError as e:
        name, line = _blame(e, None, top, origin)
        raise ConfigError(str(e), key=name, line=line) from None


def _blame(error, section, fields, origin):
    """Best guess at which key an invariant message is about."""
    message = str(error)
    for fld in fields:
        name, line = origin[(section, fld)]
        if name in message:
            return name, line
    for fld in fields:
        name, line = origin[(section, fld)]
        if fld in message:
            return name, line
    return None, None


def parse_config(text, overrides=None):
    """Config text (+ {key: raw value} overrides, which win) -> TrainConfig."""
    values = {}
    for line, name, raw in parse_lines(text):
        values[name] = (_decode(name, raw, line), line)
    for name, raw in (overrides or {}).items():
        values[name] = (_decode(name, str(raw)), None)
    return _build(values)


def get_value(cfg, name):
    section, fld = KEY_INDEX[name].target
    holder = getattr(cfg, section) if section else cfg
    return getattr(holder, fld)


def dump_config(cfg):
    """Every key with its current value; re-parses to an equal TrainConfig."""
    lines = ["# SRA lab run configuration", ""]
    for key in KEYS:
        lines.append(f"# {key.doc}")
        value = get_value(cfg, key.name)
        text = "auto" if key.name == "mis.gamma" and value is None else _fmt(value)
        lines.append(f"{key.name} = {text}")
    return "\n".join(lines) + "\n"


def split_override_args(args):
    """['--mis.epsilon', '4', '--policy.depth=3'] -> {'mis.epsilon': '4', 'policy.depth': '3'}."""
    out, i = {}, 0
    while i < len(args):
        arg = args[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}")
        name = arg[2:]
        if "=" in name:
            name, value = name.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(args):
                raise ConfigError("missing value", key=name)
            value = args[i + 1]
            i += 2
        if name not in KEY_INDEX:
            raise ConfigError("unknown key", key=name)
        out[name] = value
    return out
