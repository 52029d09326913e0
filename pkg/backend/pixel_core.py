# backend/pixel_core.py
"""Image / dataset types, CIFAR binary ingestion, PPM I/O and the synthetic set."""
import colorsys
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from backend.errors import ContractViolation, CorruptRecordError, MalformedInputError, require
from backend.log_utils import get_logger

log = get_logger(__name__)

CHANNELS = 3
CIFAR_SIDE = 32
CIFAR_PIXELS = CIFAR_SIDE * CIFAR_SIDE * CHANNELS
CIFAR_FORMATS = {
    # format: (label bytes per record, index of the label we keep, class count)
    "cifar10": (1, 0, 10),
    "cifar100": (2, 1, 100),
}


# ---------------- Types ----------------
@dataclass(frozen=True, eq=False)
class Image:
    """H×W×3 uint8 pixels, interleaved RGB, row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.dtype != np.uint8:
            raise ContractViolation("Image pixels must be a uint8 array")
        if px.ndim != 3 or px.shape[2] != CHANNELS or px.shape[0] < 1 or px.shape[1] < 1:
            raise ContractViolation(f"Image pixels must have shape (H, W, 3), got {px.shape}")
        px.flags.writeable = False

    @classmethod
    def from_bytes(cls, data, width, height):
        arr = np.frombuffer(bytes(data), dtype=np.uint8)
        if arr.size != width * height * CHANNELS:
            raise ContractViolation(
                f"expected {width * height * CHANNELS} bytes for {width}x{height}, got {arr.size}"
            )
        return cls(arr.reshape(height, width, CHANNELS).copy())

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def channels(self):
        return CHANNELS

    @property
    def data(self):
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True)
class LabeledImage:
    image: Image
    label: int


@dataclass(frozen=True)
class Dataset:
    samples: tuple
    class_count: int
    split: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        require(self.class_count >= 2, f"class_count must be >= 2, got {self.class_count}")
        require(self.split in ("train", "test"), f"split must be train|test, got {self.split!r}")
        for s in self.samples:
            require(0 <= s.label < self.class_count, f"label {s.label} outside [0, {self.class_count})")

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self):
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def image_stack(self):
        """All images as one (N, H, W, 3) uint8 array."""
        return np.stack([s.image.pixels for s in self.samples])

    def head(self, n):
        """Deterministic prefix subset (n=None keeps everything)."""
        if n is None or n >= len(self.samples):
            return self
        return Dataset(self.samples[:n], self.class_count, self.split)


# ---------------- CIFAR binary ----------------
def load_cifar_batch(raw, fmt="cifar10", split="train"):
    """Parse CIFAR-10/100 binary records; planar R,G,B converted to interleaved."""
    if fmt not in CIFAR_FORMATS:
        raise MalformedInputError(f"unknown CIFAR format {fmt!r}")
    n_label, keep, class_count = CIFAR_FORMATS[fmt]
    record = n_label + CIFAR_PIXELS
    raw = bytes(raw)
    if len(raw) % record:
        raise MalformedInputError(
            f"{fmt} stream of {len(raw)} bytes is not a multiple of the {record}-byte record"
        )
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
    labels = rows[:, keep].astype(np.int64)
    bad = np.nonzero(labels >= class_count)[0]
    if bad.size:
        i = int(bad[0])
        raise CorruptRecordError(f"record {i}: label byte {labels[i]} >= {class_count}")
    planes = rows[:, n_label:].reshape(-1, CHANNELS, CIFAR_SIDE, CIFAR_SIDE)
    images = np.ascontiguousarray(planes.transpose(0, 2, 3, 1))
    samples = [LabeledImage(Image(images[i].copy()), int(labels[i])) for i in range(len(rows))]
    log.debug("cifar batch loaded", fmt=fmt, samples=len(samples))
    return Dataset(samples, class_count, split)


def load_cifar_files(paths, fmt="cifar10", split="train"):
    """Concatenate several CIFAR binary files into one Dataset."""
    chunks = []
    for p in paths:
        with open(p, "rb") as f:
            chunks.append(f.read())
    return load_cifar_batch(b"".join(chunks), fmt, split)


# ---------------- PPM (P6) ----------------
_PPM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _ppm_header(buf):
    """Return (tokens[magic, w, h, maxval], payload offset)."""
    tokens, pos = [], 0
    for _ in range(4):
        m = _PPM_TOKEN.match(buf, pos)
        if not m:
            raise MalformedInputError("truncated PPM header")
        tokens.append(m.group(1))
        pos = m.end()
    if pos >= len(buf) or buf[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedInputError("PPM header must end with a single whitespace byte")
    return tokens, pos + 1


def load_ppm(data):
    buf = bytes(data)
    if not buf.startswith(b"P6"):
        raise MalformedInputError(f"not a binary PPM (magic {buf[:2]!r})")
    tokens, offset = _ppm_header(buf)
    if tokens[0] != b"P6":
        raise MalformedInputError(f"not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise MalformedInputError(f"bad PPM header: {e}") from None
    if width < 1 or height < 1:
        raise MalformedInputError(f"bad PPM size {width}x{height}")
    if maxval != 255:
        raise MalformedInputError(f"PPM maxval must be 255, got {maxval}")
    need = width * height * CHANNELS
    payload = buf[offset:offset + need]
    if len(payload) < need:
        raise MalformedInputError(f"truncated PPM payload: {len(payload)} of {need} bytes")
    return Image.from_bytes(payload, width, height)


def save_ppm(img):
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + img.data


def read_ppm_file(path):
    with open(path, "rb") as f:
        return load_ppm(f.read())


def write_ppm_file(path, img):
    with open(path, "wb") as f:
        f.write(save_ppm(img))


def list_ppm_files(folder):
    return sorted(p for p in Path(folder).iterdir() if p.suffix.lower() == ".ppm" and p.is_file())


def load_ppm_folder(root, split="train"):
    """One subdirectory per class (sorted names → class index), *.ppm samples inside."""
    root = Path(root)
    if not root.is_dir():
        raise MalformedInputError(f"PPM dataset root {root} is not a directory")
    classes = sorted(d.name for d in root.iterdir() if d.is_dir())
    if len(classes) < 2:
        raise MalformedInputError(f"{root}: need at least 2 class folders, found {len(classes)}")
    samples = []
    for label, name in enumerate(classes):
        for p in list_ppm_files(root / name):
            samples.append(LabeledImage(read_ppm_file(p), label))
    log.info("ppm folder loaded", root=os.fspath(root), classes=len(classes), samples=len(samples))
    return Dataset(samples, len(classes), split)


# ---------------- Synthetic dataset ----------------
SHAPES = ("disk", "square", "triangle", "cross")


def _shape_mask(shape, size, cx, cy, r):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    if shape == "disk":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        return (np.abs(dx) <= r * 0.8) & (np.abs(dy) <= r * 0.8)
    if shape == "triangle":
        # apex up, base at cy + r
        return (dy <= r) & (dy >= -r) & (np.abs(dx) <= (dy + r) * 0.5)
    # cross
    arm = max(r * 0.3, 1.0)
    return ((np.abs(dx) <= arm) & (np.abs(dy) <= r)) | ((np.abs(dy) <= arm) & (np.abs(dx) <= r))


def class_color(label, class_count):
    r, g, b = colorsys.hsv_to_rgb(label / class_count, 0.9, 0.95)
    return np.array([r, g, b]) * 255.0


def synthesize_dataset(seed, class_count, samples_per_class, size=32, split="train"):
    """Deterministic toy set: class index picks hue and shape, drawn on noise."""
    require(class_count >= 2, f"class_count must be >= 2, got {class_count}")
    require(samples_per_class >= 0, "samples_per_class must be >= 0")
    require(size >= 4, f"size must be >= 4, got {size}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) % 2**64, class_count, size]))
    samples = []
    for label in range(class_count):
        color = class_color(label, class_count)
        shape = SHAPES[label % len(SHAPES)]
        for _ in range(samples_per_class):
            background = rng.normal(96.0, 28.0, size=(size, size, CHANNELS))
            r = size * rng.uniform(0.22, 0.32)
            cx = size / 2 + rng.uniform(-0.12, 0.12) * size
            cy = size / 2 + rng.uniform(-0.12, 0.12) * size
            mask = _shape_mask(shape, size, cx, cy, r)
            fg = color + rng.normal(0.0, 12.0, size=(size, size, CHANNELS))
            canvas = np.where(mask[..., None], fg, background)
            px = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
            samples.append(LabeledImage(Image(px), label))
    return Dataset(samples, class_count, split)


# ---------------- Basic preprocessing ----------------
def crop_flip(img, rng, pad=4):
    """Zero-pad, random crop back to H×W, horizontal flip with probability 1/2."""
    h, w = img.height, img.width
    if pad > 0:
        padded = np.pad(img.pixels, ((pad, pad), (pad, pad), (0, 0)))
        top = int(rng.integers(0, 2 * pad + 1))
        left = int(rng.integers(0, 2 * pad + 1))
        out = padded[top:top + h, left:left + w]
    else:
        out = img.pixels
    if rng.random() < 0.5:
        out = out[:, ::-1]
    return Image(np.ascontiguousarray(out))
