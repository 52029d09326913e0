# backend/augment_ops.py
"""The 14 candidate operators with continuous magnitude m in [0, 1].

Pixel semantics follow the PIL conventions most RandAugment code is built on,
but every kernel is written out here so results are bit-exact and testable.
"""
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from backend.errors import ContractViolation, require
from backend.pixel_core import Image

DEFAULT_FILL = (128, 128, 128)

# ---------------- Valid ranges (m = 1 end) ----------------
SHEAR_MAX = 0.3
TRANSLATE_MAX = 0.45
ROTATE_MAX_DEG = 30.0
ENHANCE_MAX = 0.9
POSTERIZE_MAX_DROP = 4

LUMA = np.array([0.299, 0.587, 0.114])
SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


class OpKind(str, Enum):
    SHEAR_X = "ShearX"
    SHEAR_Y = "ShearY"
    TRANSLATE_X = "TranslateX"
    TRANSLATE_Y = "TranslateY"
    ROTATE = "Rotate"
    BRIGHTNESS = "Brightness"
    COLOR = "Color"
    SHARPNESS = "Sharpness"
    CONTRAST = "Contrast"
    SOLARIZE = "Solarize"
    POSTERIZE = "Posterize"
    EQUALIZE = "Equalize"
    AUTO_CONTRAST = "AutoContrast"
    IDENTITY = "Identity"

    @property
    def signed(self):
        return self in SIGNED_KINDS

    @property
    def parameterless(self):
        return self in PARAMETERLESS_KINDS

    @property
    def geometric(self):
        return self in GEOMETRIC_KINDS

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ContractViolation(f"unknown operator {name!r}")


ALL_KINDS = tuple(OpKind)
GEOMETRIC_KINDS = frozenset(
    {OpKind.SHEAR_X, OpKind.SHEAR_Y, OpKind.TRANSLATE_X, OpKind.TRANSLATE_Y, OpKind.ROTATE}
)
SIGNED_KINDS = GEOMETRIC_KINDS
ENHANCE_KINDS = frozenset({OpKind.BRIGHTNESS, OpKind.COLOR, OpKind.SHARPNESS, OpKind.CONTRAST})
PARAMETERLESS_KINDS = frozenset({OpKind.EQUALIZE, OpKind.AUTO_CONTRAST, OpKind.IDENTITY})


@dataclass(frozen=True)
class OpApplication:
    kind: OpKind
    magnitude: float = 0.0
    sign: int = 1
    fill: tuple = DEFAULT_FILL

    def __post_init__(self):
        require(isinstance(self.kind, OpKind), f"kind must be an OpKind, got {self.kind!r}")
        require(0.0 <= self.magnitude <= 1.0, f"magnitude {self.magnitude} outside [0, 1]")
        require(self.sign in (1, -1), f"sign must be +1 or -1, got {self.sign}")
        require(len(self.fill) == 3 and all(0 <= int(v) <= 255 for v in self.fill),
                f"fill must be a byte triple, got {self.fill}")


# ---------------- Numeric helpers ----------------
def round_half_away(x):
    """Round half away from zero (np.rint would round half to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_bytes(x):
    return np.clip(round_half_away(x), 0, 255).astype(np.uint8)


def map_magnitude(kind, m, sign=1):
    """Map m in [0, 1] (and a sign for signed kinds) to the operator's native parameter."""
    kind = OpKind(kind)
    if not 0.0 <= m <= 1.0:
        raise ContractViolation(f"magnitude {m} outside [0, 1]")
    s = sign if kind.signed else 1
    if kind in (OpKind.SHEAR_X, OpKind.SHEAR_Y):
        return s * SHEAR_MAX * m
    if kind in (OpKind.TRANSLATE_X, OpKind.TRANSLATE_Y):
        return s * TRANSLATE_MAX * m
    if kind is OpKind.ROTATE:
        return s * ROTATE_MAX_DEG * m
    if kind in ENHANCE_KINDS:
        return 1.0 + sign * ENHANCE_MAX * m
    if kind is OpKind.SOLARIZE:
        return int(round_half_away(256.0 * (1.0 - m)))
    if kind is OpKind.POSTERIZE:
        return 8 - int(round_half_away(POSTERIZE_MAX_DROP * m))
    return None


# ---------------- Affine warp ----------------
def affine_matrix(kind, param, width, height):
    """Forward 2x3 matrix [A | t] (about the image center) for a geometric kind."""
    if kind is OpKind.SHEAR_X:
        return np.array([[1.0, param, 0.0], [0.0, 1.0, 0.0]])
    if kind is OpKind.SHEAR_Y:
        return np.array([[1.0, 0.0, 0.0], [param, 1.0, 0.0]])
    if kind is OpKind.TRANSLATE_X:
        return np.array([[1.0, 0.0, float(int(param * width))], [0.0, 1.0, 0.0]])
    if kind is OpKind.TRANSLATE_Y:
        return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, float(int(param * height))]])
    if kind is OpKind.ROTATE:
        theta = math.radians(param)
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, -s, 0.0], [s, c, 0.0]])
    raise ContractViolation(f"{kind} is not a geometric operator")


def inverse_coefficients(matrix):
    """(ia, ib, ic, id, tx, ty): the inverted linear part plus the translation."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (2, 3):
        raise ContractViolation(f"affine matrix must be 2x3, got {m.shape}")
    a, b, tx = (float(v) for v in m[0])
    c, d, ty = (float(v) for v in m[1])
    det = a * d - b * c
    if det == 0.0 or not math.isfinite(det):
        raise ContractViolation("affine matrix has a singular linear part")
    return d / det, -b / det, -c / det, a / det, tx, ty


def is_identity_matrix(matrix):
    return np.array_equal(np.asarray(matrix, dtype=np.float64), np.array([[1.0, 0, 0], [0, 1.0, 0]]))


def affine_warp(img, matrix, fill=DEFAULT_FILL):
    """Inverse-mapping bilinear warp about ((W-1)/2, (H-1)/2)."""
    ia, ib, ic, id_, tx, ty = inverse_coefficients(matrix)
    if is_identity_matrix(matrix):
        return Image(img.pixels.copy())
    h, w = img.height, img.width
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    oy, ox = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = ox - cx - tx
    dy = oy - cy - ty
    xs = ia * dx + ib * dy + cx
    ys = ic * dx + id_ * dy + cy
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    src = img.pixels.astype(np.float64)
    fill_px = np.asarray(fill, dtype=np.float64)

    def tap(yy, xx):
        inside = (xx >= 0) & (xx <= w - 1) & (yy >= 0) & (yy <= h - 1)
        vals = src[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(inside[..., None], vals, fill_px)

    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    out = (
        w00[..., None] * tap(y0, x0)
        + w01[..., None] * tap(y0, x0 + 1)
        + w10[..., None] * tap(y0 + 1, x0)
        + w11[..., None] * tap(y0 + 1, x0 + 1)
    )
    return Image(to_bytes(out))


def reference_warp(img, matrix, fill=DEFAULT_FILL):
    """Per-pixel inverse mapping, same arithmetic order as affine_warp. Slow."""
    ia, ib, ic, id_, tx, ty = inverse_coefficients(matrix)
    if is_identity_matrix(matrix):
        return Image(img.pixels.copy())
    h, w = img.height, img.width
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    src = img.pixels
    out = np.zeros_like(src)
    for y in range(h):
        for x in range(w):
            dx = float(x) - cx - tx
            dy = float(y) - cy - ty
            xs = ia * dx + ib * dy + cx
            ys = ic * dx + id_ * dy + cy
            x0, y0 = math.floor(xs), math.floor(ys)
            fx, fy = xs - x0, ys - y0
            weights = (
                ((1.0 - fx) * (1.0 - fy), y0, x0),
                (fx * (1.0 - fy), y0, x0 + 1),
                ((1.0 - fx) * fy, y0 + 1, x0),
                (fx * fy, y0 + 1, x0 + 1),
            )
            for ch in range(3):
                acc = 0.0
                for wt, yy, xx in weights:
                    if 0 <= xx <= w - 1 and 0 <= yy <= h - 1:
                        v = float(src[yy, xx, ch])
                    else:
                        v = float(fill[ch])
                    acc = acc + wt * v
                r = math.floor(abs(acc) + 0.5) * (1 if acc > 0 else -1 if acc < 0 else 0)
                out[y, x, ch] = min(255, max(0, r))
    return Image(out)


# ---------------- Enhancement blend ----------------
def blend(img, degenerate, f):
    if (img.height, img.width) != (degenerate.height, degenerate.width):
        raise ContractViolation(
            f"blend size mismatch: {img.width}x{img.height} vs {degenerate.width}x{degenerate.height}"
        )
    if f == 1.0:
        return Image(img.pixels.copy())
    d = degenerate.pixels.astype(np.float64)
    out = d + f * (img.pixels.astype(np.float64) - d)
    return Image(to_bytes(out))


def luma(img):
    return img.pixels.astype(np.float64) @ LUMA


def grayscale(img):
    gray = to_bytes(luma(img))
    return Image(np.repeat(gray[..., None], 3, axis=2))


def degenerate_for(kind, img):
    if kind is OpKind.BRIGHTNESS:
        return Image(np.zeros_like(img.pixels))
    if kind is OpKind.COLOR:
        return grayscale(img)
    if kind is OpKind.CONTRAST:
        mean = int(round_half_away(luma(img).mean()))
        return Image(np.full_like(img.pixels, mean))
    if kind is OpKind.SHARPNESS:
        return smooth(img)
    raise ContractViolation(f"{kind} has no blend degenerate")


def smooth(img):
    """3x3 smoothing kernel on the interior; border pixels kept."""
    h, w = img.height, img.width
    if h < 3 or w < 3:
        return Image(img.pixels.copy())
    src = img.pixels.astype(np.float64)
    acc = np.zeros((h - 2, w - 2, 3))
    for ky in range(3):
        for kx in range(3):
            acc += SMOOTH_KERNEL[ky, kx] * src[ky:ky + h - 2, kx:kx + w - 2]
    out = img.pixels.copy()
    out[1:-1, 1:-1] = to_bytes(acc)
    return Image(out)


# ---------------- Histogram / LUT operators ----------------
def equalize(img):
    out = img.pixels.copy()
    for ch in range(3):
        plane = img.pixels[..., ch]
        hist = np.bincount(plane.ravel(), minlength=256)
        nonzero = np.nonzero(hist)[0]
        step = (int(hist.sum()) - int(hist[nonzero[-1]])) // 255
        if step == 0:
            continue
        before = np.concatenate(([0], np.cumsum(hist)[:-1]))
        lut = np.clip((before + step // 2) // step, 0, 255).astype(np.uint8)
        out[..., ch] = lut[plane]
    return Image(out)


def autocontrast(img):
    out = img.pixels.copy()
    for ch in range(3):
        plane = img.pixels[..., ch].astype(np.int64)
        lo, hi = int(plane.min()), int(plane.max())
        if lo == hi:
            continue
        # integer floor division keeps lo -> 0 and hi -> 255 exact
        out[..., ch] = ((plane - lo) * 255 // (hi - lo)).astype(np.uint8)
    return Image(out)


def solarize(img, threshold):
    px = img.pixels
    return Image(np.where(px >= threshold, 255 - px, px).astype(np.uint8))


def posterize(img, bits_kept):
    drop = 8 - int(bits_kept)
    if drop <= 0:
        return Image(img.pixels.copy())
    mask = np.uint8((0xFF << drop) & 0xFF)
    return Image(img.pixels & mask)


# ---------------- Dispatch ----------------
def apply_op(img, app):
    kind = app.kind
    if kind is OpKind.IDENTITY:
        return Image(img.pixels.copy())
    if kind is OpKind.EQUALIZE:
        return equalize(img)
    if kind is OpKind.AUTO_CONTRAST:
        return autocontrast(img)
    param = map_magnitude(kind, app.magnitude, app.sign)
    if kind.geometric:
        return affine_warp(img, affine_matrix(kind, param, img.width, img.height), app.fill)
    if kind in ENHANCE_KINDS:
        if param == 1.0:
            return Image(img.pixels.copy())
        return blend(img, degenerate_for(kind, img), param)
    if kind is OpKind.SOLARIZE:
        return solarize(img, param)
    if kind is OpKind.POSTERIZE:
        return posterize(img, param)
    raise ContractViolation(f"unhandled operator {kind}")
