# backend/model.py
"""Tiny CNN with hand-written backprop, smoothed cross-entropy, SGD and LR schedule."""
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from backend.errors import ContractViolation, MalformedInputError, require
from backend.rng import derive_stream

DEFAULT_ARCH = "conv3x3:16,relu,maxpool2,conv3x3:32,relu,maxpool2,gap,linear"
LINEAR_ARCH = "flatten,linear"
CHECKPOINT_MAGIC = b"SRACKPT1"
DTYPES = {"float32": np.float32, "float64": np.float64}


# ---------------- Layers ----------------
# Each layer: param_shapes(in_shape) -> list of shapes, out_shape(in_shape),
# forward(x, params) -> (y, cache), backward(dy, cache, params) -> (dx, grads)

class Conv3x3:
    def __init__(self, out_channels):
        self.out_channels = out_channels

    def param_shapes(self, in_shape):
        c = in_shape[2]
        return [(9 * c, self.out_channels), (self.out_channels,)]

    def fan_in(self, in_shape):
        return 9 * in_shape[2]

    def out_shape(self, in_shape):
        return (in_shape[0], in_shape[1], self.out_channels)

    def forward(self, x, params):
        w, b = params
        n, h, wd, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
        # (n, h, w, c, 3, 3) -> rows of c*9 in (c, ky, kx) order
        cols = win.reshape(n * h * wd, c * 9)
        y = cols @ w + b
        return y.reshape(n, h, wd, self.out_channels), (cols, x.shape)

    def backward(self, dy, cache, params):
        w, _ = params
        cols, (n, h, wd, c) = cache
        dy2 = dy.reshape(n * h * wd, self.out_channels)
        dw = cols.T @ dy2
        db = dy2.sum(axis=0)
        dcols = (dy2 @ w.T).reshape(n, h, wd, c, 3, 3)
        dxp = np.zeros((n, h + 2, wd + 2, c), dtype=dy.dtype)
        for ky in range(3):
            for kx in range(3):
                dxp[:, ky:ky + h, kx:kx + wd, :] += dcols[..., ky, kx]
        return dxp[:, 1:-1, 1:-1, :], [dw, db]


class ReLU:
    def param_shapes(self, in_shape):
        return []

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, params):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache, params):
        return dy * cache, []


class MaxPool2:
    def param_shapes(self, in_shape):
        if in_shape[0] % 2 or in_shape[1] % 2:
            raise ContractViolation(f"maxpool2 needs even spatial size, got {in_shape[:2]}")
        return []

    def out_shape(self, in_shape):
        return (in_shape[0] // 2, in_shape[1] // 2, in_shape[2])

    def forward(self, x, params):
        n, h, w, c = x.shape
        blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
        blocks = blocks.reshape(n, h // 2, w // 2, c, 4)
        idx = blocks.argmax(axis=-1)
        y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        return y, (idx, x.shape)

    def backward(self, dy, cache, params):
        idx, (n, h, w, c) = cache
        blocks = np.zeros((n, h // 2, w // 2, c, 4), dtype=dy.dtype)
        np.put_along_axis(blocks, idx[..., None], dy[..., None], axis=-1)
        dx = blocks.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        return dx.reshape(n, h, w, c), []


class GlobalAvgPool:
    def param_shapes(self, in_shape):
        return []

    def out_shape(self, in_shape):
        return (in_shape[2],)

    def forward(self, x, params):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, dy, cache, params):
        n, h, w, c = cache
        return np.broadcast_to(dy[:, None, None, :] / (h * w), cache).copy(), []


class Flatten:
    def param_shapes(self, in_shape):
        return []

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, params):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache, params):
        return dy.reshape(cache), []


class Linear:
    def __init__(self, out_features):
        self.out_features = out_features

    def param_shapes(self, in_shape):
        return [(in_shape[0], self.out_features), (self.out_features,)]

    def fan_in(self, in_shape):
        return in_shape[0]

    def out_shape(self, in_shape):
        return (self.out_features,)

    def forward(self, x, params):
        w, b = params
        return x @ w + b, x

    def backward(self, dy, cache, params):
        w, _ = params
        return dy @ w.T, [cache.T @ dy, dy.sum(axis=0)]


def parse_arch(descriptor, num_classes):
    """'conv3x3:16,relu,...,linear' -> layer objects; a bare final 'linear' maps to c outputs."""
    tokens = [t.strip() for t in descriptor.split(",") if t.strip()]
    if not tokens:
        raise ContractViolation("empty architecture descriptor")
    layers = []
    for i, tok in enumerate(tokens):
        name, _, arg = tok.partition(":")
        if name == "conv3x3":
            layers.append(Conv3x3(int(arg)))
        elif name == "relu":
            layers.append(ReLU())
        elif name == "maxpool2":
            layers.append(MaxPool2())
        elif name == "gap":
            layers.append(GlobalAvgPool())
        elif name == "flatten":
            layers.append(Flatten())
        elif name == "linear":
            out = int(arg) if arg else num_classes
            layers.append(Linear(out))
        else:
            raise ContractViolation(f"unknown layer {tok!r} in architecture")
    if not isinstance(layers[-1], Linear) or layers[-1].out_features != num_classes:
        raise ContractViolation("architecture must end in a linear layer with class_count outputs")
    return layers


# ---------------- Model ----------------
@dataclass
class Model:
    arch: str
    input_shape: tuple
    num_classes: int
    params: np.ndarray
    grad: np.ndarray = None
    layers: list = field(default=None, repr=False)
    slots: list = field(default=None, repr=False)

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.layers = parse_arch(self.arch, self.num_classes)
        self.slots = _layout(self.layers, self.input_shape)
        size = sum(int(np.prod(s)) for layer_slots in self.slots for (_, s) in layer_slots)
        if self.params.shape != (size,):
            raise ContractViolation(f"{self.arch} needs {size} parameters, got {self.params.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.params)
        require(self.grad.shape == self.params.shape, "gradient and parameter vectors differ in length")

    @property
    def dtype(self):
        return self.params.dtype

    @property
    def size(self):
        return self.params.shape[0]

    def layer_params(self, params=None):
        flat = self.params if params is None else params
        return [[flat[off:off + int(np.prod(s))].reshape(s) for off, s in layer_slots]
                for layer_slots in self.slots]

    def descriptor(self):
        h, w, c = self.input_shape
        return f"{self.arch}|in={h}x{w}x{c}|classes={self.num_classes}"

    def copy(self):
        return Model(self.arch, self.input_shape, self.num_classes, self.params.copy(), self.grad.copy())


def _layout(layers, input_shape):
    slots, offset, shape = [], 0, tuple(input_shape)
    for layer in layers:
        layer_slots = []
        for s in layer.param_shapes(shape):
            layer_slots.append((offset, s))
            offset += int(np.prod(s))
        slots.append(layer_slots)
        shape = layer.out_shape(shape)
    return slots


def init_model(arch=DEFAULT_ARCH, input_shape=(32, 32, 3), num_classes=10, seed=0,
               dtype="float64", zero_head=True):
    """He fan-in init from the seeded stream; biases zero, final linear zero by default."""
    layout = Model(arch, input_shape, num_classes, np.zeros(_param_count(arch, input_shape, num_classes)))
    rng = derive_stream(seed, 0, 0, 0, "init")
    params = np.zeros(layout.size, dtype=np.float64)
    shape = tuple(input_shape)
    for li, layer in enumerate(layout.layers):
        layer_slots = layout.slots[li]
        if layer_slots:
            off, wshape = layer_slots[0]
            last = li == len(layout.layers) - 1
            if not (last and zero_head):
                std = math.sqrt(2.0 / layer.fan_in(shape))
                params[off:off + int(np.prod(wshape))] = rng.normal(0.0, std, size=int(np.prod(wshape)))
        shape = layer.out_shape(shape)
    params = params.astype(DTYPES[dtype])
    return Model(arch, input_shape, num_classes, params)


def _param_count(arch, input_shape, num_classes):
    layers = parse_arch(arch, num_classes)
    return sum(int(np.prod(s)) for ls in _layout(layers, input_shape) for (_, s) in ls)


# ---------------- Normalization ----------------
def normalize_images(images, mean=(0.5, 0.5, 0.5), std=(0.5, 0.5, 0.5), dtype=np.float64):
    """uint8 (N, H, W, 3) -> (v / 255 - mean) / std."""
    x = np.asarray(images, dtype=np.float64) / 255.0
    x = (x - np.asarray(mean, dtype=np.float64)) / np.asarray(std, dtype=np.float64)
    return x.astype(dtype)


# ---------------- Forward / backward ----------------
def _check_input(model, x):
    if x.ndim != 4 or tuple(x.shape[1:]) != model.input_shape:
        raise ContractViolation(f"expected batch of {model.input_shape} images, got {x.shape}")


def forward(model, x, params=None):
    """Logits (N, c); never touches model.params."""
    _check_input(model, x)
    h = x.astype(model.dtype, copy=False)
    for layer, p in zip(model.layers, model.layer_params(params)):
        h, _ = layer.forward(h, p)
    return h


def smoothed_targets(labels, num_classes, smoothing):
    t = np.full((len(labels), num_classes), smoothing / num_classes)
    t[np.arange(len(labels)), labels] += 1.0 - smoothing
    return t


def cross_entropy(logits, labels, smoothing=0.0):
    z = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    t = smoothed_targets(labels, logits.shape[1], smoothing)
    return float(-(t * log_p).sum(axis=1).mean()), log_p, t


def loss_and_grad(model, x, labels, smoothing=0.0, params=None):
    """Mean smoothed cross-entropy and its gradient w.r.t. the flat parameter vector."""
    _check_input(model, x)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (x.shape[0],):
        raise ContractViolation(f"{labels.shape[0]} labels for {x.shape[0]} images")
    if labels.size and (labels.min() < 0 or labels.max() >= model.num_classes):
        raise ContractViolation(f"label outside [0, {model.num_classes})")
    require(0.0 <= smoothing < 1.0, f"label smoothing must be in [0, 1), got {smoothing}")

    per_layer = model.layer_params(params)
    h = x.astype(model.dtype, copy=False)
    caches = []
    for layer, p in zip(model.layers, per_layer):
        h, cache = layer.forward(h, p)
        caches.append(cache)
    loss, log_p, t = cross_entropy(h, labels, smoothing)
    dy = ((np.exp(log_p) - t) / len(labels)).astype(model.dtype)

    grad = np.zeros_like(model.params)
    for li in range(len(model.layers) - 1, -1, -1):
        dy, grads = model.layers[li].backward(dy, caches[li], per_layer[li])
        for (off, s), g in zip(model.slots[li], grads):
            grad[off:off + int(np.prod(s))] = g.ravel()
    return loss, grad


# ---------------- Optimizer ----------------
@dataclass
class OptimState:
    momentum_buffer: np.ndarray
    base_lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    label_smoothing: float = 0.0

    @classmethod
    def for_model(cls, model, **hyper):
        return cls(np.zeros_like(model.params), **hyper)


def sgd_step(model, optim, grad, lr):
    """v <- mu * v + g + wd * theta;  theta <- theta - lr * v (in place)."""
    if grad.shape != model.params.shape or optim.momentum_buffer.shape != model.params.shape:
        raise ContractViolation("gradient / momentum buffer shape does not match parameters")
    v = optim.momentum_buffer
    v *= optim.momentum
    v += grad
    if optim.weight_decay:
        v += optim.weight_decay * model.params
    model.params -= lr * v
    model.grad[...] = grad


# ---------------- LR schedule ----------------
@dataclass(frozen=True)
class LrSchedule:
    warmup_epochs: int
    total_epochs: int
    iters_per_epoch: int
    base_lr: float

    def __post_init__(self):
        require(self.warmup_epochs >= 0, f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        require(self.total_epochs == 0 or self.warmup_epochs < self.total_epochs,
                f"warmup_epochs ({self.warmup_epochs}) must be < total_epochs ({self.total_epochs})")

    @property
    def warmup_iters(self):
        return self.warmup_epochs * self.iters_per_epoch

    @property
    def total_iters(self):
        return self.total_epochs * self.iters_per_epoch


def lr_at(schedule, global_iter):
    """Linear warmup from 0, then cosine to exactly 0 at the last update."""
    warm = schedule.warmup_iters
    if global_iter < warm:
        return schedule.base_lr * global_iter / warm
    span = schedule.total_iters - warm - 1
    if span <= 0:
        return schedule.base_lr
    t = min(1.0, (global_iter - warm) / span)
    return schedule.base_lr * 0.5 * (1.0 + math.cos(math.pi * t))


# ---------------- Gradient check ----------------
def grad_check(model, x, labels, smoothing=0.0, n_params=200, step=1e-5, seed=0,
               analytic=None, indices=None, floor=1e-8):
    """Max |g_a - g_fd| / max(|g_a|, |g_fd|, floor) over n_params random parameters."""
    require(model.dtype == np.float64, "grad_check needs a float64 model")
    if analytic is None:
        _, analytic = loss_and_grad(model, x, labels, smoothing)
    if indices is None:
        rng = derive_stream(seed, 0, 0, 0, "grad_check")
        k = min(n_params, model.size)
        indices = rng.choice(model.size, size=k, replace=False)
    worst = 0.0
    shifted = model.params.copy()
    for i in indices:
        orig = shifted[i]
        shifted[i] = orig + step
        plus, _ = loss_and_grad(model, x, labels, smoothing, params=shifted)
        shifted[i] = orig - step
        minus, _ = loss_and_grad(model, x, labels, smoothing, params=shifted)
        shifted[i] = orig
        fd = (plus - minus) / (2.0 * step)
        ga = float(analytic[i])
        err = abs(ga - fd) / max(abs(ga), abs(fd), floor)
        worst = max(worst, err)
    return worst


# ---------------- Checkpoint ----------------
def _pack_vector(vec):
    return struct.pack("<Q", vec.size) + np.asarray(vec, dtype="<f4").tobytes()


def save_checkpoint(model, optim=None):
    desc = model.descriptor().encode("utf-8")
    out = [CHECKPOINT_MAGIC, struct.pack("<I", len(desc)), desc, _pack_vector(model.params)]
    if optim is not None:
        out.append(_pack_vector(optim.momentum_buffer))
    return b"".join(out)


def _unpack_vector(buf, pos):
    if pos + 8 > len(buf):
        raise MalformedInputError("truncated checkpoint vector header")
    (count,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    end = pos + 4 * count
    if end > len(buf):
        raise MalformedInputError("truncated checkpoint vector")
    return np.frombuffer(buf[pos:end], dtype="<f4").astype(np.float64), end


def _parse_descriptor(text):
    try:
        arch, shape, classes = text.split("|")
        h, w, c = (int(v) for v in shape.removeprefix("in=").split("x"))
        return arch, (h, w, c), int(classes.removeprefix("classes="))
    except ValueError:
        raise MalformedInputError(f"bad architecture descriptor {text!r}") from None


def load_checkpoint(data, dtype="float64"):
    """-> (Model, momentum buffer or None)."""
    buf = bytes(data)
    if not buf.startswith(CHECKPOINT_MAGIC):
        raise MalformedInputError("not an SRACKPT1 checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    if pos + 4 > len(buf):
        raise MalformedInputError("truncated checkpoint descriptor")
    (n,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    arch, shape, classes = _parse_descriptor(buf[pos:pos + n].decode("utf-8"))
    pos += n
    params, pos = _unpack_vector(buf, pos)
    momentum = None
    if pos < len(buf):
        momentum, pos = _unpack_vector(buf, pos)
    model = Model(arch, shape, classes, params.astype(DTYPES[dtype]))
    return model, momentum
