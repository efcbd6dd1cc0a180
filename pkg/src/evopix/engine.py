"""Minimal feed-forward CNN engine with exact backpropagation.

Layer set: 3x3-style "same" convolutions (stride 1, ReLU), 2x2 max pooling
(stride 2, floor), fully connected layers (ReLU), and a terminal linear +
softmax classifier. Architectures are described by dash-separated strings
such as "24C3-P-48C3-P-256FC-10S".

All parameters of a network live in one flat float64 vector; every layer owns
a slice of it. The slice layout is a pure function of (architecture, input
shape), which makes parameter counts and checkpoints deterministic.
"""
from __future__ import annotations

import base64
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, require_nonempty
from .errors import (
    EvenKernel,
    MissingSoftmaxTerminal,
    NonPositiveExtent,
    ShapeMismatch,
    ShapeUnderflow,
    UnknownToken,
)

PROB_FLOOR = 1e-12  # floor applied before log in cross-entropy

CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# architecture descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel_size: int


@dataclass(frozen=True)
class MaxPool:
    window: int = 2


@dataclass(frozen=True)
class FullyConnected:
    out_units: int


@dataclass(frozen=True)
class SoftmaxOutput:
    num_classes: int


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple

    @property
    def num_classes(self) -> int:
        return self.layers[-1].num_classes


_CONV_RE = re.compile(r"^(\d+)C(\d+)$")
_FC_RE = re.compile(r"^(\d+)FC$")
_SOFTMAX_RE = re.compile(r"^(\d+)S$")


def parse_arch(arch: str) -> NetworkSpec:
    """Parse an architecture string like "24C3-P-48C3-P-256FC-10S".

    Tokens: <k>C<s> = convolution with k output channels and odd s x s kernel,
    P = 2x2 max pool, <u>FC = fully connected with u units, <c>S = terminal
    softmax classifier over c classes.
    """
    tokens = arch.split("-")
    layers = []
    for pos, token in enumerate(tokens):
        if token == "P":
            layers.append(MaxPool())
            continue
        m = _CONV_RE.match(token)
        if m:
            out_channels, kernel = int(m.group(1)), int(m.group(2))
            if out_channels <= 0 or kernel <= 0:
                raise NonPositiveExtent(f"token {token!r}: extents must be positive")
            if kernel % 2 == 0:
                raise EvenKernel(f"token {token!r}: kernel size must be odd")
            layers.append(Conv(out_channels, kernel))
            continue
        m = _FC_RE.match(token)
        if m:
            units = int(m.group(1))
            if units <= 0:
                raise NonPositiveExtent(f"token {token!r}: extents must be positive")
            layers.append(FullyConnected(units))
            continue
        m = _SOFTMAX_RE.match(token)
        if m:
            classes = int(m.group(1))
            if classes <= 0:
                raise NonPositiveExtent(f"token {token!r}: extents must be positive")
            if pos != len(tokens) - 1:
                raise MissingSoftmaxTerminal(
                    f"softmax token {token!r} must be the terminal layer"
                )
            layers.append(SoftmaxOutput(classes))
            continue
        raise UnknownToken(f"unrecognized token {token!r} in {arch!r}")
    if not layers or not isinstance(layers[-1], SoftmaxOutput):
        raise MissingSoftmaxTerminal(f"{arch!r} must end with a <c>S token")
    return NetworkSpec(tuple(layers))


def format_arch(spec: NetworkSpec) -> str:
    """Render a NetworkSpec back to its canonical architecture string."""
    parts = []
    for layer in spec.layers:
        if isinstance(layer, Conv):
            parts.append(f"{layer.out_channels}C{layer.kernel_size}")
        elif isinstance(layer, MaxPool):
            parts.append("P")
        elif isinstance(layer, FullyConnected):
            parts.append(f"{layer.out_units}FC")
        else:
            parts.append(f"{layer.num_classes}S")
    return "-".join(parts)


# ---------------------------------------------------------------------------
# parameter layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _LayerPlan:
    layer: object
    in_shape: tuple[int, int, int]
    out_shape: tuple[int, int, int]
    w_slice: slice | None = None
    b_slice: slice | None = None
    w_shape: tuple | None = None
    fan_in: int = 0


def _build_plan(spec: NetworkSpec, input_shape) -> tuple[list[_LayerPlan], int]:
    shape = tuple(int(v) for v in input_shape)
    if len(shape) != 3 or any(v <= 0 for v in shape):
        raise ShapeMismatch(f"input_shape must be (c, h, w) positive, got {shape}")
    plans = []
    offset = 0
    for layer in spec.layers:
        c, h, w = shape
        if isinstance(layer, Conv):
            k = layer.kernel_size
            w_shape = (layer.out_channels, c, k, k)
            n_w = int(np.prod(w_shape))
            n_b = layer.out_channels
            out_shape = (layer.out_channels, h, w)
            plans.append(_LayerPlan(
                layer, shape, out_shape,
                slice(offset, offset + n_w),
                slice(offset + n_w, offset + n_w + n_b),
                w_shape, fan_in=c * k * k,
            ))
            offset += n_w + n_b
            shape = out_shape
        elif isinstance(layer, MaxPool):
            oh, ow = h // 2, w // 2
            if oh < 1 or ow < 1:
                raise ShapeUnderflow(f"max pool on {h}x{w} collapses below 1x1")
            out_shape = (c, oh, ow)
            plans.append(_LayerPlan(layer, shape, out_shape))
            shape = out_shape
        elif isinstance(layer, (FullyConnected, SoftmaxOutput)):
            units = (layer.out_units if isinstance(layer, FullyConnected)
                     else layer.num_classes)
            fan_in = c * h * w
            w_shape = (units, fan_in)
            n_w = units * fan_in
            out_shape = (units, 1, 1)
            plans.append(_LayerPlan(
                layer, shape, out_shape,
                slice(offset, offset + n_w),
                slice(offset + n_w, offset + n_w + units),
                w_shape, fan_in=fan_in,
            ))
            offset += n_w + units
            shape = out_shape
        else:  # pragma: no cover
            raise UnknownToken(f"unsupported layer {layer!r}")
    return plans, offset


def param_count(spec: NetworkSpec, input_shape) -> int:
    """Total number of parameters; pure function of (spec, input_shape)."""
    return _build_plan(spec, input_shape)[1]


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------

@dataclass
class Network:
    spec: NetworkSpec
    input_shape: tuple[int, int, int]
    seed: int
    params: np.ndarray
    grads: np.ndarray
    plans: list = field(repr=False, default_factory=list)

    @property
    def arch(self) -> str:
        return format_arch(self.spec)

    def copy(self) -> "Network":
        return Network(self.spec, self.input_shape, self.seed,
                       self.params.copy(), self.grads.copy(), self.plans)


def init_network(spec: NetworkSpec | str, input_shape, seed: int) -> Network:
    """Build a network with fan-in-scaled uniform weights and zero biases.

    Weight bound is sqrt(6 / fan_in) per layer; the draw order follows the
    layer order, so identical (spec, shape, seed) gives bitwise-identical
    parameter vectors.
    """
    if isinstance(spec, str):
        spec = parse_arch(spec)
    plans, total = _build_plan(spec, input_shape)
    params = np.zeros(total, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for plan in plans:
        if plan.w_slice is not None:
            bound = np.sqrt(6.0 / plan.fan_in)
            size = plan.w_slice.stop - plan.w_slice.start
            params[plan.w_slice] = rng.uniform(-bound, bound, size=size)
    return Network(spec, tuple(int(v) for v in input_shape), seed,
                   params, np.zeros_like(params), plans)


# ---------------------------------------------------------------------------
# layer forward/backward kernels
# ---------------------------------------------------------------------------

def _conv_forward(x, w, b):
    n, c, h, width = x.shape
    out_c, _, k, _ = w.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # windows: (n, c, h, w, k, k) -> columns (n*h*w, c*k*k)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * width, c * k * k)
    y = cols @ w.reshape(out_c, -1).T + b
    y = y.reshape(n, h, width, out_c).transpose(0, 3, 1, 2)
    return y, cols


def _conv_backward(dy, cols, x_shape, w):
    n, c, h, width = x_shape
    out_c, _, k, _ = w.shape
    pad = k // 2
    dy_flat = dy.transpose(0, 2, 3, 1).reshape(n * h * width, out_c)
    dw = (dy_flat.T @ cols).reshape(w.shape)
    db = dy_flat.sum(axis=0)
    dcols = dy_flat @ w.reshape(out_c, -1)
    dcols = dcols.reshape(n, h, width, c, k, k)
    dxp = np.zeros((n, c, h + 2 * pad, width + 2 * pad))
    for di in range(k):
        for dj in range(k):
            dxp[:, :, di:di + h, dj:dj + width] += dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + width]
    return dx, dw, db


def _pool_forward(x):
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    cropped = x[:, :, :h2 * 2, :w2 * 2]
    blocks = cropped.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h2, w2, 4)
    arg = flat.argmax(axis=-1)  # first max wins: deterministic tie-break
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    return y, (arg, x.shape)


def _pool_backward(dy, cache):
    arg, x_shape = cache
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dflat = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(dflat, arg[..., None], dy[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :, :h2 * 2, :w2 * 2] = (
        dflat.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2 * 2, w2 * 2)
    )
    return dx


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# forward / loss / backward
# ---------------------------------------------------------------------------

def _run_forward(net: Network, batch: np.ndarray, keep_cache: bool):
    if batch.ndim != 4 or tuple(batch.shape[1:]) != tuple(net.input_shape):
        raise ShapeMismatch(
            f"batch shape {batch.shape} does not match input {net.input_shape}"
        )
    x = np.asarray(batch, dtype=np.float64)
    caches = []
    for plan in net.plans:
        layer = plan.layer
        if isinstance(layer, Conv):
            w = net.params[plan.w_slice].reshape(plan.w_shape)
            b = net.params[plan.b_slice]
            y, cols = _conv_forward(x, w, b)
            mask = y > 0.0
            out = y * mask
            if keep_cache:
                caches.append(("conv", cols, x.shape, mask))
            x = out
        elif isinstance(layer, MaxPool):
            x, cache = _pool_forward(x)
            if keep_cache:
                caches.append(("pool", cache))
        elif isinstance(layer, FullyConnected):
            w = net.params[plan.w_slice].reshape(plan.w_shape)
            b = net.params[plan.b_slice]
            flat = x.reshape(len(x), -1)
            y = flat @ w.T + b
            mask = y > 0.0
            out = y * mask
            if keep_cache:
                caches.append(("fc", flat, x.shape, mask))
            x = out[:, :, None, None]
        else:  # SoftmaxOutput
            w = net.params[plan.w_slice].reshape(plan.w_shape)
            b = net.params[plan.b_slice]
            flat = x.reshape(len(x), -1)
            logits = flat @ w.T + b
            probs = _softmax(logits)
            if keep_cache:
                caches.append(("softmax", flat, x.shape))
            return probs, caches
    raise MissingSoftmaxTerminal("network has no softmax terminal")  # pragma: no cover


def forward(net: Network, batch: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per sample; rows sum to 1."""
    probs, _ = _run_forward(net, batch, keep_cache=False)
    return probs


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean -log p[label], with probabilities floored at 1e-12 before log."""
    labels = np.asarray(labels)
    if probs.ndim != 2 or len(probs) != len(labels):
        raise ShapeMismatch(f"probs {probs.shape} vs labels {labels.shape}")
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def forward_backward(net: Network, batch: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """One forward pass plus the exact gradient of the mean cross-entropy.

    Returns (probs, grads). The gradient vector is also stored in net.grads.
    """
    labels = np.asarray(labels)
    probs, caches = _run_forward(net, batch, keep_cache=True)
    n = len(labels)
    if probs.shape[0] != n:
        raise ShapeMismatch(f"{probs.shape[0]} outputs vs {n} labels")

    grads = net.grads
    grads[:] = 0.0
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n  # d(mean CE)/d(logits)

    upstream = delta
    for plan, cache in zip(reversed(net.plans), reversed(caches)):
        kind = cache[0]
        if kind == "softmax":
            _, flat, x_shape = cache
            w = net.params[plan.w_slice].reshape(plan.w_shape)
            grads[plan.w_slice] = (upstream.T @ flat).ravel()
            grads[plan.b_slice] = upstream.sum(axis=0)
            upstream = (upstream @ w).reshape(x_shape)
        elif kind == "fc":
            _, flat, x_shape, mask = cache
            w = net.params[plan.w_slice].reshape(plan.w_shape)
            dy = upstream.reshape(len(flat), -1) * mask
            grads[plan.w_slice] = (dy.T @ flat).ravel()
            grads[plan.b_slice] = dy.sum(axis=0)
            upstream = (dy @ w).reshape(x_shape)
        elif kind == "pool":
            upstream = _pool_backward(upstream, cache[1])
        else:  # conv
            _, cols, x_shape, mask = cache
            w = net.params[plan.w_slice].reshape(plan.w_shape)
            dy = upstream * mask
            dx, dw, db = _conv_backward(dy, cols, x_shape, w)
            grads[plan.w_slice] = dw.ravel()
            grads[plan.b_slice] = db
            upstream = dx
    return probs, grads


def backward(net: Network, batch: np.ndarray, labels) -> np.ndarray:
    """Exact analytic gradient of the mean cross-entropy wrt net.params."""
    return forward_backward(net, batch, labels)[1]


_EVAL_CHUNK = 512


def evaluate(net: Network, ds: LabeledDataset) -> tuple[float, float]:
    """(accuracy, mean cross-entropy loss) over the dataset.

    Argmax ties break toward the lowest class index.
    """
    require_nonempty(ds)
    n = len(ds)
    correct = 0
    loss_sum = 0.0
    for start in range(0, n, _EVAL_CHUNK):
        stop = min(start + _EVAL_CHUNK, n)
        probs = forward(net, ds.images[start:stop])
        labels = ds.labels[start:stop]
        correct += int((probs.argmax(axis=1) == labels).sum())
        picked = probs[np.arange(stop - start), labels]
        loss_sum += float(-np.log(np.maximum(picked, PROB_FLOOR)).sum())
    return correct / n, loss_sum / n


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, net: Network, binary: bool = True) -> None:
    """Write a versioned single-document checkpoint.

    binary=True stores the flat parameter vector as base64 little-endian
    float64 (bit-exact round-trip); binary=False stores base-10 decimal text.
    """
    doc = {
        "version": CHECKPOINT_VERSION,
        "arch": net.arch,
        "input_shape": list(net.input_shape),
        "seed": net.seed,
        "format": "binary" if binary else "text",
    }
    if binary:
        doc["params"] = base64.b64encode(
            net.params.astype("<f8").tobytes()
        ).decode("ascii")
    else:
        doc["params"] = [repr(float(v)) for v in net.params]
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path) -> Network:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    net = init_network(doc["arch"], tuple(doc["input_shape"]), int(doc["seed"]))
    if doc["format"] == "binary":
        params = np.frombuffer(base64.b64decode(doc["params"]), dtype="<f8")
    else:
        params = np.array([float(v) for v in doc["params"]], dtype=np.float64)
    if len(params) != len(net.params):
        raise ShapeMismatch(
            f"checkpoint holds {len(params)} params, architecture needs {len(net.params)}"
        )
    net.params[:] = params
    return net
