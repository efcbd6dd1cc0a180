"""Parameter-update rules (SGD, ADAM, RMSProp, AdaBound) and a training loop."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, require_nonempty
from .engine import Network, forward_backward
from .errors import LengthMismatch

KINDS = ("sgd", "adam", "rmsprop", "adabound")

_DEFAULTS = {
    "sgd": dict(learning_rate=0.01, momentum=0.9),
    "adam": dict(learning_rate=0.001),
    "rmsprop": dict(learning_rate=0.001, decay=0.9),
    "adabound": dict(learning_rate=0.001, final_lr=0.1),
}


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str
    learning_rate: float
    momentum: float = 0.0          # sgd
    beta1: float = 0.9             # adam / adabound
    beta2: float = 0.999
    decay: float = 0.9             # rmsprop
    epsilon: float = 1e-8
    final_lr: float = 0.1          # adabound

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1/beta2 must lie in (0, 1)")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.epsilon <= 0 or self.final_lr <= 0:
            raise ValueError("epsilon and final_lr must be positive")

    @classmethod
    def default(cls, kind: str) -> "OptimizerConfig":
        """Per-optimizer defaults from the cited original works."""
        if kind not in _DEFAULTS:
            raise ValueError(f"unknown optimizer kind {kind!r}")
        return cls(kind=kind, **_DEFAULTS[kind])


@dataclass
class OptimizerState:
    step_count: int
    first_moment: np.ndarray
    second_moment: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "OptimizerState":
        return cls(0, np.zeros(n), np.zeros(n))


def adabound_bounds(cfg: OptimizerConfig, t: int) -> tuple[float, float]:
    """Per-step clip interval for the AdaBound effective learning rate."""
    lower = cfg.final_lr * (1.0 - 1.0 / ((1.0 - cfg.beta2) * t + 1.0))
    upper = cfg.final_lr * (1.0 + 1.0 / ((1.0 - cfg.beta2) * t))
    return lower, upper


def step(params: np.ndarray, grads: np.ndarray, state: OptimizerState,
         cfg: OptimizerConfig) -> tuple[np.ndarray, OptimizerState]:
    """One deterministic update; returns new (params, state), inputs untouched."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise LengthMismatch(
            f"params {len(params)}, grads {len(grads)}, "
            f"moments {len(state.first_moment)}"
        )
    t = state.step_count + 1
    m, v = state.first_moment, state.second_moment

    if cfg.kind == "sgd":
        m = cfg.momentum * m + grads
        new_params = params - cfg.learning_rate * m
        v = v.copy()
    elif cfg.kind == "rmsprop":
        v = cfg.decay * v + (1.0 - cfg.decay) * grads ** 2
        new_params = params - cfg.learning_rate * grads / (np.sqrt(v) + cfg.epsilon)
        m = m.copy()
    elif cfg.kind == "adam":
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads ** 2
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        new_params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    else:  # adabound: ADAM with the effective step clipped around final_lr
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads ** 2
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        lower, upper = adabound_bounds(cfg, t)
        eta = np.clip(cfg.learning_rate / (np.sqrt(v_hat) + cfg.epsilon), lower, upper)
        new_params = params - eta * m_hat

    return new_params, OptimizerState(t, m, v)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    eval_acc: float | None
    wall_ms: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    def to_jsonl(self) -> str:
        lines = []
        for r in self.epochs:
            rec = {"epoch": r.epoch, "train_loss": r.train_loss,
                   "train_acc": r.train_acc}
            if r.eval_acc is not None:
                rec["eval_acc"] = r.eval_acc
            rec["wall_ms"] = r.wall_ms
            lines.append(json.dumps(rec))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainHistory":
        hist = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            hist.epochs.append(EpochRecord(
                rec["epoch"], rec["train_loss"], rec["train_acc"],
                rec.get("eval_acc"), rec["wall_ms"],
            ))
        return hist


def shift_image(img: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """Shift one (c, h, w) image by (dr, dc) pixels, filling vacated cells with 0."""
    out = np.zeros_like(img)
    c, h, w = img.shape
    src_r = slice(max(0, -dr), min(h, h - dr))
    dst_r = slice(max(0, dr), min(h, h + dr))
    src_c = slice(max(0, -dc), min(w, w - dc))
    dst_c = slice(max(0, dc), min(w, w + dc))
    out[:, dst_r, dst_c] = img[:, src_r, src_c]
    return out


def train(
    net: Network,
    ds: LabeledDataset,
    cfg: OptimizerConfig,
    epochs: int,
    batch_size: int,
    seed: int,
    augment: bool = False,
    eval_ds: LabeledDataset | None = None,
) -> tuple[Network, TrainHistory]:
    """Train a copy of `net` on `ds`; the input network is left untouched.

    Shuffles once per epoch from a seed-derived stream; the last partial batch
    is kept. With augment=True every presented image is shifted by an integer
    offset drawn uniformly from [-2, 2] per axis (zero fill).
    """
    from .engine import evaluate  # local import avoids a cycle at module load

    require_nonempty(ds)
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")

    net = net.copy()
    rng = np.random.default_rng(seed)
    state = OptimizerState.zeros(len(net.params))
    history = TrainHistory()
    n = len(ds)

    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            images = ds.images[idx]
            labels = ds.labels[idx]
            if augment:
                shifts = rng.integers(-2, 3, size=(len(idx), 2))
                images = np.stack([
                    shift_image(img, int(dr), int(dc))
                    for img, (dr, dc) in zip(images, shifts)
                ])
            probs, grads = forward_backward(net, images, labels)
            picked = probs[np.arange(len(idx)), labels]
            loss_sum += float(-np.log(np.maximum(picked, 1e-12)).sum())
            correct += int((probs.argmax(axis=1) == labels).sum())
            net.params, state = step(net.params, grads, state, cfg)
        eval_acc = None
        if eval_ds is not None:
            eval_acc = evaluate(net, eval_ds)[0]
        history.epochs.append(EpochRecord(
            epoch, loss_sum / n, correct / n, eval_acc,
            (time.perf_counter() - t0) * 1000.0,
        ))
    return net, history
