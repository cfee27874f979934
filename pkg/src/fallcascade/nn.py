"""Minimal dense ReLU classifier stack with hand-derived backpropagation.

Three capacity tiers (student < TA < teacher) stand in for the small /
medium / large models of the cascade stations. Everything is plain numpy
and deterministic given a seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_CLASSES = 2  # index 0 = ADL, 1 = Fall

STUDENT = "Student"
TA = "TA"
TEACHER = "Teacher"

DEFAULT_TIER_WIDTHS = {
    STUDENT: (54, 16, 2),
    TA: (54, 64, 32, 2),
    TEACHER: (54, 128, 64, 32, 2),
}


class ShapeMismatch(Exception):
    pass


class NonPositiveTemperature(Exception):
    pass


class EmptyData(Exception):
    pass


@dataclass(frozen=True)
class TierSpec:
    tier: str
    layer_widths: tuple

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w <= 0 for w in widths):
            raise ValueError("layer widths must be positive")
        if widths[-1] != N_CLASSES:
            raise ValueError(f"output width must be {N_CLASSES}")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.layer_widths, self.layer_widths[1:]))


def default_tier_spec(tier: str) -> TierSpec:
    return TierSpec(tier, DEFAULT_TIER_WIDTHS[tier])


@dataclass
class TieredModel:
    spec: TierSpec
    weights: list  # weights[l] has shape (in, out)
    biases: list   # biases[l] has shape (out,)
    seed: int = 0

    @classmethod
    def init(cls, spec: TierSpec, seed: int = 0) -> "TieredModel":
        # He-style scaled uniform init, deterministic per seed
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.layer_widths, spec.layer_widths[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(spec=spec, weights=weights, biases=biases, seed=seed)

    def copy(self) -> "TieredModel":
        return TieredModel(self.spec, [w.copy() for w in self.weights],
                           [b.copy() for b in self.biases], self.seed)


def forward(model: TieredModel, x) -> np.ndarray:
    """Logits for a single feature vector (1-D) or a batch (2-D)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != model.spec.layer_widths[0]:
        raise ShapeMismatch(
            f"input width {a.shape[1]} != {model.spec.layer_widths[0]}")
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        a = a @ W + b
        if l != last:
            a = np.maximum(a, 0.0)
    return a[0] if single else a


def _forward_cached(model: TieredModel, X: np.ndarray):
    """Logits plus the post-activation of every layer (for backprop)."""
    activations = [X]
    a = X
    last = len(model.weights) - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ W + b
        a = z if l == last else np.maximum(z, 0.0)
        activations.append(a)
    return activations[-1], activations


def softmax_t(logits, temperature: float = 1.0) -> np.ndarray:
    """Temperature-softened softmax; rows sum to 1."""
    if temperature <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, label: int) -> float:
    """Negative log-likelihood of the true label; log argument clamped at 1e-12."""
    p = np.asarray(probs, dtype=np.float64)
    return float(-np.log(max(p[label], 1e-12)))


class CELoss:
    """Plain cross-entropy on the hard labels."""

    def value_and_grad(self, logits: np.ndarray, labels: np.ndarray, idx):
        p = softmax_t(logits, 1.0)
        n = len(labels)
        picked = np.clip(p[np.arange(n), labels], 1e-12, None)
        loss = float(-np.mean(np.log(picked)))
        grad = p.copy()
        grad[np.arange(n), labels] -= 1.0
        return loss, grad / n


def grad(model: TieredModel, X, y, loss_spec=None, idx=None):
    """Backpropagated gradients: (loss, dW list, db list)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise EmptyData("empty batch")
    if loss_spec is None:
        loss_spec = CELoss()
    if idx is None:
        idx = np.arange(len(X))
    logits, activations = _forward_cached(model, X)
    loss, delta = loss_spec.value_and_grad(logits, y, idx)
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.biases)
    for l in range(len(model.weights) - 1, -1, -1):
        grads_w[l] = activations[l].T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ model.weights[l].T) * (activations[l] > 0)
    return loss, grads_w, grads_b


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.001
    momentum: float = 0.9
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or not (0 <= self.momentum < 1):
            raise ValueError("bad learning_rate or momentum")


@dataclass
class TrainResult:
    model: TieredModel
    epoch_losses: list = field(default_factory=list)


def train(model: TieredModel, X, y, cfg: TrainConfig,
          loss_spec=None) -> TrainResult:
    """SGD with momentum; deterministic given cfg.seed. The input model is
    not mutated; the trained copy and per-epoch mean losses are returned."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise EmptyData("no training data")
    if loss_spec is None:
        loss_spec = CELoss()
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    n = len(X)
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, gw, gb = grad(model, X[batch], y[batch], loss_spec, idx=batch)
            epoch_loss += loss
            n_batches += 1
            for l in range(len(model.weights)):
                vel_w[l] = cfg.momentum * vel_w[l] - cfg.learning_rate * gw[l]
                vel_b[l] = cfg.momentum * vel_b[l] - cfg.learning_rate * gb[l]
                model.weights[l] += vel_w[l]
                model.biases[l] += vel_b[l]
        losses.append(epoch_loss / n_batches)
    return TrainResult(model=model, epoch_losses=losses)


def count_params(model_or_spec) -> int:
    spec = getattr(model_or_spec, "spec", model_or_spec)
    return spec.n_params


def predict_proba(model: TieredModel, X, temperature: float = 1.0) -> np.ndarray:
    return softmax_t(forward(model, X), temperature)


def accuracy(model: TieredModel, X, y) -> float:
    logits = forward(model, np.asarray(X, dtype=np.float64))
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(y)))


def save_model(model: TieredModel, path) -> None:
    """Text checkpoint; floats are written in exact round-trip form."""
    lines = [
        "format=fallcascade-model-v1",
        f"tier={model.spec.tier}",
        f"widths={','.join(str(w) for w in model.spec.layer_widths)}",
        f"seed={model.seed}",
    ]
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"layer={l}")
        for row in W:
            lines.append("W " + " ".join(repr(float(v)) for v in row))
        lines.append("b " + " ".join(repr(float(v)) for v in b))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path) -> TieredModel:
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != "format=fallcascade-model-v1":
        raise ValueError(f"{path}: not a model checkpoint")
    header = dict(line.split("=", 1) for line in lines[1:4])
    spec = TierSpec(header["tier"],
                    tuple(int(w) for w in header["widths"].split(",")))
    weights, biases = [], []
    rows = []
    for line in lines[4:]:
        if line.startswith("layer="):
            rows = []
        elif line.startswith("W "):
            rows.append([float(v) for v in line[2:].split()])
        elif line.startswith("b "):
            weights.append(np.array(rows))
            biases.append(np.array([float(v) for v in line[2:].split()]))
    model = TieredModel(spec=spec, weights=weights, biases=biases,
                        seed=int(header["seed"]))
    for W, (fan_in, fan_out) in zip(model.weights,
                                    zip(spec.layer_widths, spec.layer_widths[1:])):
        if W.shape != (fan_in, fan_out):
            raise ShapeMismatch(f"{path}: checkpoint shapes do not match spec")
    return model
