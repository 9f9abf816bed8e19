"""Linear and one-hidden-layer (tanh) models with analytic gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    pass


@dataclass
class ModelParams:
    arch: str  # "linear" | "mlp"
    kind: str  # "classification" | "regression"
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.arrays["W1" if self.arch == "mlp" else "W"].shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.kind, {k: v.copy() for k, v in self.arrays.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


def init_params(
    arch: str, kind: str, dim: int, outputs: int, seed: int, hidden_width: int = 32
) -> ModelParams:
    """Seeded symmetric-uniform init scaled by 1/sqrt(fan_in); zero biases."""
    rng = np.random.default_rng(seed)

    def uniform(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    if arch == "linear":
        arrays = {"W": uniform(dim, (dim, outputs)), "b": np.zeros(outputs)}
    elif arch == "mlp":
        arrays = {
            "W1": uniform(dim, (dim, hidden_width)),
            "b1": np.zeros(hidden_width),
            "W2": uniform(hidden_width, (hidden_width, outputs)),
            "b2": np.zeros(outputs),
        }
    else:
        raise ValueError(f"unknown architecture {arch!r}")
    return ModelParams(arch, kind, arrays)


def _check_x(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.dim:
        raise ShapeError(f"model expects {params.dim} features, got {x.shape[1]}")
    return x


def forward(params: ModelParams, x: np.ndarray):
    """Return ``(outputs, hidden)``; ``hidden`` is None for the linear model."""
    x = _check_x(params, x)
    a = params.arrays
    if params.arch == "linear":
        return x @ a["W"] + a["b"], None
    h = np.tanh(x @ a["W1"] + a["b1"])
    return h @ a["W2"] + a["b2"], h


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return z - (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))


def _losses_from_outputs(kind: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if kind == "classification":
        loss = -_log_softmax(z)[np.arange(len(y)), y.astype(np.int64)]
        return np.maximum(loss, 0.0)
    return 0.5 * (z[:, 0] - y) ** 2


def losses(params: ModelParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample cross-entropy (classification) or 0.5 * squared error."""
    z, _ = forward(params, x)
    return _losses_from_outputs(params.kind, z, np.asarray(y))


def per_sample_loss(params: ModelParams, sample) -> float:
    x = np.asarray(sample.features, dtype=np.float64)[None, :]
    return float(losses(params, x, np.asarray([sample.label]))[0])


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    z, _ = forward(params, x)
    if params.kind == "classification":
        return np.argmax(z, axis=1)
    return z[:, 0]


def gradients(
    params: ModelParams, x: np.ndarray, y: np.ndarray, weights: np.ndarray,
    denom: int | None = None,
) -> dict[str, np.ndarray]:
    """Gradient of ``sum(w * loss) / denom`` (denom defaults to the batch size).

    Weights are constants: nothing flows through them.
    """
    x = _check_x(params, x)
    y = np.asarray(y)
    w = np.asarray(weights, dtype=np.float64)
    if not (len(x) == len(y) == len(w)):
        raise ShapeError(f"batch of {len(x)} features, {len(y)} labels, {len(w)} weights")
    scale = w / (len(x) if denom is None else denom)

    z, h = forward(params, x)
    if params.kind == "classification":
        dz = np.exp(_log_softmax(z))
        dz[np.arange(len(y)), y.astype(np.int64)] -= 1.0
    else:
        dz = z - y[:, None]
    dz *= scale[:, None]

    a = params.arrays
    if params.arch == "linear":
        return {"W": x.T @ dz, "b": dz.sum(axis=0)}
    dh = (dz @ a["W2"].T) * (1.0 - h * h)
    return {
        "W1": x.T @ dh,
        "b1": dh.sum(axis=0),
        "W2": h.T @ dz,
        "b2": dz.sum(axis=0),
    }


class Adam:
    def __init__(self, params: ModelParams, beta1=0.9, beta2=0.95, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays.items()}
        self.t = 0

    def step(self, params: ModelParams, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params.arrays[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def cosine_lr(step: int, total_steps: int, base_lr: float, warmup_ratio: float) -> float:
    """Linear warm-up then cosine decay to zero; ``step`` is 0-based."""
    warm = math.ceil(warmup_ratio * total_steps)
    if step < warm:
        return base_lr * (step + 1) / warm
    span = max(1, total_steps - warm)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * (step - warm) / span))
