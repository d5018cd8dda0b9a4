"""Linear classification head and SGD with momentum."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .mathcore import softmax_temp


@dataclass
class ModelParams:
    weights: np.ndarray  # (k, d_f)
    bias: np.ndarray  # (k,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ArgumentError(
                f"inconsistent head shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def d_f(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zeros(cls, k: int, d_f: int) -> "ModelParams":
        return cls(np.zeros((k, d_f)), np.zeros(k))

    def copy(self) -> "ModelParams":
        return ModelParams(self.weights.copy(), self.bias.copy())

    def equals(self, other: "ModelParams") -> bool:
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.bias, other.bias)


def logits(params: ModelParams, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.d_f:
        raise ArgumentError(f"features of shape {x.shape} do not match head input dimension {params.d_f}")
    return x @ params.weights.T + params.bias


def forward_probs(params: ModelParams, features) -> np.ndarray:
    """Clean class posterior, one probability row per sample."""
    return softmax_temp(logits(params, features), 1.0)


def predict_labels(params: ModelParams, features) -> np.ndarray:
    # np.argmax resolves ties to the lowest index
    return np.argmax(forward_probs(params, features), axis=1)


def accuracy(pred, labels) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    return float(np.mean(pred == labels))


@dataclass
class OptimizerState:
    """Momentum buffers for one parameter group plus its SGD settings."""

    velocities: tuple
    lr: float
    momentum: float = 0.9
    weight_decay: float = 1e-3

    @classmethod
    def for_params(cls, params, lr: float, momentum: float = 0.9, weight_decay: float = 1e-3):
        vel = tuple(np.zeros_like(a) for a in _arrays(params))
        return cls(vel, lr, momentum, weight_decay)


def _arrays(params) -> list:
    return [getattr(params, f.name) for f in dataclasses.fields(params)]


def sgd_step(params, grads, state: OptimizerState, lr: float | None = None):
    """One SGD update with coupled weight decay and heavy-ball momentum.

    ``params`` and ``grads`` are instances of the same array dataclass
    (``ModelParams`` or ``TransitionParams``).  ``lr`` overrides the state's
    learning rate for scheduled runs.  Returns ``(new_params, new_state)``;
    inputs are not modified.
    """
    eta = state.lr if lr is None else lr
    p_arr, g_arr = _arrays(params), _arrays(grads)
    if len(p_arr) != len(state.velocities):
        raise ArgumentError("optimizer state does not match parameter group")
    new_p, new_v = [], []
    for p, g, v in zip(p_arr, g_arr, state.velocities):
        if p.shape != g.shape or p.shape != v.shape:
            raise ArgumentError(f"shape mismatch in sgd_step: {p.shape}, {g.shape}, {v.shape}")
        g_eff = g + state.weight_decay * p
        v = state.momentum * v + g_eff
        new_p.append(p - eta * v)
        new_v.append(v)
    return type(params)(*new_p), dataclasses.replace(state, velocities=tuple(new_v))


def poly_lr(base_lr: float, step: int, total_steps: int, gamma: float = 10.0, power: float = 0.75) -> float:
    """Polynomial decay ``base * (1 + gamma * step/total) ** -power``."""
    if total_steps <= 0:
        return base_lr
    return base_lr * (1.0 + gamma * step / total_steps) ** (-power)
