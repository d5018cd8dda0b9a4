"""Learnable noise transition matrix.

The matrix follows the ``t[i, j] = p(noisy = i | clean = j)`` convention, so
every column is a distribution.  It is parametrized by unconstrained logits
with a softmax taken down each column, which keeps it feasible without any
projection step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .mathcore import frobenius_sq


@dataclass
class TransitionParams:
    logits: np.ndarray  # (k, k), one logit column per clean class

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 2 or self.logits.shape[0] != self.logits.shape[1]:
            raise ArgumentError(f"transition logits must be square, got {self.logits.shape}")

    @property
    def k(self) -> int:
        return self.logits.shape[0]

    def copy(self) -> "TransitionParams":
        return TransitionParams(self.logits.copy())


def materialize(tp: TransitionParams) -> np.ndarray:
    """Column-wise softmax of the logits; strictly positive, columns sum to 1."""
    z = tp.logits
    if not np.all(np.isfinite(z)):
        raise ArgumentError("transition logits contain non-finite entries")
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def materialize_vjp(t_hat: np.ndarray, grad_t: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. the materialized matrix back to its logits."""
    return t_hat * (grad_t - np.sum(grad_t * t_hat, axis=0, keepdims=True))


def init_near_identity(k: int, beta: float = 6.0) -> TransitionParams:
    """Logits with ``beta`` on the diagonal and zeros elsewhere.

    An exact identity is out of reach of a softmax parametrization; the
    materialized diagonal is ``exp(beta) / (exp(beta) + k - 1)``.
    """
    if k < 2:
        raise ArgumentError(f"need at least two classes, got k={k}")
    if beta < 0:
        raise ArgumentError(f"beta must be non-negative, got {beta}")
    return TransitionParams(np.eye(k) * float(beta))


def trace_penalty(t_hat: np.ndarray) -> float:
    return float(np.trace(t_hat))


def prior_penalty(t_hat: np.ndarray, prior: np.ndarray, transpose: bool = False) -> float:
    """Squared Frobenius distance to the prior matrix.

    The prior is row-stochastic while ``t_hat`` is column-stochastic; by
    default they are compared entry by entry as they stand.  ``transpose``
    compares against the prior's transpose instead.
    """
    ref = np.asarray(prior).T if transpose else prior
    return frobenius_sq(t_hat, ref)


def export_csv(matrix: np.ndarray) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in np.asarray(matrix))
