"""Training objectives and their analytic gradients.

The adaptation objective for one mini-batch is::

    mean CE(T_hat @ p(y|x), pseudo) + lam * tr(T_hat) + gamma * ||T_hat - T_c||_F^2
        + im_weight * (mean H(p(y|x)) - H(mean p(y|x)))

with ``p(y|x) = softmax(W x + b)``.  Gradients are returned for the head
parameters and for the transition logits.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ArgumentError
from .mathcore import LOG_FLOOR, log_softmax
from .model import ModelParams, logits
from .transition import TransitionParams, materialize, materialize_vjp


@dataclass
class HyperParams:
    lam: float = 0.01  # trace weight
    gamma: float = 0.01  # prior weight
    tau: float = 0.01  # prior temperature
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-3
    epochs: int = 50
    batch_size: int = 64
    seed: int = 2020
    im_weight: float = 1.0
    beta: float = 6.0  # diagonal logit of the near-identity init
    lr_schedule: str = "constant"
    prior_transpose: bool = False

    def validate(self) -> None:
        for name in ("lam", "gamma", "lr", "im_weight", "weight_decay", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ArgumentError(f"{name} must be a finite non-negative number, got {v!r}")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ArgumentError(f"tau must be positive, got {self.tau!r}")
        if not 0 <= self.momentum < 1:
            raise ArgumentError(f"momentum must lie in [0, 1), got {self.momentum!r}")
        if self.epochs < 0:
            raise ArgumentError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.lr_schedule not in ("constant", "poly"):
            raise ArgumentError(f"lr_schedule must be 'constant' or 'poly', got {self.lr_schedule!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ArgumentError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossBreakdown:
    ce_noisy: float
    trace_term: float
    prior_term: float
    sfda_term: float
    total: float

    def as_dict(self) -> dict:
        return asdict(self)


def _check_batch(params: ModelParams, features, labels=None):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ArgumentError("batch must be a non-empty 2-D feature matrix")
    if x.shape[1] != params.d_f:
        raise ArgumentError(f"batch feature dimension {x.shape[1]} does not match head d_f={params.d_f}")
    if labels is not None:
        y = np.asarray(labels)
        if y.shape != (x.shape[0],):
            raise ArgumentError("one pseudo-label per sample is required")
        if np.any((y < 0) | (y >= params.k)):
            raise ArgumentError("pseudo-label out of range")
        return x, y
    return x


def _head_backward(x: np.ndarray, p: np.ndarray, grad_p: np.ndarray) -> ModelParams:
    grad_z = p * (grad_p - np.sum(grad_p * p, axis=1, keepdims=True))
    return ModelParams(grad_z.T @ x, grad_z.sum(axis=0))


def _transition_of(transition):
    """Return (matrix, params-or-None); a bare array means a frozen matrix."""
    if isinstance(transition, TransitionParams):
        return materialize(transition), transition
    return np.asarray(transition, dtype=np.float64), None


def _dcpl_terms(p, y, t_hat, prior, hp: HyperParams):
    n = p.shape[0]
    rows = np.arange(n)
    noisy = p @ t_hat.T  # row b is T_hat @ p_b
    picked = noisy[rows, y] + LOG_FLOOR
    ce = float(np.mean(-np.log(picked)))
    trace_term = float(np.trace(t_hat))
    ref = prior.T if hp.prior_transpose else prior
    diff = t_hat - ref
    prior_term = float(np.sum(diff * diff))

    grad_noisy = np.zeros_like(noisy)
    grad_noisy[rows, y] = -1.0 / (picked * n)
    grad_p = grad_noisy @ t_hat
    grad_t = grad_noisy.T @ p + hp.lam * np.eye(t_hat.shape[0]) + 2.0 * hp.gamma * diff
    return ce, trace_term, prior_term, grad_p, grad_t


def _im_terms(p, logp):
    n = p.shape[0]
    cond = float(np.mean(-np.sum(p * logp, axis=1)))
    p_bar = p.mean(axis=0)
    log_pbar = np.log(np.maximum(p_bar, 1e-300))
    marg = float(-np.sum(p_bar * log_pbar))
    grad_p = (log_pbar[None, :] - logp) / n
    return cond - marg, grad_p


def dcpl_batch_loss(params: ModelParams, transition, prior, features, pseudo_labels, hp: HyperParams):
    """Noisy-label objective on one batch.

    ``transition`` is either :class:`TransitionParams` (learned) or a fixed
    column-stochastic array, in which case the returned transition gradient
    is ``None``.  Returns ``(LossBreakdown, head_grads, transition_grads)``.
    """
    x, y = _check_batch(params, features, pseudo_labels)
    t_hat, tp = _transition_of(transition)
    prior = np.asarray(getattr(prior, "matrix", prior), dtype=np.float64)
    if t_hat.shape != (params.k, params.k) or prior.shape != t_hat.shape:
        raise ArgumentError("transition/prior shapes do not match the head's class count")
    z = logits(params, x)
    logp = log_softmax(z)
    p = np.exp(logp)
    ce, tr, pr, grad_p, grad_t = _dcpl_terms(p, y, t_hat, prior, hp)
    total = ce + hp.lam * tr + hp.gamma * pr
    grads_head = _head_backward(x, p, grad_p)
    grads_t = TransitionParams(materialize_vjp(t_hat, grad_t)) if tp is not None else None
    return LossBreakdown(ce, tr, pr, 0.0, total), grads_head, grads_t


def im_loss(params: ModelParams, features):
    """Information-maximization term: mean per-sample entropy minus entropy of the mean."""
    x = _check_batch(params, features)
    logp = log_softmax(logits(params, x))
    p = np.exp(logp)
    value, grad_p = _im_terms(p, logp)
    return value, _head_backward(x, p, grad_p)


def total_loss(params: ModelParams, transition, prior, features, pseudo_labels, hp: HyperParams):
    """Full objective; same return convention as :func:`dcpl_batch_loss`."""
    x, y = _check_batch(params, features, pseudo_labels)
    t_hat, tp = _transition_of(transition)
    prior = np.asarray(getattr(prior, "matrix", prior), dtype=np.float64)
    if t_hat.shape != (params.k, params.k) or prior.shape != t_hat.shape:
        raise ArgumentError("transition/prior shapes do not match the head's class count")
    logp = log_softmax(logits(params, x))
    p = np.exp(logp)
    ce, tr, pr, grad_p, grad_t = _dcpl_terms(p, y, t_hat, prior, hp)
    im, grad_p_im = _im_terms(p, logp)
    total = ce + hp.lam * tr + hp.gamma * pr + hp.im_weight * im
    if hp.im_weight:
        grad_p = grad_p + hp.im_weight * grad_p_im
    grads_head = _head_backward(x, p, grad_p)
    grads_t = TransitionParams(materialize_vjp(t_hat, grad_t)) if tp is not None else None
    return LossBreakdown(ce, tr, pr, im, total), grads_head, grads_t
