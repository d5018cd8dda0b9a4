"""Synthetic two-domain benchmark.

Source samples are unit-variance Gaussian clusters in the classifier view.
The target domain applies a rotation in a random 2-plane plus a per-dimension
translation to the same clusters, so the source head degrades on it.  The
pretrained view is a fixed random linear map of the class mean plus its own
independent noise; it does not see the shift, so its errors are independent
of the classifier view given the class.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Dataset
from .errors import ArgumentError
from .losses import HyperParams
from .mathcore import LOG_FLOOR
from .model import ModelParams, OptimizerState, forward_probs, sgd_step
from .trainer import oracle_transition as _oracle_counts


@dataclass
class SynthConfig:
    k: int = 5
    d_f: int = 16
    d_p: int = 16
    n_source: int = 2000
    n_target: int = 2000
    class_separation: float = 3.0
    shift_translation: float = 0.5
    shift_rotation: float = 0.6
    pretrained_noise: float = 1.1
    label_noise_target: str = "none"
    seed: int = 2020

    def validate(self) -> None:
        if self.k < 2:
            raise ArgumentError(f"k must be at least 2, got {self.k}")
        if self.d_f < 2 or self.d_p < 2:
            raise ArgumentError("feature dimensions must be at least 2")
        if self.n_source < 1 or self.n_target < 1:
            raise ArgumentError("sample counts must be positive")
        for name in ("class_separation", "shift_translation", "pretrained_noise"):
            if not getattr(self, name) >= 0:
                raise ArgumentError(f"{name} must be non-negative")
        if not np.isfinite(self.shift_rotation):
            raise ArgumentError("shift_rotation must be finite")
        if self.label_noise_target != "none":
            raise ArgumentError("label noise comes from the domain shift; label_noise_target must be 'none'")

    def as_dict(self) -> dict:
        return asdict(self)


def _class_means(rng, k: int, d: int, separation: float) -> np.ndarray:
    if k <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        # orthonormal directions scaled so every pair sits `separation` apart
        return q[:, :k].T * (separation / np.sqrt(2.0))
    dirs = rng.standard_normal((k, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * (separation / np.sqrt(2.0))


def _plane_rotation(rng, d: int, angle: float) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, 2)))
    u, v = q[:, 0], q[:, 1]
    c, s = np.cos(angle), np.sin(angle)
    return (np.eye(d) + (c - 1.0) * (np.outer(u, u) + np.outer(v, v))
            + s * (np.outer(v, u) - np.outer(u, v)))


def _balanced_labels(rng, n: int, k: int) -> np.ndarray:
    return rng.permutation(np.arange(n) % k)


def generate_pair(cfg: SynthConfig) -> tuple:
    """Return ``(source, target)`` datasets, both carrying true labels."""
    cfg.validate()
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    means = _class_means(rng, cfg.k, cfg.d_f, cfg.class_separation)
    projection = rng.standard_normal((cfg.d_p, cfg.d_f)) / np.sqrt(cfg.d_f)
    rotation = _plane_rotation(rng, cfg.d_f, cfg.shift_rotation)
    translation = cfg.shift_translation * rng.choice([-1.0, 1.0], size=cfg.d_f)

    def draw(n, shifted):
        y = _balanced_labels(rng, n, cfg.k)
        clean = means[y] + rng.standard_normal((n, cfg.d_f))
        ff = clean @ rotation.T + translation if shifted else clean
        fp = means[y] @ projection.T + cfg.pretrained_noise * rng.standard_normal((n, cfg.d_p))
        return Dataset(ff, fp, cfg.k, true_labels=y, projection=projection)

    source = draw(cfg.n_source, shifted=False)
    target = draw(cfg.n_target, shifted=True)
    source.validate()
    target.validate()
    return source, target


def source_hyperparams(**overrides) -> HyperParams:
    """Defaults for the supervised source stage."""
    hp = HyperParams(lr=0.05, epochs=20, batch_size=64, im_weight=0.0)
    for key, value in overrides.items():
        setattr(hp, key, value)
    return hp


def train_source_head(source: Dataset, hp: HyperParams) -> ModelParams:
    """Plain cross-entropy SGD on labelled source data, starting from zeros."""
    if source.true_labels is None:
        raise ArgumentError("source training needs true labels")
    hp.validate()
    params = ModelParams.zeros(source.k, source.d_f)
    state = OptimizerState.for_params(params, hp.lr, hp.momentum, hp.weight_decay)
    rng = np.random.Generator(np.random.PCG64(hp.seed))
    x, y, n, bs = source.features_f, source.true_labels, source.n, hp.batch_size
    for _ in range(hp.epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            p = forward_probs(params, x[idx])
            grad_z = p.copy()
            grad_z[np.arange(len(idx)), y[idx]] -= 1.0
            grad_z /= len(idx)
            grads = ModelParams(grad_z.T @ x[idx], grad_z.sum(axis=0))
            params, state = sgd_step(params, grads, state)
    return params


def source_loss(params: ModelParams, source: Dataset) -> float:
    p = forward_probs(params, source.features_f)
    return float(np.mean(-np.log(p[np.arange(source.n), source.true_labels] + LOG_FLOOR)))


def oracle_transition(ds: Dataset) -> np.ndarray:
    """Column-stochastic ``count(pseudo=i, true=j) / count(true=j)``."""
    if ds.true_labels is None or ds.pseudo_labels is None:
        raise ArgumentError("oracle transition needs both true and pseudo labels")
    return _oracle_counts(ds.true_labels, ds.pseudo_labels, ds.k)
