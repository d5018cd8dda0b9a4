"""End-to-end adaptation loop."""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ArgumentError, NumericError
from .losses import HyperParams, LossBreakdown, total_loss
from .model import ModelParams, OptimizerState, accuracy, poly_lr, predict_labels, sgd_step
from .pseudolabel import PriorMatrix, assign_pseudo_labels, compute_centroids, compute_prior_matrix
from .transition import init_near_identity, materialize

logger = logging.getLogger(__name__)

IDENTITY_BETA = 30.0


@dataclass
class AdaptationReport:
    epochs: list  # LossBreakdown per epoch, sample-weighted over batches
    clean_accuracy: list  # per epoch, None without true labels
    transition: np.ndarray
    params: ModelParams
    prior: PriorMatrix
    pseudo_labels: np.ndarray
    pseudo_label_accuracy: float | None
    initial_accuracy: float | None
    seconds: float
    mode: str = "adapt"
    warnings: list = field(default_factory=list)


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def oracle_transition(true_labels, pseudo_labels, k: int) -> np.ndarray:
    """Empirical ``p(pseudo = i | true = j)``; empty true classes get a one-hot column."""
    true_labels = np.asarray(true_labels)
    pseudo_labels = np.asarray(pseudo_labels)
    counts = np.zeros((k, k))
    np.add.at(counts, (pseudo_labels, true_labels), 1.0)
    col = counts.sum(axis=0)
    out = np.zeros((k, k))
    for j in range(k):
        if col[j] == 0:
            logger.warning("true class %d has no samples; oracle column set to one-hot", j)
            out[j, j] = 1.0
        else:
            out[:, j] = counts[:, j] / col[j]
    return out


def _prepare(ds: Dataset, source_head: ModelParams, hp: HyperParams):
    hp.validate()
    ds.validate()
    if source_head.k != ds.k or source_head.d_f != ds.d_f:
        raise ArgumentError(
            f"source head {source_head.k}x{source_head.d_f} does not fit dataset k={ds.k}, d_f={ds.d_f}"
        )
    centroids = compute_centroids(ds, source_head)
    pseudo = assign_pseudo_labels(ds, centroids)
    labelled = ds.with_pseudo_labels(pseudo)
    prior = compute_prior_matrix(labelled, centroids, hp.tau)
    return labelled, prior


def _run(ds: Dataset, source_head: ModelParams, hp: HyperParams, mode: str) -> AdaptationReport:
    start = time.perf_counter()
    ds, prior = _prepare(ds, source_head, hp)
    k = ds.k
    pseudo = ds.pseudo_labels.copy()
    pseudo.setflags(write=False)
    prior_mat = prior.matrix.copy()
    prior_mat.setflags(write=False)
    frozen_digest = _digest(pseudo, prior_mat)
    warnings = [f"pseudo-class {c} is empty; prior row set to one-hot" for c in prior.empty_classes]

    if mode == "adapt":
        transition = init_near_identity(k, hp.beta)
    elif mode == "adapt-identity":
        transition = materialize(init_near_identity(k, IDENTITY_BETA))
    elif mode == "adapt-oracle":
        if ds.true_labels is None:
            raise ArgumentError("the oracle transition needs true labels")
        transition = oracle_transition(ds.true_labels, pseudo, k)
    else:
        raise ArgumentError(f"unknown adaptation mode {mode!r}")
    learn_t = mode == "adapt"

    params = source_head.copy()
    head_state = OptimizerState.for_params(params, hp.lr, hp.momentum, hp.weight_decay)
    t_state = OptimizerState.for_params(transition, hp.lr, hp.momentum, hp.weight_decay) if learn_t else None

    def clean_acc(p):
        if ds.true_labels is None:
            return None
        return accuracy(predict_labels(p, ds.features_f), ds.true_labels)

    initial_acc = clean_acc(params)
    pl_acc = None if ds.true_labels is None else accuracy(pseudo, ds.true_labels)

    # batch order depends on the seed alone so paired runs see identical batches
    rng = np.random.Generator(np.random.PCG64(hp.seed))
    n, bs = ds.n, hp.batch_size
    n_batches = -(-n // bs)
    total_steps = hp.epochs * n_batches
    step = 0
    history, accs = [], []
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        sums = np.zeros(5)
        for b in range(n_batches):
            idx = order[b * bs:(b + 1) * bs]
            br, g_head, g_t = total_loss(params, transition, prior_mat, ds.features_f[idx], pseudo[idx], hp)
            if not np.isfinite(br.total):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1}")
            lr = poly_lr(hp.lr, step, total_steps) if hp.lr_schedule == "poly" else hp.lr
            params, head_state = sgd_step(params, g_head, head_state, lr)
            if learn_t:
                transition, t_state = sgd_step(transition, g_t, t_state, lr)
            if not (np.all(np.isfinite(params.weights)) and np.all(np.isfinite(params.bias))
                    and (not learn_t or np.all(np.isfinite(transition.logits)))):
                raise NumericError(f"parameters diverged at epoch {epoch + 1}, batch {b + 1}")
            sums += len(idx) * np.array([br.ce_noisy, br.trace_term, br.prior_term, br.sfda_term, br.total])
            step += 1
        if _digest(pseudo, prior_mat) != frozen_digest:
            raise AssertionError("pseudo-labels or prior changed during training")
        history.append(LossBreakdown(*(float(v) for v in sums / n)))
        accs.append(clean_acc(params))
        logger.info("epoch %d total %.6f acc %s", epoch + 1, history[-1].total, accs[-1])

    final_t = materialize(transition) if learn_t else np.asarray(transition, dtype=np.float64)
    return AdaptationReport(
        epochs=history,
        clean_accuracy=accs,
        transition=final_t,
        params=params,
        prior=prior,
        pseudo_labels=np.array(pseudo),
        pseudo_label_accuracy=pl_acc,
        initial_accuracy=initial_acc,
        seconds=time.perf_counter() - start,
        mode=mode,
        warnings=warnings,
    )


def run_adaptation(ds: Dataset, source_head: ModelParams, hp: HyperParams) -> AdaptationReport:
    """Pseudo-label once, then jointly train the head and the transition matrix."""
    return _run(ds, source_head, hp, "adapt")


def run_identity_baseline(ds: Dataset, source_head: ModelParams, hp: HyperParams) -> AdaptationReport:
    """Same pipeline with the transition frozen at a numerically exact identity."""
    return _run(ds, source_head, hp, "adapt-identity")


def run_oracle(ds: Dataset, source_head: ModelParams, hp: HyperParams) -> AdaptationReport:
    """Same pipeline with the transition frozen at the empirical pseudo/true confusion."""
    return _run(ds, source_head, hp, "adapt-oracle")
