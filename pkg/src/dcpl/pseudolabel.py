"""One-shot pseudo-labelling from source-weighted centroids in the pretrained view."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ArgumentError, DegenerateClassError, DegenerateInputError
from .mathcore import cosine_matrix, softmax_temp
from .model import ModelParams, forward_probs

logger = logging.getLogger(__name__)

MIN_CLASS_WEIGHT = 1e-9


@dataclass
class PriorMatrix:
    """Row ``k`` is the mean sharpened cosine softmax over samples pseudo-labelled ``k``."""

    matrix: np.ndarray
    tau: float
    empty_classes: tuple = field(default_factory=tuple)


def compute_centroids(ds: Dataset, source_head: ModelParams) -> np.ndarray:
    """Class centroids in the pretrained view, shape (k, d_p).

    Each sample's pretrained feature is weighted by the source head's softmax
    probability for the class.
    """
    if source_head.d_f != ds.d_f or source_head.k != ds.k:
        raise ArgumentError(
            f"source head {source_head.k}x{source_head.d_f} does not fit dataset k={ds.k}, d_f={ds.d_f}"
        )
    weights = forward_probs(source_head, ds.features_f)  # (n, k)
    totals = weights.sum(axis=0)
    for cls in range(ds.k):
        if totals[cls] < MIN_CLASS_WEIGHT:
            raise DegenerateClassError(cls, f"class {cls} has total source probability {totals[cls]:.3g}")
    centroids = (weights.T @ ds.features_p) / totals[:, None]
    norms = np.linalg.norm(centroids, axis=1)
    if np.any(norms == 0):
        cls = int(np.argmin(norms))
        raise DegenerateClassError(cls, f"centroid of class {cls} is the zero vector")
    return centroids


def _checked_cosines(ds: Dataset, centroids: np.ndarray) -> np.ndarray:
    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.ndim != 2 or centroids.shape[1] != ds.d_p:
        raise ArgumentError(f"centroids of shape {centroids.shape} do not match d_p={ds.d_p}")
    norms = np.linalg.norm(ds.features_p, axis=1)
    if np.any(norms == 0):
        raise DegenerateInputError(f"pretrained feature of row {int(np.argmin(norms))} has zero norm")
    cnorms = np.linalg.norm(centroids, axis=1)
    if np.any(cnorms == 0):
        raise DegenerateClassError(int(np.argmin(cnorms)), "zero-norm centroid")
    return cosine_matrix(ds.features_p, centroids)


def assign_pseudo_labels(ds: Dataset, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid by cosine similarity; ties go to the lowest class index."""
    return np.argmax(_checked_cosines(ds, centroids), axis=1)


def compute_prior_matrix(ds: Dataset, centroids: np.ndarray, tau: float = 0.01,
                         on_empty: str = "fallback") -> PriorMatrix:
    """Build the row-stochastic prior from sharpened cosine logits.

    A class with no pseudo-labelled samples either gets a one-hot row at its
    own index and a logged warning (``on_empty="fallback"``) or raises
    :class:`DegenerateClassError` (``on_empty="raise"``).
    """
    if ds.pseudo_labels is None:
        raise ArgumentError("dataset has no pseudo-labels")
    if on_empty not in ("fallback", "raise"):
        raise ArgumentError(f"on_empty must be 'fallback' or 'raise', got {on_empty!r}")
    soft = softmax_temp(_checked_cosines(ds, centroids), tau)
    k = ds.k
    prior = np.zeros((k, k))
    empty = []
    for cls in range(k):
        members = soft[ds.pseudo_labels == cls]
        if len(members) == 0:
            if on_empty == "raise":
                raise DegenerateClassError(cls, f"no sample is pseudo-labelled as class {cls}")
            logger.warning("pseudo-class %d is empty; prior row set to one-hot", cls)
            prior[cls, cls] = 1.0
            empty.append(cls)
        else:
            prior[cls] = members.mean(axis=0)
    return PriorMatrix(prior, float(tau), tuple(empty))
