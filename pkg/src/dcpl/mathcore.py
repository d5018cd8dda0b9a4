"""Dense float64 kernels shared by the rest of the package.

Vectors and matrices are plain ``numpy.ndarray`` objects.  Functions that
take a vector also accept a 2-D array and then work row-wise along the last
axis, which is how the training code calls them.
"""
import numpy as np

from .errors import ArgumentError, DegenerateInputError

LOG_FLOOR = 1e-12


def _as_float(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return arr


def softmax_temp(logits, tau: float = 1.0) -> np.ndarray:
    """Temperature softmax along the last axis, max-shifted for stability."""
    if not tau > 0:
        raise ArgumentError(f"temperature must be positive, got {tau!r}")
    z = _as_float(logits, "logits") / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy_onehot(probs, label: int) -> float:
    p = _as_float(probs, "probs")
    if p.ndim != 1:
        raise ArgumentError("probs must be a vector")
    if not 0 <= label < p.shape[0]:
        raise ArgumentError(f"label {label} out of range for {p.shape[0]} classes")
    return float(-np.log(p[label] + LOG_FLOOR))


def entropy(probs) -> float:
    """Shannon entropy in nats, with 0 ln 0 taken as 0."""
    p = _as_float(probs, "probs")
    if np.any(p < 0):
        raise ArgumentError("probability vector has a negative entry")
    safe = np.where(p > 0, p, 1.0)
    return float(-np.sum(np.where(p > 0, p * np.log(safe), 0.0)))


def cosine_similarity(a, b) -> float:
    a = _as_float(a, "a")
    b = _as_float(b, "b")
    if a.shape != b.shape:
        raise ArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("cosine similarity of a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_matrix(rows: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities, shape (len(rows), len(refs)).

    Zero-norm inputs are the caller's responsibility to reject first.
    """
    rn = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    cn = refs / np.linalg.norm(refs, axis=1, keepdims=True)
    return np.clip(rn @ cn.T, -1.0, 1.0)


def frobenius_sq(a, b) -> float:
    a = _as_float(a, "a")
    b = _as_float(b, "b")
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sum((a - b) ** 2))
