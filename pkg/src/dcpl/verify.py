"""Independent numerical checks: finite-difference gradients and the trace bound."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ContractError
from .losses import HyperParams, dcpl_batch_loss, total_loss
from .mathcore import LOG_FLOOR, frobenius_sq, softmax_temp
from .model import ModelParams
from .transition import TransitionParams, init_near_identity, materialize


@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    worst_index: tuple
    h: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < 1e-6


def finite_diff_gradcheck(fn, point, h: float = 1e-5, name: str = "x") -> GradCheckReport:
    """Compare ``fn``'s analytic gradient with central differences.

    ``fn(x)`` must return ``(value, gradient)`` and be deterministic.  The
    relative error per coordinate uses ``max(|analytic|, |numeric|, 1e-10)``
    as denominator.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ArgumentError(f"step h must lie in [1e-7, 1e-3], got {h}")
    point = np.asarray(point)
    x = np.array(point, dtype=np.longdouble if point.dtype == np.longdouble else np.float64)
    value, analytic = fn(x.copy())
    again, _ = fn(x.copy())
    if value != again:
        raise ContractError(f"loss evaluator is not deterministic ({value!r} != {again!r})")
    analytic = np.asarray(analytic, dtype=x.dtype)
    if analytic.shape != x.shape:
        raise ContractError(f"gradient shape {analytic.shape} does not match point {x.shape}")
    numeric = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp.flat[i] += h
        xm = x.copy()
        xm.flat[i] -= h
        numeric.flat[i] = (fn(xp)[0] - fn(xm)[0]) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-10)
    rel = np.abs(analytic - numeric) / denom
    worst = int(np.argmax(rel))
    worst_idx = tuple(int(i) for i in np.unravel_index(worst, x.shape))
    return GradCheckReport(name, float(rel.flat[worst]), worst_idx, h)


def reference_objective(weights, bias, transition, prior, x, y, hp: HyperParams,
                        learned: bool = True, include_im: bool = True):
    """Forward-only evaluation of the training objective in extended precision.

    Written independently of :mod:`dcpl.losses` so that central differences
    of it form an oracle for the analytic gradients.  ``transition`` holds
    logits when ``learned`` is true, otherwise a fixed matrix.
    """
    f = np.longdouble
    w, b = np.asarray(weights, dtype=f), np.asarray(bias, dtype=f)
    x, tr = np.asarray(x, dtype=f), np.asarray(transition, dtype=f)
    prior = np.asarray(prior, dtype=f)
    z = x @ w.T + b
    e = np.exp(z - z.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    if learned:
        et = np.exp(tr - tr.max(axis=0, keepdims=True))
        t_hat = et / et.sum(axis=0, keepdims=True)
    else:
        t_hat = tr
    noisy = p @ t_hat.T
    n = len(y)
    ce = sum(-np.log(noisy[i, y[i]] + f(LOG_FLOOR)) for i in range(n)) / n
    ref = prior.T if hp.prior_transpose else prior
    total = ce + f(hp.lam) * np.trace(t_hat) + f(hp.gamma) * np.sum((t_hat - ref) ** 2)
    if include_im:
        cond = -np.sum(p * np.log(p)) / n
        p_bar = p.mean(axis=0)
        total = total + f(hp.im_weight) * (cond + np.sum(p_bar * np.log(p_bar)))
    return total


def _random_column_stochastic(rng, k: int) -> np.ndarray:
    m = rng.random((k, k)) + 1e-3
    return m / m.sum(axis=0, keepdims=True)


def random_instance(rng, k: int, d_f: int, batch: int):
    """A random head, transition, prior, batch and hyperparameters for gradient checks."""
    params = ModelParams(0.7 * rng.standard_normal((k, d_f)), 0.5 * rng.standard_normal(k))
    tp = TransitionParams(2.0 * np.eye(k) + rng.standard_normal((k, k)))
    prior = softmax_temp(rng.standard_normal((k, k)) * 2.0, 1.0)
    x = rng.standard_normal((batch, d_f))
    y = rng.integers(0, k, size=batch)
    hp = HyperParams(lam=float(rng.uniform(0.01, 1.0)), gamma=float(rng.uniform(0.01, 1.0)),
                     im_weight=float(rng.uniform(0.5, 1.5)))
    return params, tp, prior, x, y, hp


def gradcheck_instance(params, tp, prior, x, y, hp, objective=total_loss, h: float = 1e-5) -> list:
    """Gradient checks for weights, bias and transition logits of one objective.

    Analytic gradients come from ``objective`` at the point; numeric ones
    from central differences of :func:`reference_objective`.
    """
    include_im = objective is total_loss
    _, g_head, g_t = objective(params, tp, prior, x, y, hp)
    analytic = {"weights": g_head.weights, "bias": g_head.bias, "transition_logits": g_t.logits}
    point = {"weights": params.weights, "bias": params.bias, "transition_logits": tp.logits}

    def make_fn(which):
        def fn(v):
            args = dict(point)
            args[which] = v
            value = reference_objective(args["weights"], args["bias"], args["transition_logits"],
                                        prior, x, y, hp, include_im=include_im)
            return value, analytic[which]
        return fn

    return [
        finite_diff_gradcheck(make_fn(name), np.asarray(point[name], dtype=np.longdouble), h, name)
        for name in ("weights", "bias", "transition_logits")
    ]


def gradcheck_suite(n_configs: int = 20, seed: int = 0, h: float = 1e-5) -> list:
    """Check both the noisy-label objective and the full objective at random points."""
    rng = np.random.Generator(np.random.PCG64(seed))
    reports = []
    for i in range(n_configs):
        k = (3, 5)[i % 2]
        d_f = (4, 8)[(i // 2) % 2]
        inst = random_instance(rng, k, d_f, 16)
        for label, objective in (("dcpl", dcpl_batch_loss), ("total", total_loss)):
            for rep in gradcheck_instance(*inst, objective=objective, h=h):
                rep.name = f"cfg{i}/{label}/{rep.name}"
                reports.append(rep)
    return reports


@dataclass
class BoundCheck:
    precondition_met: bool
    holds: bool
    induced_diagonal: np.ndarray
    violations: list


def trace_bound_check(t_hat, p_bar, tol: float = 1e-12) -> BoundCheck:
    """Check that the induced diagonal ``sum_j t_hat[i, j] * p_bar[j, i]`` never exceeds ``t_hat[i, i]``.

    ``t_hat`` must dominate each of its rows on the diagonal and ``p_bar``
    must be column-stochastic; otherwise the result reports the
    precondition as unmet rather than a violation.
    """
    t_hat = np.asarray(t_hat, dtype=np.float64)
    p_bar = np.asarray(p_bar, dtype=np.float64)
    if t_hat.shape != p_bar.shape or t_hat.ndim != 2 or t_hat.shape[0] != t_hat.shape[1]:
        raise ArgumentError("t_hat and p_bar must be square matrices of equal shape")
    diag = np.diag(t_hat)
    induced = np.einsum("ij,ji->i", t_hat, p_bar)
    dominant = bool(np.all(t_hat <= diag[:, None]))
    stochastic = bool(np.all(p_bar >= 0) and np.allclose(p_bar.sum(axis=0), 1.0, atol=1e-12, rtol=0))
    if not (dominant and stochastic):
        return BoundCheck(False, False, induced, [])
    violations = [int(i) for i in np.nonzero(induced > diag + tol)[0]]
    return BoundCheck(True, not violations, induced, violations)


def random_row_dominant(rng, k: int) -> np.ndarray:
    """Column-stochastic matrix whose diagonal is the largest entry of its row."""
    while True:
        m = _random_column_stochastic(rng, k) + np.eye(k) * rng.uniform(0.5, 3.0)
        m /= m.sum(axis=0, keepdims=True)
        if np.all(m <= np.diag(m)[:, None]):
            return m


def trace_bound_suite(trials: int = 1000, ks=(3, 5, 10), seed: int = 0) -> dict:
    rng = np.random.Generator(np.random.PCG64(seed))
    violations = unmet = 0
    for i in range(trials):
        k = ks[i % len(ks)]
        res = trace_bound_check(random_row_dominant(rng, k), _random_column_stochastic(rng, k))
        unmet += not res.precondition_met
        violations += len(res.violations)
    return {"trials": trials, "violations": violations, "precondition_unmet": unmet}


def transition_recovery_error(t_hat, t_oracle) -> float:
    """Frobenius distance between a learned and a reference transition matrix."""
    return float(np.sqrt(frobenius_sq(t_hat, t_oracle)))


def identity_reduction_suite(n_batches: int = 100, seed: int = 0) -> float:
    """Largest gap between the noisy-label loss at T_hat ~ I and plain cross-entropy."""
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for _ in range(n_batches):
        k = int(rng.integers(2, 11))
        d_f = int(rng.integers(2, 17))
        batch = int(rng.integers(1, 65))
        # logits of order one; at saturated probabilities the e^-30 off-diagonal mass shows
        params = ModelParams(rng.standard_normal((k, d_f)) / np.sqrt(d_f), 0.5 * rng.standard_normal(k))
        x = rng.standard_normal((batch, d_f))
        y = rng.integers(0, k, size=batch)
        prior = _random_column_stochastic(rng, k).T
        hp = HyperParams(lam=0.0, gamma=0.0, im_weight=0.0)
        t_hat = materialize(init_near_identity(k, 30.0))
        br, _, _ = dcpl_batch_loss(params, t_hat, prior, x, y, hp)
        p = softmax_temp(x @ params.weights.T + params.bias)
        plain = float(np.mean(-np.log(p[np.arange(batch), y] + LOG_FLOOR)))
        worst = max(worst, abs(br.ce_noisy - plain), abs(br.total - plain))
    return worst


def stochasticity_suite(cases: int = 1000, seed: int = 0) -> dict:
    """Column sums of materialized transitions and row sums of prior matrices."""
    from .dataset import Dataset
    from .pseudolabel import compute_prior_matrix

    rng = np.random.Generator(np.random.PCG64(seed))
    t_err = prior_err = 0.0
    for _ in range(cases):
        k = int(rng.integers(2, 11))
        logits = rng.standard_normal((k, k)) * rng.uniform(0.1, 20.0)
        t = materialize(TransitionParams(logits))
        t_err = max(t_err, float(np.max(np.abs(t.sum(axis=0) - 1.0))))
        n = int(rng.integers(k, 4 * k + 1))
        fp = rng.standard_normal((n, 4))
        centroids = rng.standard_normal((k, 4))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, size=n - k)])
        ds = Dataset(np.zeros((n, 1)), fp, k, pseudo_labels=labels)
        prior = compute_prior_matrix(ds, centroids, float(rng.choice([0.01, 0.05, 1.0])))
        prior_err = max(prior_err, float(np.max(np.abs(prior.matrix.sum(axis=1) - 1.0))))
    return {"cases": cases, "transition_colsum_err": t_err, "prior_rowsum_err": prior_err}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def run_all(seed: int = 0) -> list:
    """The full verification table used by ``dcpl verify``."""
    out = []

    t0 = time.perf_counter()
    reps = gradcheck_suite(seed=seed)
    worst = max(reps, key=lambda r: r.max_rel_error)
    out.append(CheckResult("gradcheck", worst.max_rel_error < 1e-6,
                           f"max rel err {worst.max_rel_error:.3e} at {worst.name}{list(worst.worst_index)}",
                           time.perf_counter() - t0))

    t0 = time.perf_counter()
    bound = trace_bound_suite(seed=seed)
    out.append(CheckResult("trace_bound", bound["violations"] == 0 and bound["precondition_unmet"] == 0,
                           f"{bound['violations']} violations in {bound['trials']} trials",
                           time.perf_counter() - t0))

    t0 = time.perf_counter()
    gap = identity_reduction_suite(seed=seed)
    out.append(CheckResult("identity_reduction", gap <= 1e-9, f"max gap {gap:.3e}", time.perf_counter() - t0))

    t0 = time.perf_counter()
    st = stochasticity_suite(seed=seed)
    out.append(CheckResult(
        "stochasticity",
        st["transition_colsum_err"] <= 1e-12 and st["prior_rowsum_err"] <= 1e-9,
        f"column err {st['transition_colsum_err']:.2e}, row err {st['prior_rowsum_err']:.2e}",
        time.perf_counter() - t0,
    ))
    return out
