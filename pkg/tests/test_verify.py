import numpy as np
import pytest

from dcpl.errors import ArgumentError, ContractError
from dcpl.losses import dcpl_batch_loss, total_loss
from dcpl.verify import (
    finite_diff_gradcheck,
    gradcheck_instance,
    identity_reduction_suite,
    random_instance,
    random_row_dominant,
    reference_objective,
    stochasticity_suite,
    trace_bound_check,
    trace_bound_suite,
    transition_recovery_error,
)


def test_quadratic_is_exact():
    rng = np.random.Generator(np.random.PCG64(0))
    x0 = rng.standard_normal(6)
    report = finite_diff_gradcheck(lambda x: (float(np.sum(x * x)), 2 * x), x0, h=1e-5)
    assert report.max_rel_error < 1e-9
    assert report.h == 1e-5 and len(report.worst_index) == 1


@pytest.mark.parametrize("h", [0.0, -1e-5, 1e-8, 1e-2])
def test_step_out_of_range(h):
    with pytest.raises(ArgumentError):
        finite_diff_gradcheck(lambda x: (float(np.sum(x)), np.ones_like(x)), np.zeros(2), h=h)


def test_nondeterministic_evaluator_rejected():
    rng = np.random.Generator(np.random.PCG64(1))
    with pytest.raises(ContractError):
        finite_diff_gradcheck(lambda x: (float(np.sum(x) + rng.random()), np.ones_like(x)), np.zeros(3))


def test_wrong_gradient_is_caught():
    report = finite_diff_gradcheck(lambda x: (float(np.sum(x * x)), 3 * x), np.ones((2, 2)))
    assert report.max_rel_error > 0.1
    assert report.worst_index in {(0, 0), (0, 1), (1, 0), (1, 1)}


def test_reference_objective_agrees_with_fast_path():
    rng = np.random.Generator(np.random.PCG64(2))
    params, tp, prior, x, y, hp = random_instance(rng, 5, 8, 16)
    for objective, include_im in ((dcpl_batch_loss, False), (total_loss, True)):
        fast = objective(params, tp, prior, x, y, hp)[0].total
        ref = reference_objective(params.weights, params.bias, tp.logits, prior, x, y, hp, include_im=include_im)
        assert abs(float(ref) - fast) <= 1e-12 * max(1.0, abs(fast))


def test_dcpl_gradients_at_random_point():
    rng = np.random.Generator(np.random.PCG64(0))
    inst = random_instance(rng, 3, 4, 16)
    for rep in gradcheck_instance(*inst, objective=dcpl_batch_loss):
        assert rep.max_rel_error < 1e-6, rep


@pytest.mark.parametrize("seed", range(1, 13))
def test_gradients_scale_normalized_across_seeds(seed):
    # at other seeds a few near-zero coordinates sit at the O(h^2) truncation floor of the
    # literal relative metric; normalizing by the group's gradient scale removes that artifact
    rng = np.random.Generator(np.random.PCG64(seed))
    params, tp, prior, x, y, hp = random_instance(rng, (3, 5)[seed % 2], (4, 8)[seed % 3 % 2], 16)
    _, g_head, g_t = total_loss(params, tp, prior, x, y, hp)
    analytic = {"weights": g_head.weights, "bias": g_head.bias, "transition_logits": g_t.logits}
    point = {"weights": params.weights, "bias": params.bias, "transition_logits": tp.logits}
    h = 1e-5
    for name, grad in analytic.items():
        base = {k: np.asarray(v, dtype=np.longdouble) for k, v in point.items()}
        numeric = np.zeros(grad.shape)
        for i in range(grad.size):
            plus = {k: v.copy() for k, v in base.items()}
            minus = {k: v.copy() for k, v in base.items()}
            plus[name].flat[i] += h
            minus[name].flat[i] -= h
            fp = reference_objective(plus["weights"], plus["bias"], plus["transition_logits"], prior, x, y, hp)
            fm = reference_objective(minus["weights"], minus["bias"], minus["transition_logits"], prior, x, y, hp)
            numeric.flat[i] = float((fp - fm) / (2 * h))
        scale = max(np.max(np.abs(grad)), 1e-10)
        assert np.max(np.abs(grad - numeric)) / scale < 1e-6, name


def test_trace_bound_examples():
    rng = np.random.Generator(np.random.PCG64(3))
    p_bar = rng.random((4, 4))
    p_bar /= p_bar.sum(axis=0)
    res = trace_bound_check(np.eye(4), p_bar)
    assert res.precondition_met and res.holds
    np.testing.assert_allclose(res.induced_diagonal, np.diag(p_bar))
    t_hat = random_row_dominant(rng, 4)
    res = trace_bound_check(t_hat, np.eye(4))
    assert res.holds and np.array_equal(res.induced_diagonal, np.diag(t_hat))


def test_trace_bound_precondition_not_met_is_not_a_violation():
    t_hat = np.array([[0.2, 0.9], [0.8, 0.1]])
    res = trace_bound_check(t_hat, np.eye(2))
    assert not res.precondition_met and res.violations == []
    with pytest.raises(ArgumentError):
        trace_bound_check(np.eye(2), np.eye(3))


def test_trace_bound_suite_zero_violations():
    out = trace_bound_suite(trials=300, seed=5)
    assert out["violations"] == 0 and out["precondition_unmet"] == 0


def test_recovery_error_examples():
    oracle = np.array([[0.5, 0.0], [0.5, 1.0]])
    assert transition_recovery_error(oracle, oracle) == 0.0
    assert transition_recovery_error(np.eye(2), oracle) == pytest.approx(np.sqrt(0.5), abs=1e-15)
    assert transition_recovery_error(np.eye(2), oracle) == pytest.approx(0.7071, abs=1e-4)
    rng = np.random.Generator(np.random.PCG64(4))
    a, b = rng.random((3, 3)), rng.random((3, 3))
    assert transition_recovery_error(a, b) == transition_recovery_error(b, a)
    with pytest.raises(ArgumentError):
        transition_recovery_error(np.eye(2), np.eye(3))


def test_identity_and_stochasticity_suites_small():
    assert identity_reduction_suite(n_batches=20, seed=9) <= 1e-9
    st = stochasticity_suite(cases=100, seed=9)
    assert st["transition_colsum_err"] <= 1e-12 and st["prior_rowsum_err"] <= 1e-9
