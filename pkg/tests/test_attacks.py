import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from poisonlab import linalg_core as lc
from poisonlab.attacks import (OptimizerParams, PerturbBudget, attack_lp, attack_up, load_outcome,
                               lp_hypergradient, lp_objective, perturbation_norm, project_ball)
from poisonlab.datagen import make_task
from poisonlab.errors import InvalidConfig

QUICK = OptimizerParams(max_iter=60)


def test_budget_validation():
    with pytest.raises(InvalidConfig):
        PerturbBudget(0.0)
    with pytest.raises(InvalidConfig):
        PerturbBudget(1.0, "nuclear")
    with pytest.raises(InvalidConfig):
        OptimizerParams(grad_mode="adjoint")


def test_projection_examples():
    eps = 0.7
    d = 0.1 * np.ones((2, 2))
    assert project_ball(d, PerturbBudget(eps)) is not None
    assert np.array_equal(project_ball(d, PerturbBudget(eps)), d)
    assert np.allclose(project_ball(2 * eps * np.eye(3), PerturbBudget(eps)), eps * np.eye(3))
    assert np.allclose(project_ball(np.diag([3.0, 1.0]), PerturbBudget(2.0)), np.diag([2.0, 1.0]))
    f = project_ball(np.full((2, 2), 3.0), PerturbBudget(1.0, "frobenius"))
    assert lc.fnorm(f) == pytest.approx(1.0)


mats = st.tuples(st.integers(1, 6), st.integers(1, 6)).flatmap(
    lambda s: arrays(float, s, elements=st.floats(-50, 50, allow_nan=False)))


@given(mats, st.floats(1e-3, 10), st.sampled_from(["spectral", "frobenius"]))
def test_projection_feasible_and_idempotent(d, eps, norm):
    b = PerturbBudget(eps, norm)
    p = project_ball(d, b)
    assert perturbation_norm(p, norm) <= eps * (1 + 1e-9)
    assert np.array_equal(project_ball(p, b), p)


@given(st.integers(2, 5).flatmap(lambda n: arrays(float, (n, n), elements=st.floats(-5, 5, allow_nan=False))),
       st.floats(0.01, 3))
def test_symmetric_projection(d, eps):
    b = PerturbBudget(eps, "spectral", symmetric=True)
    p = project_ball(d, b)
    assert np.array_equal(p, p.T)
    assert lc.opnorm2(p) <= eps * (1 + 1e-9)
    assert np.array_equal(project_ball(p, b), p)


def test_up_tiny_budget():
    x = make_task("dense", 1).x_train
    out = attack_up(x, PerturbBudget(1e-12), QUICK)
    assert lc.cond2(x + out.delta) == pytest.approx(lc.cond2(x), rel=1e-6)


def test_up_diag_frobenius_beats_axis_candidate():
    out = attack_up(np.diag([2.0, 1.0]), PerturbBudget(0.5, "frobenius"))
    kappa = lc.cond2(np.diag([2.0, 1.0]) + out.delta)
    assert kappa >= 2.0 and kappa >= (2 + 0.5 / 2**0.5) / (1 - 0.5 / 2**0.5)
    assert lc.fnorm(out.delta) <= 0.5 * (1 + 1e-9)


def test_up_reaches_spectral_optimum():
    # with eps < sigma_min the best spectral-ball kappa is (s1 + eps) / (sn - eps)
    x = make_task("dense", 0).x_train
    s = lc.singular_values(x)
    out = attack_up(x, PerturbBudget(0.5))
    assert out.objective == pytest.approx((s[0] + 0.5) / (s[-1] - 0.5), rel=1e-6)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("norm", ["spectral", "frobenius"])
def test_outcome_invariants(seed, norm):
    t = make_task("dense", seed)
    for out in (attack_up(t.x_train, PerturbBudget(0.3, norm), QUICK),
                attack_lp(t, PerturbBudget(0.3, norm), QUICK)):
        assert perturbation_norm(out.delta, norm) <= 0.3 * (1 + 1e-9)
        assert np.all(np.diff(out.objective_trace) >= 0)
        assert out.objective_trace[-1] >= out.objective_trace[0]


def test_lp_tiny_budget_keeps_clean_error():
    t = make_task("dense", 2)
    out = attack_lp(t, PerturbBudget(1e-12), QUICK)
    assert abs(lp_objective(t, out.delta) - lp_objective(t, np.zeros_like(t.x_train))) <= 1e-6


def _fd_objective_grad(t, d, h=1e-6):
    g = np.zeros_like(d)
    for idx in np.ndindex(d.shape):
        e = np.zeros_like(d)
        e[idx] = h
        g[idx] = (lp_objective(t, d + e) - lp_objective(t, d - e)) / (2 * h)
    return g


def _rel(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


def test_lp_hypergradient_rectangular_matches_fd():
    t = make_task("dense", 0)
    d = project_ball(np.random.default_rng(0).normal(size=t.x_train.shape), PerturbBudget(0.1))
    ga = lp_hypergradient(t, d, "analytic")
    assert _rel(ga, _fd_objective_grad(t, d)) <= 1e-4
    assert _rel(lp_hypergradient(t, d, "finite_diff"), ga) <= 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_lp_hypergradient_square_matches_fd(seed):
    t = make_task("sdd", seed, n=6)
    d = project_ball(np.random.default_rng(seed).normal(size=t.x_train.shape), PerturbBudget(0.3))
    assert _rel(lp_hypergradient(t, d, "analytic"), _fd_objective_grad(t, d)) <= 1e-4


def test_lp_increases_error_and_serializes(tmp_path):
    t = make_task("sdd", 1, n=8)
    out = attack_lp(t, PerturbBudget(0.4), QUICK)
    assert out.objective > 0.1 and out.grad_mode == "analytic"
    out.save(tmp_path)
    back = load_outcome(tmp_path)
    assert np.array_equal(back.delta, out.delta) and back.budget == out.budget
    assert back.objective_trace == out.objective_trace
