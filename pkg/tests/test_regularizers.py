import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l0attack import autograd as ag
from l0attack import models
from l0attack.models import Model
from l0attack.regularizers import (
    Regularizer,
    SIGMA_MAX,
    SIGMA_MIN,
    SigmaController,
    l0_approx,
    l0_approx_grad,
    objective,
    penalty,
    sigma_update,
)
from oracles import central_difference, l0_reference, relative_error

# entries below 1e-100 would square to (sub)normal underflow; treat them as exact zeros
finite = st.floats(-50, 50, allow_nan=False).map(lambda v: 0.0 if abs(v) < 1e-100 else v)
sigmas = st.floats(1e-3, 1e2)
vectors = st.lists(finite, min_size=1, max_size=16).map(np.array)


def test_l0_examples():
    assert l0_approx([0.0, 0.0, 0.0], 1.0) == 0.0
    assert l0_approx([2.0], 2.0) == 0.5
    assert l0_approx([1.0, 2.0], 1.0) == pytest.approx(1.3, abs=1e-15)


def test_l0_grad_examples():
    np.testing.assert_array_equal(l0_approx_grad([0.0, 0.0], 3.0), [0.0, 0.0])
    np.testing.assert_array_equal(l0_approx_grad([1.0], 1.0), [0.5])


@pytest.mark.parametrize("fn", [l0_approx, l0_approx_grad])
@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_sigma_must_be_positive(fn, sigma):
    with pytest.raises(ValueError):
        fn([1.0], sigma)


def test_penalty_examples():
    assert penalty("l1", [1.0, -2.0]) == 3.0
    assert penalty("l2", [3.0, 4.0]) == 25.0
    assert penalty("none", [7.0, -1.0]) == 0.0
    assert penalty("asl0", [1.0, 2.0], 1.0) == pytest.approx(1.3)


def test_regularizer_lambda_nonnegative():
    with pytest.raises(ValueError):
        Regularizer("l1", -1e-3)
    assert Regularizer().lam == 1e-5


@settings(max_examples=200)
@given(delta=vectors, sigma=sigmas)
def test_l0_range_and_zero(delta, sigma):
    value = l0_approx(delta, sigma)
    assert 0.0 <= value < delta.size or (value == delta.size and np.min(np.abs(delta)) / sigma > 1e7)
    assert (value == 0.0) == (not np.any(delta))
    assert value == pytest.approx(l0_reference(delta, sigma), rel=1e-12, abs=1e-300)


@settings(max_examples=200)
@given(delta=vectors, sigma=sigmas, i=st.integers(0, 15), bump=st.floats(1e-2, 10))
def test_l0_increases_with_magnitude(delta, sigma, i, bump):
    i %= delta.size
    bigger = delta.copy()
    bigger[i] = abs(delta[i]) + bump
    smaller = delta.copy()
    smaller[i] = abs(delta[i])
    # strict in exact arithmetic; saturation at 1.0 can make it tie in floats
    assert l0_approx(bigger, sigma) >= l0_approx(smaller, sigma)
    if abs(delta[i]) / sigma < 1e3:
        assert l0_approx(bigger, sigma) > l0_approx(smaller, sigma)


@settings(max_examples=200)
@given(delta=vectors, sigma=sigmas, factor=st.floats(1.01, 10))
def test_l0_decreases_with_sigma(delta, sigma, factor):
    if not np.any(delta):
        return
    lo, hi = l0_approx(delta, sigma), l0_approx(delta, sigma * factor)
    assert hi <= lo
    if np.max(np.abs(delta)) / sigma < 1e3:
        assert hi < lo


@pytest.mark.parametrize("k", [1, 5, 16])
def test_l0_limit_counts_nonzeros(k):
    rng = np.random.default_rng(k)
    delta = np.zeros(64)
    idx = rng.choice(64, size=k, replace=False)
    delta[idx] = rng.choice([-1, 1], size=k) * rng.uniform(0.01, 3.0, size=k)
    assert abs(l0_approx(delta, 1e-8) - k) < 1e-6


@settings(max_examples=200)
@given(delta=vectors, sigma=sigmas, c=st.sampled_from([0.1, 3.0, 100.0]))
def test_l0_scale_equivariance(delta, sigma, c):
    assert abs(l0_approx(c * delta, c * sigma) - l0_approx(delta, sigma)) < 1e-12


@settings(max_examples=100)
@given(seed=st.integers(0, 2**32 - 1), sigma=st.floats(0.05, 5))
def test_l0_grad_matches_finite_differences(seed, sigma):
    delta = np.random.default_rng(seed).normal(0, 1, size=8)
    numeric = central_difference(lambda d: l0_reference(d, sigma), delta, 1e-5)
    assert relative_error(l0_approx_grad(delta, sigma), numeric) < 1e-6


@settings(max_examples=100)
@given(delta=vectors, sigma=sigmas)
def test_l0_grad_is_odd_and_matches_tape(delta, sigma):
    g = l0_approx_grad(delta, sigma)
    np.testing.assert_array_equal(l0_approx_grad(-delta, sigma), -g)
    assert np.all(g[delta == 0] == 0)
    tape = ag.Tape()
    leaf = tape.leaf(delta)
    taped = tape.backward(l0_approx(leaf, sigma))[leaf]
    assert relative_error(taped, g) < 1e-12


def test_l0_grad_matches_random_finite_differences_at_half():
    delta = np.random.default_rng(0).normal(size=16)
    numeric = central_difference(lambda d: l0_reference(d, 0.5), delta, 1e-5)
    assert relative_error(l0_approx_grad(delta, 0.5), numeric) < 1e-6


# ---------------------------------------------------------------------------
# objective


def zero_logistic(d=4):
    return Model("logistic", d, 2, {"w": np.zeros((2, d)), "b": np.zeros(2)})


def test_objective_zero_model_is_log_two():
    m = zero_logistic()
    delta = np.array([0.3, 0.0, -1.0, 2.0])
    reg = Regularizer("asl0", 0.1)
    J, L, pen = objective(m, np.ones(4), 0, delta, reg, sigma=0.5, attack="pgd")
    assert L == pytest.approx(-math.log(2.0), abs=1e-15)
    assert pen == pytest.approx(l0_reference(delta, 0.5))
    assert J == L + 0.1 * pen


def test_objective_with_zero_lambda_and_zero_delta():
    m = models.build("mlp", 4, 2, seed=0)
    x = np.array([0.1, 0.2, -0.3, 0.4])
    J, L, pen = objective(m, x, 1, np.zeros(4), Regularizer("l1", 0.0), attack="cw")
    assert J == L
    assert pen == 0.0
    J2, L2, pen2 = objective(m, x, 1, np.zeros(4), Regularizer("asl0", 0.3), attack="cw")
    assert pen2 == 0.0 and J2 == L2


@settings(max_examples=50)
@given(seed=st.integers(0, 1000), kind=st.sampled_from(["asl0", "l1", "l2", "none"]),
       attack=st.sampled_from(["pgd", "cw"]), lam=st.floats(0, 10))
def test_objective_is_loss_plus_weighted_penalty(seed, kind, attack, lam):
    rng = np.random.default_rng(seed)
    m = models.build("mlp", 6, 3, seed=seed)
    delta = rng.normal(size=6)
    J, L, pen = objective(m, rng.normal(size=6), seed % 3, delta, Regularizer(kind, lam), 0.7, attack)
    assert abs(J - (L + lam * pen)) <= 1e-12 * max(1.0, abs(J))


def test_objective_gradient_on_tape():
    m = models.build("mlp", 6, 2, seed=1)
    x = np.random.default_rng(2).normal(size=6)
    reg = Regularizer("asl0", 0.2)

    def f(d):
        return objective(m, x, 0, d, reg, 0.5, "pgd")[0]

    delta = np.random.default_rng(3).normal(size=6)
    assert ag.grad_check(f, delta) < 1e-4


# ---------------------------------------------------------------------------
# sigma schedule


def test_decay_branch():
    ctrl = SigmaController(1.0, 0.9, 1.1, j_star=1.0)
    assert sigma_update(ctrl, True, 0.5).sigma == 0.9


def test_increase_branch():
    ctrl = SigmaController(1.0, 0.9, 1.1, j_star=1.0)
    assert sigma_update(ctrl, False, 0.5).sigma == pytest.approx(1.1)


def test_five_decays():
    ctrl = SigmaController(1.0, 0.9, 1.1, j_star=1.0)
    for _ in range(5):
        ctrl = sigma_update(ctrl, True, 0.5)
    assert ctrl.sigma == pytest.approx(0.59049, abs=1e-15)


def test_objective_not_below_threshold_increases():
    ctrl = SigmaController(1.0, 0.9, 1.1, j_star=1.0)
    assert sigma_update(ctrl, True, 1.0).sigma == pytest.approx(1.1)


def test_best_objective_tracked():
    ctrl = SigmaController(j_star=1.0)
    ctrl = sigma_update(ctrl, True, 0.5)
    ctrl = sigma_update(ctrl, False, 0.8)
    assert ctrl.best_objective == 0.5


def test_non_finite_objective():
    with pytest.raises(ag.NonFiniteError):
        sigma_update(SigmaController(j_star=1.0), True, float("nan"))


@pytest.mark.parametrize("kwargs", [{"eta_d": 1.0, "eta_i": 1.0}, {"eta_d": 1.2}, {"eta_i": 0.9},
                                    {"sigma": 0.0}])
def test_controller_validation(kwargs):
    with pytest.raises(ValueError):
        SigmaController(**kwargs)


@settings(max_examples=200)
@given(steps=st.lists(st.tuples(st.booleans(), st.floats(-5, 5)), max_size=300),
       sigma=st.floats(1e-5, 1e2), j_star=st.floats(-5, 5))
def test_schedule_stays_in_range_and_branch_is_pure(steps, sigma, j_star):
    ctrl = SigmaController(sigma, 0.5, 2.0, j_star=j_star)
    for progressed, J in steps:
        nxt = sigma_update(ctrl, progressed, J)
        assert SIGMA_MIN <= nxt.sigma <= SIGMA_MAX
        expected = (0.5 if progressed and J < j_star else 2.0) * ctrl.sigma
        assert nxt.sigma == min(max(expected, SIGMA_MIN), SIGMA_MAX)
        ctrl = nxt
