import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exptest import linear_oracle as lo
from exptest.numstats import fit_exponential
from exptest.verify import curvature_peak, expectation_mc, random_problem


def _identity_task(n=3, s=20, scale=1.0, seed=0):
    X = np.random.default_rng(seed).standard_normal((n, s))
    return lo.LinearProblem(X, scale * X, np.zeros((n, n)), 0.1)


def test_minimizer_identity_and_scaled_tasks():
    np.testing.assert_allclose(lo.exact_minimizer(_identity_task()), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(lo.exact_minimizer(_identity_task(scale=2.0)), 2 * np.eye(3), atol=1e-12)


def test_minimizer_zeroes_the_gradient():
    rng = np.random.default_rng(11)
    prob = lo.LinearProblem(rng.standard_normal((5, 50)), rng.standard_normal((3, 50)), np.zeros((3, 5)), 0.1)
    assert np.linalg.norm(lo.gradient(prob, lo.exact_minimizer(prob))) < 1e-10


def test_rank_deficient_inputs_name_the_gap():
    X = np.zeros((4, 10))
    X[0] = np.arange(10.0)
    X[1] = 1.0
    prob = lo.LinearProblem(X, np.ones((1, 10)), np.zeros((1, 4)), 0.1)
    with pytest.raises(lo.RankDeficientError, match="2 deficient"):
        lo.exact_minimizer(prob)


def test_shape_checks():
    with pytest.raises(ValueError):
        lo.LinearProblem(np.ones((2, 5)), np.ones((1, 4)), np.zeros((1, 2)), 0.1)
    with pytest.raises(ValueError):
        lo.LinearProblem(np.ones((2, 5)), np.ones((1, 5)), np.zeros((2, 2)), 0.1)


def test_closed_form_start_and_limit():
    prob = random_problem(np.random.default_rng(1), 4, 2, 40, eta_fraction=0.9)
    assert np.array_equal(lo.closed_form_iterates(prob, 0), prob.T0)
    T_inf = lo.exact_minimizer(prob)
    assert np.linalg.norm(lo.closed_form_iterates(prob, 10_000) - T_inf) < 1e-8


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 8), m=st.integers(1, 4), frac=st.floats(0.05, 0.99))
def test_closed_form_matches_iterative_gd(seed, n, m, frac):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, n, m, int(rng.integers(n + 5, 101)), eta_fraction=frac)
    it = lo.iterate_gd(prob, 200)
    cf = lo.closed_form_trajectory(prob, range(201))
    err = np.linalg.norm(it - cf, axis=(1, 2)) / np.linalg.norm(cf, axis=(1, 2))
    assert err.max() < 1e-8
    np.testing.assert_allclose(lo.closed_form_iterates(prob, 137), cf[137], rtol=1e-12, atol=1e-12)


def test_spectral_bound_is_the_stability_edge():
    prob = random_problem(np.random.default_rng(2), 5, 2, 60, eta_fraction=1.0)
    mu = np.linalg.eigvalsh(lo.iteration_matrix(prob))
    assert np.abs(mu).max() == pytest.approx(1.0, rel=1e-10)
    assert mu.min() == pytest.approx(-1.0, rel=1e-10)


def test_expected_sgd_examples():
    T0 = np.array([[1.0, -2.0, 0.5]])
    sxx = np.eye(3)
    syx = np.array([[0.3, 0.1, -0.4]])
    assert np.array_equal(lo.expected_sgd_iterates(T0, sxx, syx, 1.0, 0), T0)
    for k in (1, 2, 7):
        np.testing.assert_allclose(lo.expected_sgd_iterates(T0, sxx, syx, 1.0, k), syx, atol=1e-15)


def test_expected_sgd_matches_monte_carlo():
    assert expectation_mc(replicates=4000, seed=3).passed


def test_loss_curve_constant_at_optimum():
    prob = random_problem(np.random.default_rng(4), 3, 2, 30)
    prob = lo.LinearProblem(prob.X, prob.Y, lo.exact_minimizer(prob), prob.eta)
    curve = lo.loss_curve(prob, range(20))
    np.testing.assert_allclose(curve, curve[0], rtol=1e-10)
    assert curve[0] == pytest.approx(lo.loss_mixture(prob).offset)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 8), m=st.integers(1, 4))
def test_loss_curve_non_increasing_inside_bound(seed, n, m):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng, n, m, int(rng.integers(n + 5, 101)), eta_fraction=0.99)
    curve = lo.loss_curve(prob, range(300))
    assert curve.min() >= 0
    assert np.all(np.diff(curve) <= 1e-12 * curve[0])


def test_loss_mixture_reproduces_the_curve():
    prob = random_problem(np.random.default_rng(5), 4, 3, 50, eta_fraction=0.7)
    ks = np.arange(1, 60)
    np.testing.assert_allclose(lo.loss_mixture(prob)(ks), lo.loss_curve(prob, ks), rtol=1e-9)


def test_single_exponential_fits_first_window():
    prob = random_problem(np.random.default_rng(6), 6, 2, 80, eta_fraction=0.5)
    curve = lo.loss_curve(prob, range(40))
    assert fit_exponential(curve).r_squared(curve) >= 0.99


def test_taylor_collapse_examples():
    assert lo.taylor_collapse(lo.ExpMixture([(1.5, 0.3), (2.5, 0.3)])) == pytest.approx((4.0, 0.3))
    assert lo.taylor_collapse(lo.ExpMixture([(1, 1), (1, 3)])) == pytest.approx((2.0, 2.0))
    assert lo.taylor_collapse(lo.ExpMixture([(2, 0.5)])) == pytest.approx((2.0, 0.5))
    with pytest.raises(ZeroDivisionError):
        lo.taylor_collapse(lo.ExpMixture([(1, 1), (-1, 2)]))


@settings(max_examples=50, deadline=None)
@given(amps=st.lists(st.floats(0.01, 10.0), min_size=1, max_size=6), rate=st.floats(0.0, 5.0))
def test_taylor_collapse_exact_for_equal_rates(amps, rate):
    mix = lo.ExpMixture([(a, rate) for a in amps])
    C, c = lo.taylor_collapse(mix)
    t = np.linspace(0, 10, 25)
    np.testing.assert_allclose(C * np.exp(-c * t), mix(t), rtol=1e-10)


def test_dominant_term_examples():
    assert lo.dominant_term(lo.ExpMixture([(1, 0.01), (5, 10)]), 2) == pytest.approx((1.0, 0.01))
    equal = lo.ExpMixture([(1, 0.4), (3, 0.4)])
    assert lo.dominant_term(equal) == pytest.approx(lo.taylor_collapse(equal))
    assert lo.dominant_term(lo.ExpMixture([(1, 0.1), (1, 0.12), (9, 50)]), 2) == pytest.approx((2.0, 0.11))
    with pytest.raises(ValueError):
        lo.dominant_term(lo.ExpMixture([]))


def test_mixture_rejects_negative_rates():
    with pytest.raises(ValueError):
        lo.ExpMixture([(1.0, -0.1)])


def test_curvature_peak_examples():
    assert lo.curvature_peak_time(math.e / math.sqrt(2), 1.0, 1.0) == pytest.approx(1.0)
    assert lo.curvature_peak_rate(math.e, 1.0) == pytest.approx(1 / math.sqrt(2))
    assert lo.max_curvature_peak_time(math.e) == pytest.approx(math.sqrt(2))
    assert lo.curvature_peak_time(math.e, 1.0, lo.curvature_peak_rate(math.e, 1.0)) == pytest.approx(math.sqrt(2))
    assert curvature_peak().passed
