import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (bures_w2, gaussian_quantile_cloud, random_psd, w2_discrete_assignment,
                     w2_discrete_bruteforce)
from peacocklab.errors import DimensionMismatch, OutOfRange
from peacocklab.measures import (CircleLaw, ConvolvedLaw, DiracLaw, EmpiricalMeasure, GaussianLaw, PeacockCurve,
                                 as_empirical, brownian_curve, circle_curve, convex_order_test, convolve_gaussian,
                                 holder_modulus, regularize_peacock, w2_empirical_1d, w2_gaussian, w2_sliced)
from peacocklab.rng import CounterRNG


# -- containers -------------------------------------------------------------------

def test_empirical_measure_validation():
    m = EmpiricalMeasure([1.0, 2.0, 3.0])
    assert m.dim == 1 and m.n == 3 and m.is_uniform
    with pytest.raises(ValueError):
        EmpiricalMeasure([[1.0], [2.0]], [0.3, 0.3])
    with pytest.raises(ValueError):
        EmpiricalMeasure([[1.0], [2.0]], [-0.5, 1.5])
    with pytest.raises(DimensionMismatch):
        EmpiricalMeasure([[1.0], [2.0]], [1.0])
    with pytest.raises(ValueError):
        EmpiricalMeasure([[np.nan]])


def test_empirical_moments():
    m = EmpiricalMeasure([[0.0, 0.0], [2.0, 0.0]], [0.25, 0.75])
    np.testing.assert_allclose(m.mean(), [1.5, 0.0])
    assert m.second_moment() == 3.0
    assert m.effective_size() == pytest.approx(1.0 / (0.25**2 + 0.75**2))


def test_gaussian_law_draw_moments():
    cov = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = GaussianLaw([1.0, -1.0], cov)
    s = g.sample(100_000, seed=3)
    np.testing.assert_allclose(s.mean(), [1.0, -1.0], atol=0.02)
    np.testing.assert_allclose(s.covariance(), cov, atol=0.03)
    assert g.second_moment() == 3.0 + 2.0


def test_dirac_and_circle_laws():
    rng = CounterRNG(0)
    d = DiracLaw.origin(3)
    assert np.all(d.draw(rng, np.arange(4)) == 0)
    c = CircleLaw(2.0)
    x = c.draw(rng, np.arange(1000))
    np.testing.assert_allclose(np.hypot(x[:, 0], x[:, 1]), 2.0, rtol=1e-15)
    assert c.second_moment() == 4.0
    with pytest.raises(ValueError):
        CircleLaw(-1.0)


def test_convolved_law_moment():
    law = ConvolvedLaw(CircleLaw(1.0), GaussianLaw.isotropic(2, 0.5))
    assert law.second_moment() == pytest.approx(2.0)
    x = as_empirical(law, 100_000, seed=1)
    assert x.second_moment() == pytest.approx(2.0, abs=0.03)


def test_peacock_curve_grid():
    p = brownian_curve([0.0, 0.5, 1.0])
    assert p.law_at(0.5).covariance[0, 0] == 0.5
    with pytest.raises(OutOfRange):
        p.law_at(0.3)
    with pytest.raises(ValueError):
        PeacockCurve([0.5, 0.5], (DiracLaw.origin(2),) * 2)


# -- regularization -----------------------------------------------------------------

def test_convolve_dirac_with_standard_gaussian():
    m = EmpiricalMeasure(np.zeros((100_000, 2)))
    out = convolve_gaussian(m, GaussianLaw.isotropic(2, 1.0), seed=4)
    np.testing.assert_allclose(out.mean(), 0.0, atol=0.02)
    np.testing.assert_allclose(out.covariance(), np.eye(2), atol=0.02)


def test_convolve_with_zero_covariance_is_identity():
    m = EmpiricalMeasure(CounterRNG(0).normal(np.arange(50), 0, 2)[:, 0], np.full(50, 0.02))
    out = convolve_gaussian(m, GaussianLaw.isotropic(2, 0.0), seed=1)
    np.testing.assert_array_equal(out.samples, m.samples)
    np.testing.assert_array_equal(out.weights, m.weights)


def test_convolve_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        convolve_gaussian(EmpiricalMeasure(np.zeros((3, 2))), GaussianLaw.isotropic(3, 1.0), seed=0)


def test_regularize_brownian_closed_form():
    times = np.array([0.0, 0.25, 0.5, 1.0])
    out = regularize_peacock(brownian_curve(times), 0.1, 0.1)
    for t, law in zip(times, out.laws):
        np.testing.assert_allclose(np.diag(law.covariance), t + 0.1 * (t + 0.1), rtol=1e-15)


def test_regularize_brownian_samples_within_mc_error():
    times = np.array([0.25, 1.0])
    emp = PeacockCurve(times, tuple(GaussianLaw.isotropic(2, t).sample(100_000, seed=k)
                                    for k, t in enumerate(times)))
    out = regularize_peacock(emp, 0.1, 0.1, seed=3)
    for t, law in zip(times, out.laws):
        target = t + 0.1 * (t + 0.1)
        # sample variance SE is about target * sqrt(2 / N)
        np.testing.assert_allclose(np.diag(law.covariance()), target, atol=3 * target * math.sqrt(2e-5))


def test_regularize_boundary_delta_zero_warns():
    times = np.array([0.0, 0.5, 1.0])
    with pytest.warns(UserWarning):
        out = regularize_peacock(brownian_curve(times), 1.0, 0.0)
    for t, law in zip(times, out.laws):
        np.testing.assert_array_equal(law.covariance, 2 * t * np.eye(2))


def test_regularize_added_covariance_at_zero():
    out = regularize_peacock(PeacockCurve([0.0], (GaussianLaw.isotropic(2, 0.0),)), 0.2, 0.5)
    np.testing.assert_array_equal(out.laws[0].covariance, 0.1 * np.eye(2))


def test_regularize_rejects_bad_parameters():
    p = brownian_curve([0.0, 1.0])
    with pytest.raises(ValueError):
        regularize_peacock(p, 0.0, 0.1)
    with pytest.raises(ValueError):
        regularize_peacock(p, 0.1, -0.1)


def test_regularize_circle_second_moment():
    eps, delta = 0.1, 0.1
    times = np.array([0.0, 0.5, 1.0])
    src = circle_curve(times)
    emp = PeacockCurve(times, tuple(as_empirical(law, 100_000, 7, step=k) for k, law in enumerate(src.laws)))
    out = regularize_peacock(emp, eps, delta, seed=8)
    for t, law in zip(times, out.laws):
        sq = law.samples**2
        se = sq.std(axis=0, ddof=1) / math.sqrt(law.n)
        target = t / 2 + eps * (t + delta)
        assert np.all(np.abs(sq.mean(axis=0) - target) <= 3 * se)


def test_regularize_wraps_analytic_laws():
    out = regularize_peacock(circle_curve([0.5]), 0.1, 0.1)
    assert isinstance(out.laws[0], ConvolvedLaw)
    assert out.laws[0].second_moment() == pytest.approx(0.5 + 2 * 0.1 * 0.6)


# -- Wasserstein-2 -------------------------------------------------------------------

def test_w2_gaussian_examples():
    g = GaussianLaw.isotropic(3, 2.0)
    assert w2_gaussian(g, g) == 0.0
    for d in (1, 2, 5):
        a, b = 0.7, 3.1
        val = w2_gaussian(GaussianLaw.isotropic(d, a), GaussianLaw.isotropic(d, b))
        assert val == pytest.approx(math.sqrt(d) * abs(math.sqrt(a) - math.sqrt(b)), abs=1e-12)
    assert w2_gaussian(GaussianLaw([0.0], [[1.0]]), GaussianLaw([0.0], [[4.0]])) == pytest.approx(1.0, abs=1e-12)


def test_w2_gaussian_diagonal_closed_form():
    a = np.array([0.2, 1.0, 5.0])
    b = np.array([3.0, 1.0, 0.5])
    val = w2_gaussian(GaussianLaw(np.zeros(3), np.diag(a)), GaussianLaw(np.zeros(3), np.diag(b)))
    assert abs(val - math.sqrt(np.sum((np.sqrt(a) - np.sqrt(b)) ** 2))) <= 1e-10


def test_w2_gaussian_matches_bures_oracle():
    rng = np.random.default_rng(17)
    for _ in range(20):
        d = int(rng.integers(1, 5))
        m1, m2 = rng.standard_normal((2, d))
        c1, c2 = random_psd(rng, d), random_psd(rng, d)
        assert w2_gaussian(GaussianLaw(m1, c1), GaussianLaw(m2, c2)) == pytest.approx(
            bures_w2(m1, c1, m2, c2), abs=1e-9)


def test_w2_gaussian_against_discrete_ot():
    # 64-point quantile clouds of N(0, 1) and N(0, 4); discrete OT is within 3 %
    x, y = gaussian_quantile_cloud(1.0, 64), gaussian_quantile_cloud(2.0, 64)
    ot = w2_discrete_assignment(x, y)
    exact = w2_gaussian(GaussianLaw([0.0], [[1.0]]), GaussianLaw([0.0], [[4.0]]))
    assert abs(ot - exact) <= 0.03 * exact


def test_w2_empirical_1d_examples():
    a = EmpiricalMeasure([0.5, -1.0, 2.0])
    assert w2_empirical_1d(a, a) == 0.0
    assert w2_empirical_1d(EmpiricalMeasure([0.0]), EmpiricalMeasure([3.0])) == 3.0
    with pytest.raises(DimensionMismatch):
        w2_empirical_1d(EmpiricalMeasure(np.zeros((2, 2))), a)


def test_w2_empirical_1d_large_gaussian_samples():
    a = GaussianLaw([0.0], [[1.0]]).sample(100_000, seed=1)
    b = GaussianLaw([0.0], [[4.0]]).sample(100_000, seed=2)
    assert abs(w2_empirical_1d(a, b) - 1.0) <= 0.02


def test_w2_empirical_1d_weighted_equals_duplicated():
    a = EmpiricalMeasure([0.0, 1.0], [0.25, 0.75])
    a_dup = EmpiricalMeasure([0.0, 1.0, 1.0, 1.0])
    b = EmpiricalMeasure([0.5, 2.0, -1.0, 3.0])
    assert w2_empirical_1d(a, b) == pytest.approx(w2_empirical_1d(a_dup, b), abs=1e-15)
    assert w2_empirical_1d(a, b) == pytest.approx(w2_discrete_bruteforce([0, 1, 1, 1], [0.5, 2, -1, 3]))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_w2_empirical_1d_matches_bruteforce(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(n) * 3, rng.standard_normal(n)
    assert w2_empirical_1d(EmpiricalMeasure(x), EmpiricalMeasure(y)) == pytest.approx(
        w2_discrete_bruteforce(x, y), rel=1e-12, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_w2_gaussian_metric_properties(d, seed):
    rng = np.random.default_rng(seed)
    a, b, c = (GaussianLaw(rng.standard_normal(d), random_psd(rng, d)) for _ in range(3))
    assert w2_gaussian(a, b) == pytest.approx(w2_gaussian(b, a), abs=1e-9)
    assert w2_gaussian(a, b) <= w2_gaussian(a, c) + w2_gaussian(c, b) + 1e-9
    assert w2_gaussian(a, a) == 0.0


def test_w2_sliced_examples():
    a = GaussianLaw.isotropic(2, 1.0).sample(1000, seed=0)
    assert w2_sliced(a, a) == 0.0
    v = np.array([0.3, -0.4, 1.2])
    base = GaussianLaw.isotropic(3, 1.0).sample(2000, seed=1)
    shifted = EmpiricalMeasure(base.samples + v)
    target = np.linalg.norm(v) / math.sqrt(3)
    assert abs(w2_sliced(base, shifted, 256) - target) <= 0.05 * target


def test_w2_sliced_isotropic_gaussian_samples():
    a = GaussianLaw.isotropic(2, 1.0).sample(100_000, seed=5)
    b = GaussianLaw.isotropic(2, 4.0).sample(100_000, seed=6)
    assert abs(w2_sliced(a, b) - 1.0) <= 0.05
    # empirical vs analytic Gaussian route
    assert abs(w2_sliced(a, GaussianLaw.isotropic(2, 4.0)) - 1.0) <= 0.05
    assert w2_sliced(GaussianLaw.isotropic(2, 1.0), GaussianLaw.isotropic(2, 4.0)) == pytest.approx(1.0)


# -- convex order -------------------------------------------------------------------

def test_convex_order_gaussian_exact():
    a, b = GaussianLaw.isotropic(2, 0.3), GaussianLaw.isotropic(2, 0.7)
    assert convex_order_test(a, b).consistent
    assert convex_order_test(b, a).violated
    shifted = GaussianLaw([1.0, 0.0], 0.7 * np.eye(2))
    assert convex_order_test(a, shifted).violated


def test_convex_order_circle_laws():
    a = as_empirical(CircleLaw(math.sqrt(0.25)), 100_000, 0, step=0)
    b = as_empirical(CircleLaw(math.sqrt(0.75)), 100_000, 0, step=1)
    assert convex_order_test(a, b).consistent
    assert convex_order_test(b, a).violated


def test_convex_order_detects_mean_shift_in_samples():
    a = GaussianLaw.isotropic(2, 1.0).sample(20_000, seed=1)
    b = EmpiricalMeasure(GaussianLaw.isotropic(2, 1.5).sample(20_000, seed=2).samples + [0.5, 0.0])
    assert convex_order_test(a, b).violated


# -- Holder modulus -------------------------------------------------------------------

def test_holder_modulus_gaussian_curve():
    times = [0.0, 0.25, 0.5, 0.75, 1.0]
    tab = holder_modulus(brownian_curve(times))
    for r in tab.rows:
        assert r.w2 == pytest.approx(math.sqrt(2) * (math.sqrt(r.t1) - math.sqrt(r.t0)), abs=1e-12)
        assert r.ratio <= math.sqrt(2) + 1e-12
    assert tab.max_ratio == pytest.approx(math.sqrt(2), abs=1e-12)
    assert tab.rows[0].ratio == tab.max_ratio


def test_holder_modulus_constant_curve():
    g = GaussianLaw.isotropic(2, 1.0)
    tab = holder_modulus(PeacockCurve([0.0, 0.5, 1.0], (g, g, g)))
    assert all(r.w2 == 0.0 for r in tab.rows)
    m = g.sample(500, seed=0)
    tab = holder_modulus(PeacockCurve([0.0, 1.0], (m, m)))
    assert tab.rows[0].w2 == 0.0


def test_holder_modulus_needs_two_times():
    with pytest.raises(ValueError):
        holder_modulus(brownian_curve([0.5]))


def test_convex_order_rejects_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        convex_order_test(GaussianLaw.isotropic(1, 1.0), GaussianLaw.isotropic(2, 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        convex_order_test(GaussianLaw.isotropic(1, 1.0), GaussianLaw.isotropic(1, 1.0))
