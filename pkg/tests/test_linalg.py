import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lapack_eigh, lapack_psd_sqrt, random_psd
from peacocklab.errors import DimensionMismatch, NonSymmetric, NotPSD
from peacocklab.linalg import clip_psd, eigen_bounds, hs_norm, jacobi_eigh, perp, psd_sqrt


def test_hs_norm_examples():
    assert hs_norm(np.eye(2)) == math.sqrt(2)
    assert hs_norm(np.zeros((3, 3))) == 0.0
    assert hs_norm([[1, 2], [3, 4]]) == pytest.approx(math.sqrt(30), rel=1e-15)


def test_hs_norm_batched_and_shape_errors():
    stack = np.stack([np.eye(2), 2 * np.eye(2)])
    np.testing.assert_allclose(hs_norm(stack), [math.sqrt(2), math.sqrt(8)])
    with pytest.raises(DimensionMismatch):
        hs_norm(np.ones((2, 3)))
    with pytest.raises(DimensionMismatch):
        hs_norm(np.ones(3))


def test_psd_sqrt_examples():
    np.testing.assert_array_equal(psd_sqrt(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-15)


def test_psd_sqrt_reconstructs_random_psd():
    rng = np.random.default_rng(11)
    for d in (2, 3, 5, 8):
        a = random_psd(rng, d)
        s = psd_sqrt(a)
        assert hs_norm(s @ s - a) <= 1e-9 * hs_norm(a)
        np.testing.assert_allclose(s, lapack_psd_sqrt(a), atol=1e-10)


def test_psd_sqrt_rejects_bad_input():
    with pytest.raises(NonSymmetric):
        psd_sqrt([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(NotPSD):
        psd_sqrt(np.diag([1.0, -0.1]))
    # tiny negative eigenvalues from round-off are clipped
    s = psd_sqrt(np.diag([1.0, -1e-13]))
    assert s[1, 1] == 0.0


def test_jacobi_matches_lapack():
    rng = np.random.default_rng(3)
    for d in (1, 2, 4, 7):
        a = random_psd(rng, d, lo=-5, hi=5)
        w, v = jacobi_eigh(a)
        w_ref, _ = lapack_eigh(a)
        np.testing.assert_allclose(w, w_ref, atol=1e-12)
        np.testing.assert_allclose(v @ np.diag(w) @ v.T, a, atol=1e-12)
        np.testing.assert_allclose(v.T @ v, np.eye(d), atol=1e-12)


def test_eigen_bounds_examples():
    lo, hi = eigen_bounds(np.eye(2))
    assert (lo, hi) == (1.0, 1.0)
    lo, hi = eigen_bounds(np.diag([2 * 0.05, 7.0]))
    assert lo == pytest.approx(0.1, abs=1e-15) and hi == 7.0


def test_eigen_bounds_rayleigh_oracle():
    rng = np.random.default_rng(5)
    a = random_psd(rng, 4)
    lo, hi = eigen_bounds(a)
    u = rng.standard_normal((100, 4))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    q = np.einsum("ni,ij,nj->n", u, a, u)
    assert np.all(q >= lo - 1e-12) and np.all(q <= hi + 1e-12)


def test_clip_psd():
    a = np.diag([2.0, -1.0])
    np.testing.assert_allclose(clip_psd(a), np.diag([2.0, 0.0]), atol=1e-15)


def test_perp_examples():
    np.testing.assert_array_equal(perp([1.0, 0.0]), [0.0, 1.0])
    np.testing.assert_array_equal(perp([0.0, 0.0]), [0.0, 0.0])
    np.testing.assert_array_equal(perp([3.0, -4.0]), [4.0, 3.0])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(finite, min_size=2, max_size=2))
def test_perp_is_orthogonal_isometry(x):
    x = np.asarray(x)
    p = perp(x)
    assert x[0] * p[0] + x[1] * p[1] == 0.0
    assert np.array_equal(np.abs(p), np.abs(x[::-1]))
    np.testing.assert_array_equal(perp(perp(x)), -x)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_psd_sqrt_property(d, seed):
    a = random_psd(np.random.default_rng(seed), d, lo=0.0, hi=10.0)
    s = psd_sqrt(a)
    np.testing.assert_allclose(s, s.T, atol=0)
    assert np.min(np.linalg.eigvalsh(s)) >= -1e-10
    assert hs_norm(s @ s - a) <= 1e-9 * max(hs_norm(a), 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_hs_norm_triangle_and_scaling(d, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, d, d))
    assert hs_norm(a + b) <= hs_norm(a) + hs_norm(b) + 1e-12
    assert hs_norm(3.0 * a) == pytest.approx(3.0 * hs_norm(a), rel=1e-14)
