import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from peacocklab.errors import InvalidStart
from peacocklab.io import read_table
from peacocklab.lambda_family import (FAKE_BM_LAMBDA, fake_brownian, fake_brownian_coefficient, figure1_scenarios,
                                      lambda_coefficient, lambda_motion, run_until_exit, tangential_from_origin)
from peacocklab.measures import CircleLaw, DiracLaw
from peacocklab.rng import CounterRNG
from peacocklab.sde import SimulationConfig


def _increments(seed, n_paths, n_steps, dt):
    z = CounterRNG(seed).normal_stream(np.arange(n_paths), 1).take(n_steps)[..., 0]
    return z * math.sqrt(dt)


def test_coefficient_has_unit_norm_and_mixing_angle():
    x = np.array([[3.0, 4.0], [0.1, -2.0]])
    for lam in (0.0, 0.3, FAKE_BM_LAMBDA, 1.0):
        s = lambda_coefficient(lam)(0.0, x)[..., 0]
        np.testing.assert_allclose(np.linalg.norm(s, axis=1), 1.0, rtol=1e-15)
        radial = np.sum(s * x, axis=1) / np.linalg.norm(x, axis=1)
        np.testing.assert_allclose(radial, lam, atol=1e-15)
    with pytest.raises(ValueError):
        lambda_coefficient(1.5)


def test_fake_brownian_coefficient_is_scaled_lambda():
    x = np.array([[0.3, -1.2]])
    np.testing.assert_allclose(fake_brownian_coefficient()(0, x),
                               math.sqrt(2) * lambda_coefficient(FAKE_BM_LAMBDA)(0, x), rtol=1e-15)


def test_tangential_from_origin_radius_identity():
    n, dt = 2000, 1e-3
    cfg = SimulationConfig(n, dt, initial=DiracLaw.origin(2), master_seed=3)
    e = tangential_from_origin(cfg)
    assert e.meta["origin_hits"] == 0
    r2 = np.sum(e.paths**2, axis=2)
    dw = _increments(3, n, cfg.n_steps, dt)
    expected = dt + np.concatenate([np.zeros((n, 1)), np.cumsum(dw[:, 1:] ** 2, axis=1)], axis=1)
    np.testing.assert_allclose(r2[:, 1:], expected, rtol=1e-12)
    assert np.all(np.diff(r2, axis=1) >= 0)


def test_tangential_from_origin_marginal():
    n, dt = 100_000, 1e-3
    e = tangential_from_origin(SimulationConfig(n, dt, master_seed=1, record_stride=1000))
    x = e.paths[:, -1]
    r2 = np.sum(x * x, axis=1)
    assert abs(r2.mean() - 1.0) <= 3 * r2.std(ddof=1) / math.sqrt(n)
    assert np.sqrt(r2).std(ddof=1) <= math.sqrt(2 * dt) * 1.5
    angle = np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * np.pi)
    counts = np.bincount((angle / (2 * np.pi) * 36).astype(int).clip(0, 35), minlength=36)
    assert stats.chisquare(counts).pvalue >= 1e-3


def test_tangential_rejects_other_starts():
    with pytest.raises(InvalidStart):
        tangential_from_origin(SimulationConfig(5, 0.1, initial=CircleLaw(1.0)))


def test_lambda_one_stays_on_axis():
    e = lambda_motion(1.0, SimulationConfig(200, 1e-3, initial=DiracLaw((1.0, 0.0)), master_seed=2))
    live = ~e.aborted
    assert np.all(e.paths[live, :, 1] == 0.0)


def test_lambda_zero_from_unit_circle():
    n, dt = 500, 1e-3
    cfg = SimulationConfig(n, dt, initial=DiracLaw((0.6, 0.8)), master_seed=4)
    e = lambda_motion(0.0, cfg)
    dw = _increments(4, n, cfg.n_steps, dt)
    r2 = np.sum(e.paths**2, axis=2)
    expected = np.sum(np.array([0.6, 0.8]) ** 2) + np.concatenate([np.zeros((n, 1)), np.cumsum(dw**2, axis=1)],
                                                                    axis=1)
    np.testing.assert_allclose(r2, expected, rtol=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.25, FAKE_BM_LAMBDA, 0.9])
def test_second_moment_grows_at_unit_rate(lam):
    n = 20_000
    e = lambda_motion(lam, SimulationConfig(n, 1e-3, initial=CircleLaw(1.0), master_seed=5, record_stride=1000))
    live = ~e.aborted
    growth = np.sum(e.paths[live, -1] ** 2, axis=1) - np.sum(e.paths[live, 0] ** 2, axis=1)
    assert abs(growth.mean() - 1.0) <= 3 * growth.std(ddof=1) / math.sqrt(growth.size)


def test_start_radius_guard():
    with pytest.raises(InvalidStart):
        lambda_motion(0.5, SimulationConfig(5, 0.1, initial=CircleLaw(0.05)))
    with pytest.raises(InvalidStart):
        fake_brownian(SimulationConfig(5, 0.1, initial=DiracLaw.origin(2)))


def test_fake_brownian_runs_on_doubled_clock():
    cfg = SimulationConfig(3000, 1e-3, master_seed=8, record_stride=100)
    e = fake_brownian(cfg)
    assert e.coefficient == "fake_brownian"
    live = ~e.aborted
    growth = np.sum(e.paths[live, -1] ** 2, axis=1) - np.sum(e.paths[live, 0] ** 2, axis=1)
    # Brownian motion in the plane: E|B_1|^2 - E|B_0|^2 = 2
    assert abs(growth.mean() - 2.0) <= 3 * growth.std(ddof=1) / math.sqrt(growth.size)


def test_run_until_exit_terminates():
    for lam in (0.0, FAKE_BM_LAMBDA, 1.0):
        t, xs = run_until_exit(lam, (0.2, 0.0), 1e-3, seed=7)
        assert np.linalg.norm(xs[-1]) >= 1.0
        assert np.all(np.linalg.norm(xs[:-1], axis=1) < 1.0)
        assert t[-1] < 10.0 and t.size == xs.shape[0]


def test_figure1_outputs(tmp_path):
    res = figure1_scenarios(tmp_path, seed=7, dt=1e-3)
    assert len(res) == 3
    for label, (t, xs) in res.items():
        assert (tmp_path / f"figure1_{label}.csv").is_file()
        svg = (tmp_path / f"figure1_{label}.svg").read_text()
        assert svg.startswith("<svg") and "<polyline" in svg
        assert len(read_table(tmp_path / f"figure1_{label}.csv")) == xs.shape[0]
    _, line = res["lambda_1.0000"]
    assert np.max(np.abs(line[:, 1])) == 0.0
    _, tang = res["lambda_0.0000"]
    r2 = tang[:, 0] ** 2 + tang[:, 1] ** 2
    assert np.all(np.diff(r2) >= 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-5, 5), st.floats(-5, 5))
def test_coefficient_unit_norm_property(lam, a, b):
    if math.hypot(a, b) < 1e-3:
        return
    s = lambda_coefficient(lam)(0.0, np.array([[a, b]]))[0, :, 0]
    assert abs(math.hypot(*s) - 1.0) <= 1e-12
