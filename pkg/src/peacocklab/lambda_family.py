"""Planar driftless SDEs with a unit-speed coefficient mixing radial and tangential motion.

For ``lam`` in ``[0, 1]`` the coefficient is the single column

    sigma(x) = (lam * x + sqrt(1 - lam^2) * perp(x)) / |x|

against a scalar Brownian driver.  ``lam = 1`` moves along the line through
the start point, ``lam = 0`` moves tangentially so the radius grows
deterministically, and ``lam = sqrt(2)/2`` run at double speed has the
marginals of planar Brownian motion from a rotationally invariant start
(the "fake Brownian motion").
"""
import math
from pathlib import Path

import numpy as np

from .errors import InvalidStart, OriginHit
from .io import write_ensemble, write_svg_paths
from .measures import CircleLaw, DiracLaw
from .rng import TAG_BOOTSTRAP, CounterRNG
from .sde import DiffusionCoefficient, PathEnsemble, initial_states, run_euler, simulate

ORIGIN_GUARD = 1e-8
FAKE_BM_LAMBDA = math.sqrt(2.0) / 2.0


def _lambda_func(lam):
    c = math.sqrt(max(0.0, 1.0 - lam * lam))

    def func(t, x):
        r = np.sqrt(x[:, 0] * x[:, 0] + x[:, 1] * x[:, 1])
        col = np.empty((x.shape[0], 2, 1))
        col[:, 0, 0] = (lam * x[:, 0] - c * x[:, 1]) / r
        col[:, 1, 0] = (lam * x[:, 1] + c * x[:, 0]) / r
        return col

    return func


def lambda_coefficient(lam):
    """Unit-speed ``2 x 1`` coefficient for mixing parameter ``lam``."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    return DiffusionCoefficient(2, 1, _lambda_func(lam), name=f"lambda={lam:.17g}",
                                description="singular at the origin; |sigma| = 1 elsewhere")


def fake_brownian_coefficient():
    """``(x + perp(x)) / |x|``: the double-speed ``lam = sqrt(2)/2`` coefficient."""

    def func(t, x):
        r = np.sqrt(x[:, 0] * x[:, 0] + x[:, 1] * x[:, 1])
        col = np.empty((x.shape[0], 2, 1))
        col[:, 0, 0] = (x[:, 0] - x[:, 1]) / r
        col[:, 1, 0] = (x[:, 1] + x[:, 0]) / r
        return col

    return DiffusionCoefficient(2, 1, func, name="fake_brownian",
                                description="rank one; sigma sigma^T has trace 2")


def origin_guard(x):
    """Flags states within ``1e-8`` of the origin."""
    return x[:, 0] * x[:, 0] + x[:, 1] * x[:, 1] < ORIGIN_GUARD * ORIGIN_GUARD


def _finish(e, strict):
    hits = int(np.count_nonzero(e.aborted))
    e.meta["origin_hits"] = hits
    if strict and hits:
        i = int(np.flatnonzero(e.aborted)[0])
        raise OriginHit(int(e.path_ids[i]), int(e.abort_step[i]))
    return e


def _circle_bootstrap(x, ids, rng, h):
    # Exact law after time h from the origin: uniform on the circle of radius sqrt(h).
    angle = 2.0 * np.pi * rng.uniform(ids, 0, 1, tag=TAG_BOOTSTRAP)[:, 0, 0]
    r = math.sqrt(h)
    return np.stack([r * np.cos(angle), r * np.sin(angle)], axis=1)


def _is_origin(law):
    return isinstance(law, DiracLaw) and not any(law.point)


def tangential_from_origin(cfg, strict=False):
    """Tangential motion (``lam = 0``) started at the origin.

    The first step is sampled exactly on the circle of radius ``sqrt(dt)``
    with a uniform angle; Euler steps follow.  Because ``x . perp(x) = 0``,
    every Euler step adds exactly ``dW^2`` to the squared radius.
    """
    if cfg.initial is not None and not _is_origin(cfg.initial):
        raise InvalidStart("tangential_from_origin needs the Dirac law at the origin")
    e = simulate(lambda_coefficient(0.0), cfg, guard=origin_guard, first_step=_circle_bootstrap)
    e.meta["bootstrap"] = "circle"
    return _finish(e, strict)


def lambda_motion(lam, cfg, r_min=0.1, strict=False):
    """Euler ensemble for the ``lam`` coefficient.

    Initial states must satisfy ``|x0| >= r_min``; the exception is ``lam = 0``
    from the origin, which is routed through :func:`tangential_from_origin`.
    Paths entering ``|x| < 1e-8`` are aborted and counted in
    ``meta["origin_hits"]`` (``strict=True`` raises :class:`OriginHit`).
    """
    if lam == 0.0 and (cfg.initial is None or _is_origin(cfg.initial)):
        return tangential_from_origin(cfg, strict)
    x0 = initial_states(cfg, 2, default=CircleLaw(1.0))
    _check_start(x0, r_min)
    e = simulate(lambda_coefficient(lam), cfg, guard=origin_guard, x0=x0)
    return _finish(e, strict)


def _check_start(x0, r_min):
    rmin = float(np.min(np.linalg.norm(x0, axis=1)))
    if rmin < r_min:
        raise InvalidStart(f"initial state at radius {rmin:.3g} < r_min={r_min}")


def fake_brownian(cfg, r_min=0.1, strict=False):
    """Fake Brownian motion on the mimicking clock.

    Runs the ``lam = sqrt(2)/2`` coefficient at double speed, so the output
    grid is in mimicking time and its increments have variance ``2 dt``.
    The default initial law is the uniform law on the unit circle.
    """
    x0 = initial_states(cfg, 2, default=CircleLaw(1.0))
    _check_start(x0, r_min)
    e = simulate(lambda_coefficient(FAKE_BM_LAMBDA), cfg, clock=2.0, guard=origin_guard, x0=x0)
    e.coefficient = "fake_brownian"
    return _finish(e, strict)


def run_until_exit(lam, x0, dt, seed, radius=1.0, max_time=10.0, path_id=0, block=4096):
    """Single Euler path from ``x0`` until it first leaves the ball of ``radius``.

    Returns ``(times, states)`` including the first state outside the ball.
    ``max_time`` caps runs that fail to exit (the path is then returned as is).
    """
    sigma = lambda_coefficient(lam)
    rng = CounterRNG(seed)
    x = np.asarray(x0, dtype=float).reshape(1, 2)
    pieces = [x]
    steps_done = 0
    max_steps = int(math.ceil(max_time / dt))
    while steps_done < max_steps:
        n = min(block, max_steps - steps_done)
        _, states, aborted, _ = run_euler(sigma, x, [path_id], rng, steps_done * dt, dt, n,
                                          step_offset=steps_done, guard=origin_guard)
        states = states[0, 1:]
        r = np.linalg.norm(states, axis=1)
        out = np.flatnonzero(~(r < radius))  # NaN counts as terminal too
        if out.size:
            pieces.append(states[: out[0] + 1])
            steps_done += out[0] + 1
            break
        pieces.append(states)
        steps_done += n
        x = states[-1:].copy()
        if aborted[0]:
            break
    xs = np.concatenate(pieces)
    return dt * np.arange(xs.shape[0]), xs


FIGURE1_LAMBDAS = (0.0, FAKE_BM_LAMBDA, 1.0)


def figure1_scenarios(out_dir, seed=7, dt=1e-4, start_radius=0.2, max_time=10.0):
    """Single trajectories for ``lam`` in ``{0, sqrt(2)/2, 1}`` up to exit of the unit ball.

    Each run starts at ``(start_radius, 0)`` and writes ``figure1_<label>.csv``
    (ensemble CSV schema with one path) and ``figure1_<label>.svg``.

    Returns
    -------
    dict
        ``label -> (times, states)``.
    """
    out_dir = Path(out_dir)
    results = {}
    for lam in FIGURE1_LAMBDAS:
        label = f"lambda_{lam:.4f}"
        t, xs = run_until_exit(lam, (start_radius, 0.0), dt, seed, max_time=max_time)
        e = PathEnsemble(times=t, paths=xs[None], master_seed=seed, path_ids=np.array([0]), dt=dt,
                         coefficient=f"lambda={lam:.17g}")
        e.meta.update({"lambda": lam, "exit_time": float(t[-1]), "start_radius": start_radius})
        write_ensemble(out_dir / f"figure1_{label}.csv", e)
        write_svg_paths(out_dir / f"figure1_{label}.svg", [xs], title=f"lambda = {lam:.4f}")
        results[label] = (t, xs)
    return results
