"""Peacocks in R^4 built from two planar circles, and processes that mimic them.

The state space is ``R^4 = X1 (+) X2`` with ``X1`` the ``(x1, x2)`` plane and
``X2`` the ``(x3, x4)`` plane.  ``S^i_a`` is the centred circle of radius
``sqrt(a)`` in plane ``i``; the two families meet only at the origin.

* :func:`branched_peacock` flips a fair coin and runs tangential motion in the
  chosen plane, optionally with per-plane clocks that alternate on dyadic
  windows (:class:`TimeChange`).
* :func:`jump_mimicker` is a pure-jump-plus-scaling process started at
  ``t0 > 0`` that switches plane at the ticks of an inhomogeneous
  exponential clock and has the same marginals.
* :func:`markov_falsification_stat` and :func:`regularized_branch_event`
  compute the statistics that separate these processes from Markov ones.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, InvalidStart
from .rng import TAG_BOOTSTRAP, TAG_BRANCH, TAG_CLOCK, TAG_DIRECTION, TAG_DRIVER, TAG_NOISE, CounterRNG
from .sde import DiffusionCoefficient, PathEnsemble, run_euler

# -- exact radii ----------------------------------------------------------------

def planar_radius(x):
    """``sqrt(x1^2 + x2^2)`` along the last axis, without fused multiply-adds."""
    return np.sqrt(np.sum(x * x, axis=-1))


def _first_exact(x, r, candidates):
    # For each row, the first candidate (in the given order) with exact radius.
    # `candidates` are callables (x, r) -> candidate array; solved rows drop out.
    fixed = x.copy()
    live = np.arange(x.shape[0])
    for make in candidates:
        if live.size == 0:
            break
        cand = make(x[live], r[live])
        hit = planar_radius(cand) == r[live]
        fixed[live[hit]] = cand[hit]
        live = live[~hit]
    ok = np.ones(x.shape[0], dtype=bool)
    ok[live] = False
    return fixed, ok


def _ulp_grid(reach=2):
    offsets = sorted(((a, b) for a in range(-reach, reach + 1) for b in range(-reach, reach + 1)),
                     key=lambda p: (abs(p[0]) + abs(p[1]), p))
    for o in offsets:
        yield lambda x, r, o=np.array(o, dtype=float): x + o * np.spacing(np.abs(x))


def _resolved(x, r, a, b):
    # Shift the larger coordinate by `a` ulps, solve the smaller one from
    # x1^2 + x2^2 = r^2 and shift it by `b` ulps.
    major = np.where(np.abs(x[:, 0]) >= np.abs(x[:, 1]), 0, 1)
    rows = np.arange(x.shape[0])
    big = x[rows, major]
    big = big + a * np.spacing(np.abs(big))
    small = np.copysign(np.sqrt(np.maximum(r * r - big * big, 0.0)), x[rows, 1 - major])
    out = np.empty_like(x)
    out[rows, major] = big
    out[rows, 1 - major] = small + b * np.spacing(np.abs(small))
    return out


def _near_axis(x, r, reach=64):
    # Near an axis the smaller coordinate barely moves the radius.  Step the
    # larger one by up to `reach` ulps and solve the smaller one from the gap
    # r^2 - big^2 (exact there), trying a few sub-ulp targets for its square;
    # keep the exact candidate with the smallest displacement.
    major = np.where(np.abs(x[:, 0]) >= np.abs(x[:, 1]), 0, 1)
    rows = np.arange(x.shape[0])
    k = np.arange(-reach, reach + 1, dtype=float)[:, None, None]
    j = np.linspace(-1.0, 1.0, 17)[None, :, None]
    big0 = x[rows, major]
    big = big0 + k * np.spacing(np.abs(big0))
    gap = r * r - big * big + j * np.spacing(r * r)
    small = np.copysign(np.sqrt(np.maximum(gap, 0.0)), x[rows, 1 - major])
    small = np.concatenate([small, np.broadcast_to(x[rows, 1 - major], (k.shape[0], 1, x.shape[0]))], axis=1)
    big = np.broadcast_to(big, small.shape)
    cand = np.empty(small.shape + (2,))
    cand[..., 0] = np.where(major == 0, big, small)
    cand[..., 1] = np.where(major == 0, small, big)
    cand = cand.reshape(-1, x.shape[0], 2)
    shift = np.abs(cand - x).max(axis=-1)
    shift[planar_radius(cand) != r] = np.inf
    best = np.argmin(shift, axis=0)
    ok = np.isfinite(shift[best, rows])
    return np.where(ok[:, None], cand[best, rows], x), ok


def _resolve_minor(reach=512):
    for a in range(reach + 1):
        for sa in ((0,) if a == 0 else (a, -a)):
            for b in (0, 1, -1, 2, -2):
                yield lambda x, r, sa=sa, b=b: _resolved(x, r, sa, b)


def _tangent_search(x, r, reach=1 << 18, chunk=1 << 12):
    # Last resort, one point at a time: scan shifts of the larger coordinate in
    # growing blocks, re-solving the smaller one, until an exact point shows up.
    out = x.copy()
    ok = np.zeros(x.shape[0], dtype=bool)
    for i in range(x.shape[0]):
        lo = 0
        while lo < reach and not ok[i]:
            k = np.arange(lo, lo + chunk, dtype=float)
            k = np.concatenate([k, -k[k > 0]])
            for b in (0, 1, -1):
                cand = _resolved(np.broadcast_to(x[i], (k.size, 2)), np.full(k.size, r[i]), k, b)
                hit = np.flatnonzero(planar_radius(cand) == r[i])
                if hit.size:
                    out[i] = cand[hit[np.argmin(np.abs(k[hit]))]]
                    ok[i] = True
                    break
            lo += chunk
    return out, ok


def snap_to_radius(x, r, max_shift=2e-8):
    """Move planar points by a negligible amount so that ``planar_radius(x) == r``.

    The points ``x`` (shape ``(n, 2)``) are assumed to lie within a few ulps
    of the circle of radius ``r``.  Candidates are tried in order of growing
    displacement, the first exact one winning: a +-2 ulp grid in both
    coordinates, then the larger coordinate shifted by up to 512 ulps with
    the smaller one re-solved from ``x1^2 + x2^2 = r^2``, then a joint search
    for points near an axis, and finally the
    same re-solve scanned per point over up to ``2**18`` ulps.  Candidates
    that move a point by more than ``max_shift * r`` are refused.  Close to
    an axis an exact point can be up to about ``sqrt(2**-53) * r`` (1.05e-8 r)
    away, since the squares that round to ``r^2`` are an ulp of ``r^2``
    apart; the default leaves a factor of two over that.

    Returns
    -------
    ndarray
        Adjusted points.
    int
        Number of points left unchanged because no exact candidate was found.
    """
    x = np.asarray(x, dtype=float)
    r = np.broadcast_to(np.asarray(r, dtype=float), x.shape[:1])
    out = x.copy()
    idx = np.flatnonzero(planar_radius(out) != r)
    stages = (lambda xi, ri: _first_exact(xi, ri, _ulp_grid()),
              lambda xi, ri: _first_exact(xi, ri, _resolve_minor()),
              _near_axis,
              _tangent_search)
    for stage in stages:
        if idx.size == 0:
            break
        xi, ri = x[idx], r[idx]
        fixed, ok = stage(xi, ri)
        ok &= np.abs(fixed - xi).max(axis=1) <= max_shift * ri
        out[idx[ok]] = fixed[ok]
        idx = idx[~ok]
    return out, int(idx.size)


def _on_circle(radius, angle):
    x = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
    shape = x.shape
    flat, missed = snap_to_radius(x.reshape(-1, 2), np.broadcast_to(radius, angle.shape).reshape(-1))
    return flat.reshape(shape), missed


def embed(planar, branch):
    """Place planar states in plane 1 (``branch == 1``) or plane 2 of R^4.

    ``planar`` has shape ``(..., 2)`` and ``branch`` broadcasts against
    ``planar[..., 0]``.
    """
    planar = np.asarray(planar, dtype=float)
    out = np.zeros(planar.shape[:-1] + (4,))
    b1 = np.broadcast_to(np.asarray(branch) == 1, planar.shape[:-1])
    out[..., 0:2] = np.where(b1[..., None], planar, 0.0)
    out[..., 2:4] = np.where(b1[..., None], 0.0, planar)
    return out


# -- time change ----------------------------------------------------------------

@dataclass(frozen=True)
class TimeChange:
    """Occupation clocks of the alternating dyadic windows.

    ``[0, 1]`` is split into windows ``W_n = [2^-(n+1), 2^-n]``; windows with
    even ``n`` make up ``I_1`` and odd ones ``I_2``.  ``a_j(t)`` is the time
    spent in ``I_j`` before ``t``, so ``a_1 + a_2 = t``.  On ``W_n`` the
    active clock equals ``s/3 + (t - s)`` and the idle one ``2s/3``, with
    ``s = 2^-(n+1)``.
    """

    def _parts(self, t):
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > 1)):
            raise ValueError("time change is defined on [0, 1]")
        _, e = np.frexp(t)
        n = np.where(t >= 1.0, 0, -e)
        s = np.ldexp(1.0, -(n + 1))
        active = s / 3.0 + (t - s)
        idle = (2.0 * s) / 3.0
        first = (n % 2) == 0
        zero = t == 0
        a1 = np.where(zero, 0.0, np.where(first, active, idle))
        a2 = np.where(zero, 0.0, np.where(first, idle, active))
        return a1, a2, first

    def a1(self, t):
        a, _, _ = self._parts(t)
        return a if a.ndim else float(a)

    def a2(self, t):
        _, a, _ = self._parts(t)
        return a if a.ndim else float(a)

    def clock(self, branch, t):
        """``a_branch(t)`` for ``branch`` in ``{1, 2}`` (broadcasts)."""
        a1, a2, _ = self._parts(t)
        return np.where(np.asarray(branch) == 1, a1, a2)

    def active(self, t):
        """1 where ``I_1`` is running at ``t``, 2 otherwise (window endpoints go to the later window)."""
        _, _, first = self._parts(t)
        return np.where(first, 1, 2)

    def min_slope(self, n_grid=10_000):
        """Smallest ``min(a_1(t), a_2(t)) / t`` over a grid of ``(0, 1]``."""
        t = np.linspace(1.0 / n_grid, 1.0, n_grid)
        a1, a2, _ = self._parts(t)
        return float(np.min(np.minimum(a1, a2) / t))


class IdentityClock:
    """Both planes run on real time (the untimed branched peacock)."""

    def clock(self, branch, t):
        return np.broadcast_to(np.asarray(t, dtype=float), np.broadcast(np.asarray(branch), t).shape).copy()

    def a1(self, t):
        return t

    def a2(self, t):
        return t


@dataclass(frozen=True)
class BranchedCircleLaw:
    """Uniform law on ``S^1_{a1} U S^2_{a2}`` (fair choice of circle)."""

    a1: float
    a2: float
    dim = 4

    def second_moment(self):
        return 0.5 * (self.a1 + self.a2)

    def draw(self, rng, ids, step=0, tag=TAG_BRANCH):
        ids = np.asarray(ids)
        u = rng.uniform(ids, step, 2, tag=tag)[:, 0]
        branch = np.where(u[:, 0] < 0.5, 1, 2)
        radius = np.sqrt(np.where(branch == 1, self.a1, self.a2))
        planar, _ = _on_circle(radius, 2.0 * np.pi * u[:, 1])
        return embed(planar, branch)

    def draw_labelled(self, rng, ids, step=0, tag=TAG_BRANCH):
        ids = np.asarray(ids)
        u = rng.uniform(ids, step, 2, tag=tag)[:, 0]
        branch = np.where(u[:, 0] < 0.5, 1, 2)
        radius = np.sqrt(np.where(branch == 1, self.a1, self.a2))
        planar, _ = _on_circle(radius, 2.0 * np.pi * u[:, 1])
        return embed(planar, branch), branch


# -- branched peacock -------------------------------------------------------------

def _fair_branch(rng, ids):
    return np.where(rng.uniform(ids, 0, 1, tag=TAG_BRANCH)[:, 0, 0] < 0.5, 1, 2)


def _grid(cfg):
    k = cfg.n_steps
    record = list(range(0, k + 1, cfg.record_stride))
    if record[-1] != k:
        record.append(k)
    return np.asarray(record), np.asarray(record) * cfg.dt


def branched_peacock(cfg, time_change=None, method="exact", offset=None, times=None):
    """Fair coin between the two planes, then tangential motion in the chosen one.

    Parameters
    ----------
    cfg : SimulationConfig
        ``cfg.initial`` must be ``None`` or the origin; use ``offset`` to
        shift the whole process by a constant vector of R^4.
    time_change : TimeChange, optional
        Plane ``j`` runs on clock ``a_j(t)``; real time for both if omitted.
    method : {"exact", "euler"}
        ``"exact"`` samples the tangential motion in polar form on the
        recorded grid: the radius is ``sqrt(a_j(t))`` and angle increments are
        ``N(0, log(a(t') / a(t)))``.  ``"euler"`` runs Euler steps of the
        tangential coefficient gated by the plane's activity indicator, after
        an exact circle step over the first grid interval.
    times : array_like, optional
        Explicit increasing record times starting at 0 (``"exact"`` only);
        overrides the ``cfg`` grid so that any time can be hit exactly.

    Returns
    -------
    PathEnsemble
        States in R^4; ``labels["branch"]`` holds each path's plane (1 or 2).
    """
    if cfg.initial is not None:
        pt = getattr(cfg.initial, "point", None)
        if pt is None or any(pt):
            raise InvalidStart("branched_peacock starts at the origin; use offset to shift it")
    clock = time_change if time_change is not None else IdentityClock()
    rng = CounterRNG(cfg.master_seed)
    ids = np.arange(cfg.n_paths)
    branch = _fair_branch(rng, ids)
    if method == "exact":
        if times is None:
            _, times = _grid(cfg)
        else:
            times = np.asarray(times, dtype=float)
            if times[0] != 0.0 or np.any(np.diff(times) <= 0) or times[-1] > 1.0:
                raise ValueError("times must increase from 0 within [0, 1]")
        planar, missed = _exact_tangential(rng, ids, branch, clock, times)
    elif method == "euler":
        if times is not None:
            raise ValueError("explicit times are only supported by the exact method")
        _, times, planar = _euler_tangential(rng, ids, branch, clock, cfg)
        missed = 0
    else:
        raise ValueError(f"unknown method {method!r}")
    paths = embed(planar, branch[:, None])
    if offset is not None:
        paths = paths + np.asarray(offset, dtype=float)
    e = PathEnsemble(times=times, paths=paths, master_seed=cfg.master_seed, path_ids=ids, dt=cfg.dt,
                     coefficient="branched_tangential")
    e.labels["branch"] = branch
    e.extras["branch_id"] = np.repeat(branch[:, None], times.size, axis=1)
    e.meta.update({"method": method, "time_change": type(clock).__name__, "radius_snap_missed": missed})
    return e


def _exact_tangential(rng, ids, branch, clock, times):
    a = clock.clock(branch[:, None], times[None, :])  # (N, R)
    n, r = a.shape
    angle = np.empty((n, r))
    angle[:, 0] = 2.0 * np.pi * rng.uniform(ids, 0, 1, tag=TAG_BOOTSTRAP)[:, 0, 0]
    z = rng.normal(ids, np.arange(1, r), 1, tag=TAG_DRIVER)[..., 0] if r > 1 else np.zeros((n, 0))
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where(a[:, :-1] > 0, np.log(a[:, 1:] / a[:, :-1]), 0.0)
    # first positive clock value: the angle there is the uniform bootstrap
    inc = np.sqrt(var) * z
    angle[:, 1:] = angle[:, :1] + np.cumsum(inc, axis=1)
    planar, missed = _on_circle(np.sqrt(a), angle)
    return planar, missed


def _euler_tangential(rng, ids, branch, clock, cfg):
    if not isinstance(clock, TimeChange):
        active = {1: lambda t: 1.0, 2: lambda t: 1.0}
    else:
        active = {j: (lambda t, j=j: 1.0 if int(clock.active(t)) == j else 0.0) for j in (1, 2)}
    k = cfg.n_steps
    record = np.arange(0, k + 1, cfg.record_stride)
    if record[-1] != k:
        record = np.append(record, k)
    out = np.zeros((ids.size, record.size, 2))
    for j in (1, 2):
        sel = np.flatnonzero(branch == j)
        if sel.size == 0:
            continue

        def func(t, x, j=j):
            r = np.sqrt(x[:, 0] ** 2 + x[:, 1] ** 2)
            col = np.empty((x.shape[0], 2, 1))
            g = active[j](t)
            col[:, 0, 0] = -g * x[:, 1] / r
            col[:, 1, 0] = g * x[:, 0] / r
            return col

        def first(x, pids, rng_, h, j=j):
            rad = math.sqrt(float(clock.clock(j, cfg.dt)))
            ang = 2.0 * np.pi * rng_.uniform(pids, 0, 1, tag=TAG_BOOTSTRAP)[:, 0, 0]
            return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)

        sigma = DiffusionCoefficient(2, 1, func, name=f"gated_tangential[{j}]")
        _, states, _, _ = run_euler(sigma, np.zeros((sel.size, 2)), ids[sel], rng, 0.0, cfg.dt, k,
                                    record_stride=cfg.record_stride, first_step=first, workers=cfg.workers)
        out[sel] = states
    return record, record * cfg.dt, out


# -- jump mimicker ------------------------------------------------------------------

def clock_rate(t):
    """Jump intensity ``1 / (2t)`` of the mimicker at radius ``sqrt(t)``."""
    return 0.5 / np.asarray(t, dtype=float)


def integrated_clock(t):
    """``Lambda(t) = log(t) / 2``, an antiderivative of :func:`clock_rate`."""
    return 0.5 * np.log(np.asarray(t, dtype=float))


def jump_count_pmf(n, delta):
    """``P[n jumps] = delta^n e^-delta / n!`` for clock increment ``delta``."""
    return delta**n * math.exp(-delta) / math.factorial(n)


def stay_probability(delta):
    """Probability of an even number of jumps: ``cosh(delta) / e^delta``."""
    return math.cosh(delta) * math.exp(-delta)


def switch_probability(delta):
    return math.sinh(delta) * math.exp(-delta)


def jump_mimicker(t0, cfg):
    """Event-driven mimicker of the branched peacock on ``[t0, t_end]``.

    Start uniformly on ``S^1_{t0} U S^2_{t0}``.  With i.i.d. ``xi_k ~ Exp(1)``
    the ``k``-th jump happens when ``Lambda(t) - Lambda(t0)`` reaches
    ``xi_1 + ... + xi_k``, i.e. at ``t0 exp(2 (xi_1 + ... + xi_k))``.  At each
    jump the active plane alternates and a fresh uniform direction ``u_k`` is
    drawn; between jumps the state is ``sqrt(t) u_k``.  No time stepping is
    involved; states are evaluated at the grid ``linspace(t0, t_end, K + 1)``
    with ``K = round((t_end - t0) / dt)``.

    Returns
    -------
    PathEnsemble
        ``labels["branch"]`` is the initial plane; extras ``branch_id`` (the
        current plane) and ``jump_count`` are recorded per grid time.
    """
    if not (t0 > 0):
        raise InvalidStart(f"t0 must be positive, got {t0}")
    if not t0 < cfg.t_end:
        raise InvalidStart(f"t0={t0} must be below t_end={cfg.t_end}")
    rng = CounterRNG(cfg.master_seed)
    ids = np.arange(cfg.n_paths)
    n = ids.size
    k = max(1, int(round((cfg.t_end - t0) / cfg.dt)))
    times = np.linspace(t0, cfg.t_end, k + 1)
    times[-1] = cfg.t_end
    levels = integrated_clock(times) - integrated_clock(t0)
    horizon = float(levels[-1])

    branch0 = _fair_branch(rng, ids)
    # clock sums, extended until every path has passed the horizon
    m = int(horizon + 6.0 * math.sqrt(horizon + 1.0) + 8)
    sums = np.cumsum(rng.exponential(ids, np.arange(m), 1, tag=TAG_CLOCK)[..., 0], axis=1)
    while np.any(sums[:, -1] <= horizon):
        more = rng.exponential(ids, np.arange(sums.shape[1], 2 * sums.shape[1]), 1, tag=TAG_CLOCK)[..., 0]
        sums = np.concatenate([sums, sums[:, -1:] + np.cumsum(more, axis=1)], axis=1)

    counts = np.empty((n, times.size), dtype=np.int64)
    for j, lev in enumerate(levels):
        counts[:, j] = np.count_nonzero(sums <= lev, axis=1)
    n_dirs = int(counts.max()) + 1
    angles = 2.0 * np.pi * rng.uniform(ids, np.arange(n_dirs), 1, tag=TAG_DIRECTION)[..., 0]
    ang = np.take_along_axis(angles, counts, axis=1)
    radius = np.broadcast_to(np.sqrt(times)[None, :], ang.shape)
    planar, missed = _on_circle(radius, ang)
    current = np.where(counts % 2 == 0, branch0[:, None], 3 - branch0[:, None])
    paths = embed(planar, current)
    e = PathEnsemble(times=times, paths=paths, master_seed=cfg.master_seed, path_ids=ids, dt=float(times[1] - times[0]),
                     coefficient="jump_mimicker")
    e.labels["branch"] = branch0
    e.extras["branch_id"] = current
    e.extras["jump_count"] = counts
    e.meta.update({"t0": t0, "clock_horizon": horizon, "radius_snap_missed": missed})
    return e


# -- statistics -------------------------------------------------------------------

def plane2_radius(x):
    """The convex test function ``f(x) = sqrt(x3^2 + x4^2)``."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(x[..., 2] ** 2 + x[..., 3] ** 2)


@dataclass
class FalsificationReport:
    t: float
    e_f_overall: float
    e_f_branch1: float
    e_f_branch2: float
    gap: float
    se: float
    se_gap: float
    n_branch1: int
    n_branch2: int

    def row(self):
        return (self.t, self.e_f_overall, self.e_f_branch1, self.e_f_branch2, self.gap, self.se)


FALSIFICATION_COLUMNS = ("t", "E_f_overall", "E_f_branch1", "E_f_branch2", "gap", "SE")


def _labels(e):
    if "branch" in e.labels:
        return np.asarray(e.labels["branch"])
    # fallback: the plane carrying more mass at the final time
    x = e.paths[:, -1]
    return np.where(planar_radius(x[:, 2:4]) > planar_radius(x[:, 0:2]), 2, 1)


def _mean(v):
    # shifted by the first value so that a constant sample returns that value exactly
    return float(v[0] + np.mean(v - v[0]))


def markov_falsification_stat(e, t, min_branch=30):
    """Mean of ``f = sqrt(x3^2 + x4^2)`` at ``t``, overall and per branch label.

    ``gap = E[f | branch 2] - E[f | branch 1]``; ``se`` is the standard
    error of the overall mean and ``se_gap`` that of the gap.
    """
    f = plane2_radius(e.paths[:, e.index_of(t)])
    lab = _labels(e)
    ok = np.isfinite(f)
    f, lab = f[ok], lab[ok]
    f1, f2 = f[lab == 1], f[lab == 2]
    if f1.size < min_branch or f2.size < min_branch:
        raise InsufficientData(f"branch sizes {f1.size}, {f2.size} below {min_branch}")

    def se_of(v):
        return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0

    m1, m2 = _mean(f1), _mean(f2)
    return FalsificationReport(float(e.times[e.index_of(t)]), _mean(f), m1, m2, m2 - m1, se_of(f),
                               math.hypot(se_of(f1), se_of(f2)), int(f1.size), int(f2.size))


@dataclass
class BranchEventReport:
    t: float
    noise_power: float
    p_hat: float
    se: float
    lower_bound: float
    upper_bound: float
    c: float
    lower_ok: bool
    upper_ok: bool
    n: int
    extra: dict = field(default_factory=dict)

    @property
    def bounds_ok(self):
        return self.lower_ok and self.upper_ok


def distance_to_plane1_circle(y, a1):
    """Euclidean distance from ``y`` in R^4 to ``S^1_{a1}``."""
    rho = math.sqrt(a1)
    return np.sqrt((planar_radius(y[:, 0:2]) - rho) ** 2 + planar_radius(y[:, 2:4]) ** 2)


def regularized_branch_event(t, noise_power=14, cfg=None, noise=True, time_change=None, n_se=3.0,
                             n_samples=100_000, seed=0):
    """Probability that ``Y = X + N`` lies within ``t`` of the plane-1 circle.

    ``X`` is drawn exactly from the time-changed branched peacock marginal at
    ``t`` (uniform on ``S^1_{a1(t)} U S^2_{a2(t)}``) and ``N ~ N(0, t^p id)``
    independently (``noise=False`` sets ``N = 0``).  This is a marginal-level
    check: no mimicking process is simulated.  Points whose squared distance
    is within relative ``1e-12`` of ``t^2`` count as outside, so rounding
    cannot move boundary points inside.

    The estimate is compared with ``1/2 - t^12/2 <= p + 3 se`` and
    ``p - 3 se <= 1/2 + t^13 / c`` where ``c`` is the smallest slope
    ``a_i(t)/t`` measured on a grid.
    """
    if not 0 < t <= 1:
        raise ValueError("t must lie in (0, 1]")
    if cfg is not None:
        n_samples, seed = cfg.n_paths, cfg.master_seed
    tc = time_change if time_change is not None else TimeChange()
    a1, a2 = float(tc.a1(t)), float(tc.a2(t))
    rng = CounterRNG(seed)
    ids = np.arange(n_samples)
    x, _ = BranchedCircleLaw(a1, a2).draw_labelled(rng, ids)
    if noise:
        x = x + math.sqrt(t**noise_power) * rng.normal(ids, 0, 4, tag=TAG_NOISE)[:, 0]
    d = distance_to_plane1_circle(x, a1)
    hit = d * d < t * t * (1.0 - 1e-12)
    p = float(np.mean(hit))
    se = math.sqrt(p * (1 - p) / n_samples)
    c = tc.min_slope()
    lb = 0.5 - t**12 / 2.0
    ub = 0.5 + t**13 / c
    return BranchEventReport(t, noise_power, p, se, lb, ub, c, bool(lb <= p + n_se * se), bool(p - n_se * se <= ub),
                             n_samples, {"a1": a1, "a2": a2, "noise": bool(noise)})
