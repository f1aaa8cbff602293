"""Regularized dyadic construction of a Markovian mimicking diffusion.

Given a peacock ``(mu_t)`` and a *base* coefficient whose marginals follow it,
level ``n`` of the construction works on the dyadic intervals
``[k 2^-n, (k+1) 2^-n]``:

1. every marginal is convolved with ``N(0, eps (t + delta) id)``;
2. on interval ``k`` the squared base coefficient is averaged against a
   Gaussian kernel of variance ``eps (t_k + delta)`` over a cloud of base
   states (a Nadaraya-Watson estimator of ``E[sigma^2(Y) | Y + G = x]``);
3. the interval is split in two halves: the first runs the mixed
   coefficient at double speed, the second adds ``sqrt(2 eps)`` white noise;
4. the interval coefficients are pasted together.

The marginal at every dyadic time is then ``mu_t * N(0, eps (t + delta) id)``.
"""
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateWeightsWarning, FlatSource, OutOfRange
from .linalg import eigen_bounds, hs_norm, psd_sqrt
from .measures import (ConvolvedLaw, EmpiricalMeasure, GaussianLaw, as_empirical, regularize_peacock,
                       w2_sliced)
from .rng import TAG_PROBE, CounterRNG
from .sde import DiffusionCoefficient, PathEnsemble, initial_states, run_euler

WEIGHT_FLOOR = 1e-300
SPLIT_ATOL = 1e-12
_ROW_CHUNK = 2048


def mixed_sigma_squared(base_sq, cloud, bandwidth, x, t):
    """Kernel average of ``base_sq(t, y)`` over ``cloud`` around ``x``.

    Parameters
    ----------
    base_sq : callable
        ``base_sq(t, y)`` with ``y`` of shape ``(N, d)`` returning PSD
        matrices of shape ``(N, d, d)``.
    cloud : EmpiricalMeasure
        Sample points ``y_j`` with weights ``w_j``.
    bandwidth : float
        Kernel variance ``h``; weights are ``w_j exp(-|x - y_j|^2 / (2 h))``.
    x : array_like, shape (d,) or (n, d)
    t : float

    Returns
    -------
    ndarray, shape (d, d) or (n, d, d)

    Notes
    -----
    The Gaussian normalising constant cancels in the ratio and is omitted.
    The average is formed as ``B_0 + sum_j p_j (B_j - B_0)``, which returns a
    constant base value bit for bit.  If all weights underflow (sum below
    ``1e-300``) the value at the nearest cloud point is used and a
    :class:`DegenerateWeightsWarning` is issued.
    """
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    y = cloud.samples
    if x.shape[1] != y.shape[1]:
        raise ValueError("point and cloud dimensions differ")
    values = np.asarray(base_sq(t, y), dtype=float)
    return _mix(values, y, cloud.weights, bandwidth, x, single)


def _mix(values, y, cloud_w, bandwidth, x, single=False):
    N, d = y.shape
    ref = values[0]
    delta = (values - ref).reshape(N, d * d)
    constant = not np.any(delta)
    out = np.empty((x.shape[0], d, d))
    if constant:
        out[:] = ref
        return out[0] if single else out
    n_degenerate = 0
    for a in range(0, x.shape[0], _ROW_CHUNK):
        xs = x[a:a + _ROW_CHUNK]
        diff = xs[:, None, :] - y[None, :, :]
        d2 = np.einsum("nkd,nkd->nk", diff, diff)
        w = np.exp(-d2 / (2.0 * bandwidth)) * cloud_w
        s = w.sum(axis=1)
        bad = s < WEIGHT_FLOOR
        p = w / np.where(bad, 1.0, s)[:, None]
        block = ref + (p @ delta).reshape(-1, d, d)
        if bad.any():
            n_degenerate += int(bad.sum())
            nearest = np.argmin(d2[bad], axis=1)
            block[bad] = values[nearest]
        out[a:a + _ROW_CHUNK] = 0.5 * (block + np.swapaxes(block, -1, -2))
    if n_degenerate:
        warnings.warn(f"kernel weights underflowed at {n_degenerate} points; nearest-sample fallback used",
                      DegenerateWeightsWarning, stacklevel=3)
    return out[0] if single else out


@dataclass
class MixedCoefficient:
    """The kernel-mixed squared coefficient of one interval, with a frozen cloud."""

    base: DiffusionCoefficient
    cloud: EmpiricalMeasure
    bandwidth: float

    def squared(self, t, x):
        return mixed_sigma_squared(self.base.squared, self.cloud, self.bandwidth, x, t)

    def sqrt(self, t, x):
        return psd_sqrt(self.squared(t, x), check=False)


def split_interval_coefficient(mixed, k, n, epsilon, clock_probe=None):
    """Coefficient of interval ``k`` at level ``n`` with the two-half time split.

    On ``[t_k, t_k + 2^-(n+1))`` it is ``sqrt(2) * sqrt(mixed)`` evaluated at
    the compressed clock ``t_k + 2 (t - t_k)``; on the second half it is
    ``sqrt(2 eps) id``.  A time counts as second-half once it is within
    ``1e-12`` of the midpoint, which keeps grid nodes on the correct side.
    ``clock_probe``, if given, is called with every compressed time.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    n_int = 2**n
    if not 0 <= k < n_int:
        raise OutOfRange(f"interval {k} outside level {n}")
    t_k = k / n_int
    half = 0.5 / n_int
    d = mixed.base.dim_state
    noise = math.sqrt(2.0 * epsilon)
    root2 = math.sqrt(2.0)

    def func(t, x):
        if t - t_k < half - SPLIT_ATOL:
            s = t_k + 2.0 * (t - t_k)
            if clock_probe is not None:
                clock_probe(s)
            return root2 * mixed.sqrt(s, x)
        return np.broadcast_to(noise * np.eye(d), (x.shape[0], d, d)).copy()

    return DiffusionCoefficient(d, d, func, name=f"split[n={n},k={k}]", ellipticity_floor=0.0,
                                description="second half has sigma sigma^T = 2 eps id")


def interval_index(t, n):
    """Index ``k`` with ``t`` in ``(t_k, t_{k+1}]``; ``t = 0`` maps to 0."""
    n_int = 2**n
    if not 0.0 <= t <= 1.0:
        raise OutOfRange(f"t={t} outside [0, 1]")
    k = math.ceil(t * n_int) - 1
    return min(max(k, 0), n_int - 1)


def _source_cloud(source, size, seed):
    def sampler(t, k):
        law = source.law_at(t)
        return as_empirical(law, size, seed + 1000003 * (k + 1))

    return sampler


@dataclass
class DyadicScheme:
    """Level-``n`` construction parameters.

    ``cloud_sampler(t, k)`` returns the empirical cloud of base states used
    for mixing on interval ``k`` (sampled at its left endpoint ``t``).
    ``n = 0`` (one interval) is allowed for testing.
    """

    n: int
    epsilon: float
    delta: float
    base: DiffusionCoefficient
    cloud_sampler: object
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("level n must be >= 0")
        if not (self.epsilon > 0 and self.delta > 0):
            raise ValueError("epsilon and delta must be positive")

    @property
    def n_intervals(self):
        return 2**self.n

    @property
    def dyadics(self):
        return np.arange(self.n_intervals + 1) / self.n_intervals

    def bandwidth(self, k):
        return self.epsilon * (k / self.n_intervals + self.delta)

    def mixed(self, k):
        if ("mixed", k) not in self._cache:
            cloud = self.cloud_sampler(k / self.n_intervals, k)
            self._cache[("mixed", k)] = MixedCoefficient(self.base, cloud, self.bandwidth(k))
        return self._cache[("mixed", k)]

    def split(self, k):
        if ("split", k) not in self._cache:
            self._cache[("split", k)] = split_interval_coefficient(self.mixed(k), k, self.n, self.epsilon)
        return self._cache[("split", k)]


def paste_scheme(s):
    """Piecewise coefficient equal to ``s.split(k)`` on ``(t_k, t_{k+1}]``."""

    def func(t, x):
        return s.split(interval_index(t, s.n)).func(t, x)

    d = s.base.dim_state
    return DiffusionCoefficient(d, d, func, name=f"pasted[n={s.n}]")


def finite_difference_lipschitz(f, points, h=1e-4, seed=0):
    """Largest ``hs_norm(f(x + h u) - f(x)) / h`` over the points and random unit ``u``."""
    points = np.asarray(points, dtype=float)
    u = CounterRNG(seed).unit_directions(np.arange(points.shape[0]), 0, points.shape[1], tag=TAG_PROBE)[:, 0]
    return float(np.max(hs_norm(f(points + h * u) - f(points)) / h))


@dataclass
class ConstructionReport:
    """Verification output of :func:`run_construction`."""

    dyadic_rows: list  # (t, sliced_w2, threshold, pass)
    floor_rows: list  # (t, min_eig)
    budget_rows: list  # (k, target_increment, measured_increment)
    params: dict

    @property
    def passed(self):
        floor = 2.0 * self.params["epsilon"] - 1e-9
        return all(r[3] for r in self.dyadic_rows) and all(r[1] >= floor for r in self.floor_rows)

    @property
    def max_w2(self):
        return max(r[1] for r in self.dyadic_rows)

    @property
    def min_floor(self):
        return min(r[1] for r in self.floor_rows)


def _check_not_flat(source, dyadics):
    m2 = np.array([source.law_at(t).second_moment() for t in dyadics])
    inc = np.diff(m2)
    if np.any(inc <= 1e-12):
        k = int(np.flatnonzero(inc <= 1e-12)[0])
        raise FlatSource(f"second moment does not grow on [{dyadics[k]}, {dyadics[k + 1]}]")
    return m2


def run_construction(source, base, n, epsilon, delta, cfg, cloud_size=256, threshold=0.05,
                     n_probes=1000, n_directions=256, allow_flat=False):
    """Simulate the level-``n`` construction and verify its dyadic marginals.

    Parameters
    ----------
    source : PeacockCurve
        Must provide laws at every dyadic ``k 2^-n``.
    base : DiffusionCoefficient
        A coefficient whose marginals follow ``source`` (caller's claim).
    cfg : SimulationConfig
        ``cfg.initial`` is ignored: paths start from ``mu_0 * N(0, eps delta id)``.
        ``cfg.dt`` is shrunk so every half interval holds a whole number of steps.
    allow_flat : bool
        Sources whose second moment stalls between dyadics are rejected unless
        this is set.

    Returns
    -------
    PathEnsemble, ConstructionReport
    """
    if not (epsilon > 0 and delta > 0):
        raise ValueError("epsilon and delta must be positive")
    scheme = DyadicScheme(n, epsilon, delta, base, _source_cloud(source, cloud_size, cfg.master_seed))
    dyadics = scheme.dyadics
    if allow_flat:
        m2 = np.array([source.law_at(t).second_moment() for t in dyadics])
    else:
        m2 = _check_not_flat(source, dyadics)
    half = 0.5 / scheme.n_intervals
    per_half = max(1, math.ceil(half / cfg.dt - 1e-9))
    dt = half / per_half
    d = base.dim_state

    init_law = ConvolvedLaw(source.law_at(0.0), GaussianLaw.isotropic(d, epsilon * delta))
    x = initial_states(replace(cfg, initial=init_law), d)
    rng = CounterRNG(cfg.master_seed)
    ids = np.arange(cfg.n_paths)
    times, chunks = [np.zeros(1)], [x[:, None, :]]
    aborted = np.zeros(cfg.n_paths, dtype=bool)
    abort_step = np.full(cfg.n_paths, -1, dtype=np.int64)
    offset = 0
    for k in range(scheme.n_intervals):
        rec, states, ab, st = run_euler(scheme.split(k), x, ids, rng, dyadics[k], dt, 2 * per_half,
                                        step_offset=offset, record_stride=cfg.record_stride,
                                        workers=cfg.workers)
        new = ab & ~aborted
        abort_step[new] = st[new] + offset
        aborted |= ab
        times.append(dyadics[k] + rec[1:] * dt)
        chunks.append(states[:, 1:])
        x = states[:, -1]
        offset += 2 * per_half
    times = np.concatenate(times)
    for k in range(1, scheme.n_intervals + 1):
        times[np.argmin(np.abs(times - dyadics[k]))] = dyadics[k]
    e = PathEnsemble(times=times, paths=np.concatenate(chunks, axis=1), master_seed=cfg.master_seed,
                     path_ids=ids, dt=dt, coefficient=f"pasted[n={n}]", aborted=aborted, abort_step=abort_step)

    target = regularize_peacock(source, epsilon, delta, seed=cfg.master_seed + 1)
    dyadic_rows, budget_rows = [], []
    prev = float(np.mean(np.sum(chunks[0][:, 0] ** 2, axis=1)))
    for k in range(1, scheme.n_intervals + 1):
        t = dyadics[k]
        cloud = e.states_at(t)
        law = target.law_at(t)
        if not isinstance(law, GaussianLaw):
            law = as_empirical(law, cfg.n_paths, cfg.master_seed + 7, step=k)
        w2 = w2_sliced(EmpiricalMeasure(cloud), law, n_directions, seed=cfg.master_seed)
        dyadic_rows.append((float(t), w2, threshold, bool(w2 <= threshold)))
        cur = float(np.mean(np.sum(cloud**2, axis=1)))
        budget_rows.append((k - 1, float(m2[k] - m2[k - 1] + epsilon * d * (dyadics[k] - dyadics[k - 1])),
                            cur - prev))
        prev = cur

    probe_rng = CounterRNG(cfg.master_seed + 2)
    u = probe_rng.uniform(np.arange(n_probes), 0, 3, tag=TAG_PROBE)[:, 0]
    xs = probe_rng.normal(np.arange(n_probes), 1, d, tag=TAG_PROBE)[:, 0]
    pasted = paste_scheme(scheme)
    floor_rows = []
    for i in range(n_probes):
        k = min(int(u[i, 0] * scheme.n_intervals), scheme.n_intervals - 1)
        t = dyadics[k] + half + u[i, 1] * half
        s = pasted(t, xs[i])
        lo, _ = eigen_bounds(s @ s.T)
        floor_rows.append((float(t), float(lo)))

    params = {"n": n, "epsilon": epsilon, "delta": delta, "dt_effective": dt, "cloud_size": cloud_size,
              "n_paths": cfg.n_paths, "seed": cfg.master_seed, "base": base.name, "threshold": threshold,
              "n_aborted": int(aborted.sum())}
    e.meta.update(params)
    return e, ConstructionReport(dyadic_rows, floor_rows, budget_rows, params)
