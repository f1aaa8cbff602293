"""Euler-Maruyama simulation of driftless SDEs ``dX = sigma_t(X) dB``.

Coefficients are evaluated on whole batches of states: ``sigma(t, x)`` takes
``x`` of shape ``(n, d)`` and returns ``(n, d, m)``.  Path ``i`` draws its
Brownian increments from the counter stream ``(master_seed, i)``, so an
ensemble is bit-identical however its paths are split between workers.
"""
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AbortedPathsWarning, InsufficientData, NonFinite, OutOfRange
from .linalg import clip_psd, eigen_bounds
from .measures import DiracLaw, EmpiricalMeasure, w2_sliced
from .rng import TAG_DRIVER, TAG_INITIAL, TAG_PROBE, CounterRNG

_BLOCK_DRAWS = 4_000_000
_CHUNK_PATHS = 16384


@dataclass(frozen=True)
class DiffusionCoefficient:
    """A batched map ``(t, x) -> sigma_t(x)`` with ``d x m`` matrix values.

    Parameters
    ----------
    dim_state, dim_driver : int
        State dimension ``d`` and Brownian dimension ``m``.
    func : callable
        ``func(t, x)`` with ``x`` of shape ``(n, d)`` returning ``(n, d, m)``.
        Must be a pure function of its arguments.
    name : str
        Used in exported metadata.
    ellipticity_floor : float
        Declared lower bound ``c`` with ``sigma sigma^T >= c id`` (0 if none).
    """

    dim_state: int
    dim_driver: int
    func: object
    name: str = "sigma"
    ellipticity_floor: float = 0.0
    description: str = ""

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        s = self.func(t, np.atleast_2d(x))
        return s[0] if single else s

    def squared(self, t, x):
        """``sigma sigma^T`` at ``(t, x)``."""
        s = self(t, x)
        return s @ np.swapaxes(s, -1, -2)

    def check_ellipticity(self, points, times):
        """Smallest eigenvalue of ``sigma sigma^T`` over the given probes."""
        lo = np.inf
        for t in np.atleast_1d(times):
            w, _ = eigen_bounds(self.squared(float(t), points))
            lo = min(lo, float(np.min(w)))
        return lo

    @classmethod
    def constant(cls, matrix, name="constant"):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        d, k = m.shape

        def func(t, x):
            return np.broadcast_to(m, (x.shape[0], d, k))

        floor = float(np.min(np.linalg.eigvalsh(m @ m.T))) if d == k else 0.0
        return cls(d, k, func, name, max(floor, 0.0))

    @classmethod
    def identity(cls, dim):
        return cls.constant(np.eye(dim), name=f"identity{dim}")

    @classmethod
    def zero(cls, dim, dim_driver=None):
        return cls.constant(np.zeros((dim, dim_driver or dim)), name="zero")


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters shared by every ensemble simulation.

    ``initial`` is any law with a ``draw`` method; ``None`` lets each
    simulator pick its documented default (the origin for :func:`simulate`).
    ``record_stride`` keeps every ``k``-th Euler state (the final state is
    always kept); ``workers`` only affects wall-clock time.
    """

    n_paths: int
    dt: float
    t_end: float = 1.0
    initial: object = None
    master_seed: int = 0
    record_stride: int = 1
    workers: int = 1

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise ValueError("n_paths must be >= 1")
        if not (0 < self.dt <= self.t_end <= 1):
            raise ValueError(f"need 0 < dt <= t_end <= 1, got dt={self.dt}, t_end={self.t_end}")
        if int(self.record_stride) < 1 or int(self.workers) < 1:
            raise ValueError("record_stride and workers must be >= 1")

    @property
    def n_steps(self):
        return int(math.floor(self.t_end / self.dt + 1e-9))


@dataclass
class PathEnsemble:
    """``N`` sample paths recorded on a shared time grid.

    Attributes
    ----------
    times : ndarray, shape (R,)
    paths : ndarray, shape (N, R, d)
        Aborted paths hold NaN from their abort step on.
    path_ids : ndarray, shape (N,)
        Stream ids; path ``i`` is reproducible from ``(master_seed, path_ids[i])``.
    aborted : ndarray of bool, shape (N,)
    abort_step : ndarray of int, shape (N,)
        Euler step at which a path was aborted, ``-1`` otherwise.
    labels : dict
        Per-path metadata (e.g. ``"branch"``).
    extras : dict
        Per-path, per-record integer columns exported alongside the states.
    """

    times: np.ndarray
    paths: np.ndarray
    master_seed: int
    path_ids: np.ndarray
    dt: float
    coefficient: str = ""
    aborted: np.ndarray = None
    abort_step: np.ndarray = None
    labels: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.paths.shape[0]
        if self.aborted is None:
            self.aborted = np.zeros(n, dtype=bool)
        if self.abort_step is None:
            self.abort_step = np.full(n, -1, dtype=np.int64)

    @property
    def n_paths(self):
        return self.paths.shape[0]

    @property
    def dim(self):
        return self.paths.shape[2]

    @property
    def n_aborted(self):
        return int(np.count_nonzero(self.aborted))

    def index_of(self, t):
        """Nearest recorded index to ``t``; exact ties go to the earlier node."""
        times = self.times
        span = max(abs(times[-1] - times[0]), 1.0)
        if t < times[0] - 1e-12 * span or t > times[-1] + 1e-12 * span:
            raise OutOfRange(f"t={t} outside [{times[0]}, {times[-1]}]")
        d = np.abs(times - t)
        return int(np.flatnonzero(d <= d.min() + 1e-12 * span)[0])

    def subset(self, rows):
        """Ensemble restricted to the given path rows (metadata is shared)."""
        rows = np.asarray(rows)
        return PathEnsemble(times=self.times, paths=self.paths[rows], master_seed=self.master_seed,
                            path_ids=self.path_ids[rows], dt=self.dt, coefficient=self.coefficient,
                            aborted=self.aborted[rows], abort_step=self.abort_step[rows],
                            labels={k: np.asarray(v)[rows] for k, v in self.labels.items()},
                            extras={k: np.asarray(v)[rows] for k, v in self.extras.items()},
                            meta=dict(self.meta))

    def states_at(self, t):
        """States of all non-aborted paths at the snapped grid time."""
        x = self.paths[:, self.index_of(t), :]
        if self.n_aborted:
            warnings.warn(f"{self.n_aborted} aborted paths excluded", AbortedPathsWarning, stacklevel=2)
            x = x[~self.aborted]
        return x


def marginal_at(e, t):
    """Uniform-weight empirical law of the ensemble at the grid time nearest ``t``.

    Ties (``t`` exactly between two nodes) resolve to the earlier node.
    """
    return EmpiricalMeasure(e.states_at(t))


def _record_indices(n_steps, stride):
    idx = list(range(0, n_steps + 1, stride))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return np.asarray(idx)


def _euler_chunk(sigma, x0, ids, rng, t0, dt, n_steps, step_offset, record, clock, guard, first_step):
    n, d = x0.shape
    m = sigma.dim_driver
    x = x0.copy()
    alive = np.all(np.isfinite(x), axis=1)
    abort_step = np.where(alive, -1, 0).astype(np.int64)
    x[~alive] = np.nan
    n_alive = int(alive.sum())
    out = np.empty((n, record.size, d))
    rec_pos = {int(k): j for j, k in enumerate(record)}
    if 0 in rec_pos:
        out[:, rec_pos[0]] = x
    h = clock * dt
    sqrt_h = math.sqrt(h)
    block = max(1, _BLOCK_DRAWS // max(1, n * m))
    stream = rng.normal_stream(ids, m, step_offset, tag=TAG_DRIVER)
    for b0 in range(0, n_steps, block):
        b1 = min(n_steps, b0 + block)
        z = stream.take(b1 - b0)
        z *= sqrt_h
        for k in range(b0, b1):
            if n_alive == 0:
                pass
            elif n_alive == n:
                xn = _step(sigma, x, ids, z[:, k - b0], k, t0, dt, clock, h, rng, first_step)
                bad = ~np.isfinite(xn.sum(axis=1))
                if guard is not None:
                    bad |= guard(xn)
                if bad.any():
                    alive &= ~bad
                    abort_step[bad] = k + 1
                    xn[bad] = np.nan
                    n_alive = int(alive.sum())
                x = xn
            else:
                live = np.flatnonzero(alive)
                xn = _step(sigma, x[live], ids[live], z[live, k - b0], k, t0, dt, clock, h, rng, first_step)
                bad = ~np.isfinite(xn.sum(axis=1))
                if guard is not None:
                    bad |= guard(xn)
                if bad.any():
                    hit = live[bad]
                    alive[hit] = False
                    abort_step[hit] = k + 1
                    xn[bad] = np.nan
                    n_alive = int(alive.sum())
                x[live] = xn
            j = rec_pos.get(k + 1)
            if j is not None:
                out[:, j] = x
    return out, ~alive, abort_step


def _step(sigma, x, ids, db, k, t0, dt, clock, h, rng, first_step):
    if k == 0 and first_step is not None:
        return first_step(x, ids, rng, h)
    s = sigma(clock * (t0 + k * dt), x)
    if s.shape[-1] == 1:
        return x + s[..., 0] * db
    return x + np.einsum("nij,nj->ni", s, db)


def run_euler(sigma, x0, ids, rng, t0, dt, n_steps, step_offset=0, record_stride=1, clock=1.0,
              guard=None, first_step=None, workers=1):
    """Low-level Euler loop from explicit initial states.

    Returns ``(record_indices, states, aborted, abort_step)`` where ``states``
    has shape ``(n, len(record_indices), d)``.  ``step_offset`` shifts the RNG
    step counter so consecutive calls draw fresh increments.  The coefficient
    is evaluated at ``clock * t`` and increments have variance
    ``clock * dt``.  ``first_step(x, ids, rng, h)`` may replace the first
    Euler step.  ``guard(x)`` flags states that abort their path.
    """
    x0 = np.asarray(x0, dtype=float)
    ids = np.asarray(ids)
    if x0.shape[1] != sigma.dim_state:
        raise ValueError(f"initial states are {x0.shape[1]}-dimensional, coefficient expects {sigma.dim_state}")
    record = _record_indices(n_steps, record_stride)
    n = x0.shape[0]
    n_chunks = max(workers, -(-n // _CHUNK_PATHS))
    chunks = [c for c in np.array_split(np.arange(n), min(n_chunks, n))]

    def work(sl):
        return _euler_chunk(sigma, x0[sl], ids[sl], rng, t0, dt, n_steps, step_offset, record, clock,
                            guard, first_step)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    states = np.concatenate([p[0] for p in parts])
    aborted = np.concatenate([p[1] for p in parts])
    abort_step = np.concatenate([p[2] for p in parts])
    return record, states, aborted, abort_step


def initial_states(cfg, dim, default=None):
    """Draw the ``N`` initial states of ``cfg`` (path ``i`` uses stream ``i``)."""
    law = cfg.initial if cfg.initial is not None else (default or DiracLaw.origin(dim))
    rng = CounterRNG(cfg.master_seed)
    x0 = np.asarray(law.draw(rng, np.arange(cfg.n_paths), step=0, tag=TAG_INITIAL), dtype=float)
    if x0.ndim != 2 or x0.shape[1] != dim:
        raise ValueError(f"initial law is {x0.shape[-1]}-dimensional, coefficient expects {dim}")
    return x0


def simulate(sigma, cfg, clock=1.0, guard=None, first_step=None, strict=False, x0=None):
    """Simulate ``dX = sigma_t(X) dB`` on ``[0, t_end]`` with Euler-Maruyama.

    ``X_{k+1} = X_k + sigma_{t_k}(X_k) dB_k`` with ``dB_k ~ N(0, dt id_m)``;
    no drift is ever added.  Paths whose state becomes non-finite (or
    triggers ``guard``) are aborted and reported in the ensemble; with
    ``strict=True`` the first such path raises :class:`NonFinite` instead.
    ``x0`` overrides the initial law with explicit states.
    """
    rng = CounterRNG(cfg.master_seed)
    ids = np.arange(cfg.n_paths)
    if x0 is None:
        x0 = initial_states(cfg, sigma.dim_state)
    record, states, aborted, abort_step = run_euler(
        sigma, x0, ids, rng, 0.0, cfg.dt, cfg.n_steps, record_stride=cfg.record_stride, clock=clock,
        guard=guard, first_step=first_step, workers=cfg.workers)
    if strict and np.any(aborted):
        i = int(np.flatnonzero(aborted)[0])
        raise NonFinite(i, int(abort_step[i]))
    return PathEnsemble(times=record * cfg.dt, paths=states, master_seed=cfg.master_seed, path_ids=ids,
                        dt=cfg.dt, coefficient=sigma.name, aborted=aborted, abort_step=abort_step)


@dataclass
class QVEstimate:
    matrix: np.ndarray
    n_pairs: int
    se: np.ndarray

    @property
    def eigen_ratio(self):
        """Smallest over largest eigenvalue of the estimate."""
        lo, hi = eigen_bounds(self.matrix)
        return float(lo / hi) if hi > 0 else 0.0


def quadratic_variation_estimate(e, window, x_center, radius, min_pairs=30):
    """Local estimate of ``sigma sigma^T`` near ``x_center``.

    Averages ``dX dX^T / dt`` over all (path, record step) pairs in ``window``
    (a ``(start, stop)`` range of record indices; step ``j`` goes from record
    ``j`` to ``j + 1``) whose starting state lies in the closed ball
    ``B(x_center, radius)``.  The average is projected onto the PSD cone.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    start, stop = window
    stop = min(stop, len(e.times) - 1)
    if stop <= start:
        raise ValueError("empty window")
    c = np.asarray(x_center, dtype=float)
    samples = []
    for j in range(start, stop):
        x0 = e.paths[:, j]
        dx = e.paths[:, j + 1] - x0
        ok = np.all(np.isfinite(dx), axis=1) & (np.linalg.norm(x0 - c, axis=1) <= radius)
        if np.any(ok):
            dt = e.times[j + 1] - e.times[j]
            samples.append(np.einsum("ni,nj->nij", dx[ok], dx[ok]) / dt)
    if not samples:
        raise InsufficientData("no (path, step) pair inside the ball")
    q = np.concatenate(samples)
    if q.shape[0] < min_pairs:
        raise InsufficientData(f"only {q.shape[0]} pairs inside the ball (need {min_pairs})")
    mat = clip_psd(q.mean(axis=0))
    se = q.std(axis=0, ddof=1) / math.sqrt(q.shape[0])
    return QVEstimate(mat, int(q.shape[0]), se)


def one_step_gaussian_gap(sigma, x, t0, dt, n_mc, seed, micro_steps=64, n_directions=64):
    """Compare the one-step transition law with its frozen-coefficient Gaussian.

    The "true" kernel is approximated by ``micro_steps`` Euler steps of size
    ``dt / micro_steps`` started at ``x``; the Gaussian kernel is
    ``N(x, dt * sigma sigma^T(t0, x))``.  Both clouds are driven by the same
    Brownian increments (common random numbers), which removes most of the
    Monte-Carlo noise from the comparison.

    Returns
    -------
    gap : float
        Sliced W2 between the two clouds.
    report : dict
        ``gap``, ``dt``, ``coupling_rms`` (RMS of the coupled differences, an
        upper bound for W2), and ``ratio = gap / dt**0.75``.
    """
    x = np.asarray(x, dtype=float)
    rng = CounterRNG(seed)
    ids = np.arange(n_mc)
    x0 = np.tile(x, (n_mc, 1))
    h = dt / micro_steps
    _, states, aborted, _ = run_euler(sigma, x0, ids, rng, t0, h, micro_steps, record_stride=micro_steps)
    true_end = states[:, -1]
    z = rng.normal_stream(ids, sigma.dim_driver, tag=TAG_DRIVER).take(micro_steps)
    db = z.sum(axis=1) * math.sqrt(h)
    frozen_end = x + db @ sigma(t0, x).T
    keep = ~aborted
    a = EmpiricalMeasure(true_end[keep])
    b = EmpiricalMeasure(frozen_end[keep])
    gap = w2_sliced(a, b, n_directions, seed)
    diff = true_end[keep] - frozen_end[keep]
    rms = float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))
    report = {"gap": gap, "dt": dt, "coupling_rms": rms, "ratio": gap / dt**0.75,
              "n_mc": int(keep.sum()), "n_aborted": int(aborted.sum())}
    return gap, report


def probe_points(dim, n, seed, scale=1.0):
    """Seeded Gaussian probe states for spot checks of coefficients."""
    return scale * CounterRNG(seed).normal(np.arange(n), 0, dim, tag=TAG_PROBE)[:, 0, :]
