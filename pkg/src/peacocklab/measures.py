"""Measures on R^d, Gaussian regularization, Wasserstein-2 and convex order.

Law descriptors share a small duck-typed interface:

``dim``
    dimension of the state space;
``draw(rng, ids, step=0, tag=TAG_INITIAL)``
    one sample per entry of ``ids``, addressed through a
    :class:`~peacocklab.rng.CounterRNG` so that sample ``i`` only depends on
    ``(seed, ids[i], step, tag)``;
``second_moment()``
    ``E|X|^2``.

:class:`EmpiricalMeasure`, :class:`GaussianLaw`, :class:`DiracLaw`,
:class:`CircleLaw` and :class:`ConvolvedLaw` implement it, as does the
branched circle law in :mod:`peacocklab.counterexamples`.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import DimensionMismatch, OutOfRange
from .linalg import hs_norm, jacobi_eigh, psd_sqrt
from .rng import TAG_AUX, TAG_INITIAL, TAG_NOISE, CounterRNG

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted cloud of points in R^d.

    Parameters
    ----------
    samples : array_like, shape (N, d) or (N,)
        Support points.  A 1-d array is read as ``N`` points in R^1.
    weights : array_like, shape (N,), optional
        Non-negative weights summing to one.  Uniform when omitted.
    """

    samples: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"samples must have shape (N, d) with N, d >= 1, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        if self.weights is None:
            w = np.full(x.shape[0], 1.0 / x.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if w.shape[0] != x.shape[0]:
                raise DimensionMismatch("weights and samples disagree in length")
            if np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite and non-negative")
            if abs(w.sum() - 1.0) > WEIGHT_TOL:
                raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "weights", w)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def is_uniform(self):
        return bool(np.all(self.weights == self.weights[0]))

    def mean(self):
        return self.weights @ self.samples

    def covariance(self):
        c = self.samples - self.mean()
        return (c * self.weights[:, None]).T @ c

    def second_moment(self):
        return float(self.weights @ np.sum(self.samples**2, axis=1))

    def effective_size(self):
        """Kish effective sample size ``1 / sum w_i^2``."""
        return 1.0 / float(np.sum(self.weights**2))

    def project(self, u):
        """Projections ``<x_i, u>`` for directions ``u`` of shape (d,) or (k, d)."""
        return self.samples @ np.asarray(u, dtype=float).T

    def draw(self, rng, ids, step=0, tag=TAG_INITIAL):
        """Resample support points (inverse CDF on the weights)."""
        u = rng.uniform(ids, step, 1, tag=tag)[:, 0, 0]
        cdf = np.cumsum(self.weights)
        cdf[-1] = 1.0
        return self.samples[np.searchsorted(cdf, u, side="right").clip(0, self.n - 1)].copy()


@dataclass(frozen=True, eq=False)
class GaussianLaw:
    """Normal law ``N(mean, covariance)`` on R^d."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if m.ndim != 1 or c.shape != (m.shape[0], m.shape[0]):
            raise DimensionMismatch(f"mean {m.shape} and covariance {c.shape} disagree")
        # validates symmetry and sign
        psd_sqrt(c)
        m.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", c)

    @classmethod
    def isotropic(cls, dim, variance, mean=None):
        """``N(mean, variance * id)``; centred when ``mean`` is omitted."""
        m = np.zeros(dim) if mean is None else mean
        return cls(m, variance * np.eye(dim))

    @property
    def dim(self):
        return self.mean.shape[0]

    def second_moment(self):
        return float(np.trace(self.covariance) + self.mean @ self.mean)

    def sqrt_covariance(self):
        return psd_sqrt(self.covariance)

    def convolve(self, other):
        """Law of the sum of independent draws; closed form for Gaussians."""
        if other.dim != self.dim:
            raise DimensionMismatch("dimensions differ")
        return GaussianLaw(self.mean + other.mean, self.covariance + other.covariance)

    def draw(self, rng, ids, step=0, tag=TAG_INITIAL):
        z = rng.normal(ids, step, self.dim, tag=tag)[:, 0, :]
        return self.mean + z @ self.sqrt_covariance()

    def sample(self, n, seed):
        return EmpiricalMeasure(self.draw(CounterRNG(seed), np.arange(n)))


@dataclass(frozen=True)
class DiracLaw:
    """Point mass at ``point``."""

    point: tuple

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(v) for v in np.atleast_1d(self.point)))

    @classmethod
    def origin(cls, dim):
        return cls((0.0,) * dim)

    @property
    def dim(self):
        return len(self.point)

    def second_moment(self):
        return float(np.dot(self.point, self.point))

    def draw(self, rng, ids, step=0, tag=TAG_INITIAL):
        return np.tile(np.asarray(self.point), (len(ids), 1))


@dataclass(frozen=True)
class CircleLaw:
    """Uniform law on the centred circle of radius ``radius`` in the plane."""

    radius: float

    def __post_init__(self):
        r = float(self.radius)
        if not (np.isfinite(r) and r >= 0):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "radius", r)

    dim = 2

    def second_moment(self):
        return self.radius**2

    def draw(self, rng, ids, step=0, tag=TAG_INITIAL):
        angle = 2.0 * np.pi * rng.uniform(ids, step, 1, tag=tag)[:, 0, 0]
        return self.radius * np.stack([np.cos(angle), np.sin(angle)], axis=1)


@dataclass(frozen=True)
class ConvolvedLaw:
    """Law of ``X + Z`` with ``X ~ base`` and ``Z ~ noise`` independent."""

    base: object
    noise: GaussianLaw

    def __post_init__(self):
        if self.base.dim != self.noise.dim:
            raise DimensionMismatch("base and noise dimensions differ")

    @property
    def dim(self):
        return self.base.dim

    def second_moment(self):
        mb = _mean_of(self.base)
        return self.base.second_moment() + self.noise.second_moment() + 2.0 * float(mb @ self.noise.mean)

    def draw(self, rng, ids, step=0, tag=TAG_INITIAL):
        x = self.base.draw(rng, ids, step=step, tag=tag)
        return x + self.noise.draw(rng, ids, step=step, tag=tag + 64)


def _mean_of(law):
    if isinstance(law, EmpiricalMeasure):
        return law.mean()
    if isinstance(law, GaussianLaw):
        return law.mean
    if isinstance(law, DiracLaw):
        return np.asarray(law.point)
    if isinstance(law, ConvolvedLaw):
        return _mean_of(law.base) + law.noise.mean
    # all remaining analytic laws in this package are centred
    return np.zeros(law.dim)


def as_empirical(law, n_samples, seed, step=0):
    """Materialize any law descriptor as a uniform-weight sample cloud."""
    if isinstance(law, EmpiricalMeasure):
        return law
    x = law.draw(CounterRNG(seed), np.arange(n_samples), step=step, tag=TAG_AUX)
    return EmpiricalMeasure(x)


@dataclass(frozen=True, eq=False)
class PeacockCurve:
    """Time-indexed family of law descriptors on a strictly increasing grid."""

    times: np.ndarray
    laws: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        laws = tuple(self.laws)
        if len(laws) != t.shape[0] or t.shape[0] < 1:
            raise ValueError("need one law per time")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if t[0] < 0 or t[-1] > 1:
            raise ValueError("times must lie in [0, 1]")
        if len({law.dim for law in laws}) != 1:
            raise DimensionMismatch("all laws of a curve must share a dimension")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "laws", laws)

    @classmethod
    def from_function(cls, times, law_at):
        times = np.asarray(times, dtype=float)
        return cls(times, tuple(law_at(float(t)) for t in times))

    @property
    def dim(self):
        return self.laws[0].dim

    def __len__(self):
        return len(self.laws)

    def law_at(self, t, atol=1e-12):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol:
            raise OutOfRange(f"time {t} is not on the curve grid")
        return self.laws[i]


def brownian_curve(times, dim=2, initial_variance=0.0):
    """Marginals ``N(0, (v0 + t) id)`` of Brownian motion."""
    return PeacockCurve.from_function(times, lambda t: GaussianLaw.isotropic(dim, initial_variance + t))


def circle_curve(times):
    """Uniform laws on circles of radius ``sqrt(t)`` (tangential motion from 0)."""
    return PeacockCurve.from_function(times, lambda t: CircleLaw(math.sqrt(t)))


# ---------------------------------------------------------------------------
# Gaussian regularization


def _convolve_empirical(m, g, rng, step):
    z = g.draw(rng, np.arange(m.n), step=step, tag=TAG_NOISE)
    return EmpiricalMeasure(m.samples + z, m.weights)


def convolve_gaussian(m, g, seed):
    """Add one independent draw of ``g`` to every support point of ``m``.

    Weights are kept.  Deterministic given ``seed``; with a zero covariance
    and zero mean the measure is returned unchanged.
    """
    if m.dim != g.dim:
        raise DimensionMismatch(f"measure is {m.dim}-dimensional, Gaussian is {g.dim}-dimensional")
    return _convolve_empirical(m, g, CounterRNG(seed), 0)


def regularize_peacock(p, epsilon, delta, seed=0):
    """Convolve the law at time ``t`` with ``N(0, epsilon * (t + delta) * id)``.

    Gaussian laws are updated in closed form, empirical measures through
    :func:`convolve_gaussian` (one noise draw per point, an independent
    stream per time index), and any other descriptor is wrapped in a
    :class:`ConvolvedLaw`.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    if delta == 0:
        warnings.warn("delta = 0: the regularization vanishes at t = 0", stacklevel=2)
    rng = CounterRNG(seed)
    laws = []
    for k, (t, law) in enumerate(zip(p.times, p.laws)):
        g = GaussianLaw.isotropic(p.dim, epsilon * (t + delta))
        if isinstance(law, GaussianLaw):
            laws.append(law.convolve(g))
        elif isinstance(law, EmpiricalMeasure):
            laws.append(_convolve_empirical(law, g, rng, k))
        else:
            laws.append(ConvolvedLaw(law, g))
    return PeacockCurve(p.times, tuple(laws))


# ---------------------------------------------------------------------------
# Wasserstein-2


def w2_gaussian(a, b):
    r"""Wasserstein-2 distance between two Gaussian laws.

    .. math::

        W_2^2 = |m_a - m_b|^2 + \mathrm{Tr}\left(A + B - 2 (A^{1/2} B A^{1/2})^{1/2}\right)

    Round-off can make the trace term slightly negative; it is clipped at 0.
    """
    if a.dim != b.dim:
        raise DimensionMismatch("laws have different dimensions")
    if np.array_equal(a.mean, b.mean) and np.array_equal(a.covariance, b.covariance):
        return 0.0
    sa = psd_sqrt(a.covariance)
    cross = psd_sqrt(sa @ b.covariance @ sa, check=False)
    tr = np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.trace(cross)
    dm = a.mean - b.mean
    return math.sqrt(max(float(tr), 0.0) + float(dm @ dm))


def _sorted_1d(x, w):
    order = np.argsort(x, kind="stable")
    return x[order], w[order]


def _w2sq_1d(xa, wa, xb, wb):
    # Squared W2 between two weighted 1-d clouds via the quantile coupling.
    if xa.shape == xb.shape and np.all(wa == wa[0]) and np.all(wb == wb[0]):
        d = np.sort(xa) - np.sort(xb)
        return float(np.mean(d * d))
    xa, wa = _sorted_1d(xa, wa)
    xb, wb = _sorted_1d(xb, wb)
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    knots = np.union1d(ca, cb)
    lengths = np.diff(np.concatenate([[0.0], knots]))
    mids = knots - 0.5 * lengths
    ia = np.searchsorted(ca, mids).clip(0, xa.size - 1)
    ib = np.searchsorted(cb, mids).clip(0, xb.size - 1)
    d = xa[ia] - xb[ib]
    return float(np.sum(lengths * d * d))


def _w2sq_1d_gaussian(x, w, m, s):
    # Exact squared W2 between a weighted 1-d cloud and N(m, s^2).
    x, w = _sorted_1d(x, w)
    if s == 0:
        return float(np.sum(w * (x - m) ** 2))
    cdf = np.concatenate([[0.0], np.cumsum(w)])
    cdf[-1] = 1.0
    z = special.ndtri(np.clip(cdf, 0.0, 1.0))
    finite = np.isfinite(z)
    zf = np.where(finite, z, 0.0)
    phi = np.where(finite, np.exp(-0.5 * zf * zf) / math.sqrt(2 * math.pi), 0.0)
    zphi = zf * phi
    i1 = phi[:-1] - phi[1:]
    i2 = w - (zphi[1:] - zphi[:-1])
    c = x - m
    return float(max(np.sum(w * c * c - 2.0 * s * c * i1 + s * s * i2), 0.0))


def w2_empirical_1d(a, b):
    """Exact W2 between two one-dimensional empirical measures.

    Equal-size uniform clouds are matched in sorted order; general weights use
    the quantile-function coupling.
    """
    if a.dim != 1 or b.dim != 1:
        raise DimensionMismatch("w2_empirical_1d needs one-dimensional measures")
    return math.sqrt(_w2sq_1d(a.samples[:, 0], a.weights, b.samples[:, 0], b.weights))


def sliced_directions(dim, n_directions, seed):
    """Seeded uniform unit directions, shape ``(n_directions, dim)``."""
    return CounterRNG(seed).unit_directions(np.arange(n_directions), 0, dim)[:, 0, :]


def _w2sq_projected(a, b, u):
    if isinstance(a, GaussianLaw) and isinstance(b, GaussianLaw):
        sa = math.sqrt(max(u @ a.covariance @ u, 0.0))
        sb = math.sqrt(max(u @ b.covariance @ u, 0.0))
        return (u @ a.mean - u @ b.mean) ** 2 + (sa - sb) ** 2
    if isinstance(a, GaussianLaw):
        a, b = b, a
    if isinstance(b, GaussianLaw):
        s = math.sqrt(max(u @ b.covariance @ u, 0.0))
        return _w2sq_1d_gaussian(a.samples @ u, a.weights, float(u @ b.mean), s)
    return _w2sq_1d(a.samples @ u, a.weights, b.samples @ u, b.weights)


def w2_sliced(a, b, n_directions=256, seed=0):
    """Sliced Wasserstein-2: RMS over seeded unit directions of projected W2.

    Either argument may be an :class:`EmpiricalMeasure` or a
    :class:`GaussianLaw`; Gaussian projections are handled exactly rather
    than by sampling.
    """
    if a.dim != b.dim:
        raise DimensionMismatch("measures have different dimensions")
    dirs = sliced_directions(a.dim, n_directions, seed)
    total = 0.0
    for u in dirs:
        total += _w2sq_projected(a, b, u)
    return math.sqrt(total / n_directions)


# ---------------------------------------------------------------------------
# Convex order


@dataclass
class ConvexOrderVerdict:
    """Outcome of :func:`convex_order_test`.

    ``consistent`` is True when no test function separated the measures in
    the wrong direction.  For non-Gaussian inputs this is a necessary
    condition for ``a <= b`` in convex order, not a proof of it.
    """

    consistent: bool
    method: str
    n_tests: int = 0
    evidence: list = field(default_factory=list)

    @property
    def violated(self):
        return not self.consistent

    def __bool__(self):
        return self.consistent


def _gaussian_hinge(m, s, c):
    # E[(m + s Z - c)_+]
    if s == 0:
        return np.maximum(m - c, 0.0)
    z = (m - c) / s
    return (m - c) * special.ndtr(z) + s * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def _pooled_quantiles(parts, levels):
    xs, ws = [], []
    for proj, w in parts:
        xs.append(proj)
        ws.append(w / len(parts))
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    x, w = _sorted_1d(x, w)
    cdf = np.cumsum(w)
    return x[np.searchsorted(cdf, levels).clip(0, x.size - 1)]


def convex_order_test(a, b, n_directions=32, n_anchors=19, seed=0, n_samples=100_000, n_se=3.0):
    """Check whether ``a`` is dominated by ``b`` in convex order.

    Gaussian pairs are decided exactly: equal means and ``cov_b - cov_a``
    positive semidefinite.  Otherwise every direction ``u`` in a seeded set
    (together with ``-u``) and every anchor ``c`` at the pooled projected
    quantiles 5%, ..., 95% gives the test function ``x -> (u.x - c)_+``.  The
    verdict is "violated" as soon as ``E_b - E_a`` is below ``-n_se``
    Monte-Carlo standard errors for some test function.  Analytic laws other
    than Gaussians are sampled with ``n_samples`` points.
    """
    if a.dim != b.dim:
        raise DimensionMismatch("measures have different dimensions")
    if isinstance(a, GaussianLaw) and isinstance(b, GaussianLaw):
        scale = max(hs_norm(a.covariance), hs_norm(b.covariance), 1.0)
        dm = float(np.max(np.abs(a.mean - b.mean))) if a.dim else 0.0
        w, _ = jacobi_eigh(b.covariance - a.covariance)
        ok_mean = dm <= 1e-12 * scale
        ok_cov = w[0] >= -1e-10 * scale
        evidence = []
        if not ok_mean:
            evidence.append({"test": "mean", "max_abs_difference": dm})
        if not ok_cov:
            evidence.append({"test": "covariance", "min_eigenvalue": float(w[0])})
        return ConvexOrderVerdict(bool(ok_mean and ok_cov), "gaussian-exact", 2, evidence)

    a = a if isinstance(a, (EmpiricalMeasure, GaussianLaw)) else as_empirical(a, n_samples, seed, step=1)
    b = b if isinstance(b, (EmpiricalMeasure, GaussianLaw)) else as_empirical(b, n_samples, seed, step=2)
    dirs = sliced_directions(a.dim, n_directions, seed)
    dirs = np.concatenate([dirs, -dirs])
    levels = np.linspace(0.05, 0.95, n_anchors)
    qgrid = special.ndtri((np.arange(1024) + 0.5) / 1024)

    def side(law, u):
        if isinstance(law, GaussianLaw):
            m = float(u @ law.mean)
            s = math.sqrt(max(u @ law.covariance @ u, 0.0))
            return ("g", m, s, (m + s * qgrid, np.full(qgrid.size, 1.0 / qgrid.size)))
        proj, w = _sorted_1d(law.samples @ u, law.weights)
        return ("e", proj, w, (proj, w))

    def moments(sd, c):
        if sd[0] == "g":
            return _gaussian_hinge(sd[1], sd[2], c), np.zeros_like(c), np.inf
        proj, w = sd[1], sd[2]
        # tail sums over sorted projections: sum_{x > c} w, w x, w x^2
        tails = [np.concatenate([np.cumsum((w * proj**k)[::-1])[::-1], [0.0]]) for k in range(3)]
        i = np.searchsorted(proj, c, side="right")
        w0, s1, s2 = (tl[i] for tl in tails)
        mean = np.maximum(s1 - c * w0, 0.0)
        second = np.maximum(s2 - 2.0 * c * s1 + c * c * w0, 0.0)
        var = np.maximum(second - mean * mean, 0.0)
        return mean, var, 1.0 / float(np.sum(w * w))

    evidence = []
    n_tests = 0
    for j, u in enumerate(dirs):
        sa, sb = side(a, u), side(b, u)
        anchors = _pooled_quantiles([sa[3], sb[3]], levels)
        ea, va, na = moments(sa, anchors)
        eb, vb, nb = moments(sb, anchors)
        se = np.sqrt(va / na + vb / nb)
        diff = eb - ea
        n_tests += anchors.size
        bad = diff < -n_se * se - 1e-12 * (1.0 + np.abs(ea))
        for i in np.flatnonzero(bad):
            evidence.append({"direction": j, "anchor": float(anchors[i]), "difference": float(diff[i]),
                             "se": float(se[i])})
    return ConvexOrderVerdict(not evidence, "projection-hinge", n_tests, evidence)


# ---------------------------------------------------------------------------
# Marginal curve regularity


@dataclass
class HolderRow:
    t0: float
    t1: float
    w2: float
    ratio: float


@dataclass
class HolderTable:
    rows: list

    @property
    def max_ratio(self):
        return max(r.ratio for r in self.rows)


def holder_modulus(p, n_directions=64, seed=0, n_samples=20_000):
    """W2 between consecutive marginals and its ratio to ``sqrt(dt)``.

    Gaussian pairs use the closed form; everything else the sliced distance
    (analytic non-Gaussian laws are sampled first).
    """
    if len(p) < 2:
        raise ValueError("need at least two grid times")
    rows = []
    for k in range(len(p) - 1):
        a, b = p.laws[k], p.laws[k + 1]
        if isinstance(a, GaussianLaw) and isinstance(b, GaussianLaw):
            w = w2_gaussian(a, b)
        else:
            if not isinstance(a, (EmpiricalMeasure, GaussianLaw)):
                a = as_empirical(a, n_samples, seed, step=k)
            if not isinstance(b, (EmpiricalMeasure, GaussianLaw)):
                b = as_empirical(b, n_samples, seed, step=k + 1)
            w = w2_sliced(a, b, n_directions, seed)
        t0, t1 = float(p.times[k]), float(p.times[k + 1])
        rows.append(HolderRow(t0, t1, w, w / math.sqrt(t1 - t0)))
    return HolderTable(rows)
