"""Independent reference computations used to freeze expected values.

Nothing here imports the package under test.  Each oracle reaches the same
quantity by a different route: brute force over permutations, a linear
assignment solver, LAPACK eigendecompositions, scipy's matrix square root,
or plain closed forms written out by hand.
"""
import itertools
import math

import numpy as np
from scipy import linalg as sla
from scipy.optimize import linear_sum_assignment

# Philox4x32-10 known-answer vectors (Random123 distribution, kat_vectors).
# (counter words, key words, expected output words)
PHILOX_KAT = (
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
)


def w2_discrete_bruteforce(x, y):
    """W2 between two uniform clouds of equal size by trying every matching (n <= 8)."""
    x = np.atleast_2d(np.asarray(x, dtype=float).T).T
    y = np.atleast_2d(np.asarray(y, dtype=float).T).T
    n = x.shape[0]
    if n > 8:
        raise ValueError("brute force is limited to 8 points")
    cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    best = min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
    return math.sqrt(best / n)


def w2_discrete_assignment(x, y):
    """W2 between two uniform clouds of equal size by optimal assignment."""
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    r, c = linear_sum_assignment(cost)
    return math.sqrt(cost[r, c].sum() / x.shape[0])


def gaussian_quantile_cloud(sd, n):
    """``n`` equally weighted points at the mid-quantiles of ``N(0, sd^2)``."""
    from scipy.stats import norm

    return sd * norm.ppf((np.arange(n) + 0.5) / n)


def bures_w2(m1, c1, m2, c2):
    """Gaussian W2 via scipy's general matrix square root."""
    s1 = sla.sqrtm(c1)
    cross = sla.sqrtm(s1 @ c2 @ s1)
    tr = np.trace(c1) + np.trace(c2) - 2.0 * np.real(np.trace(cross))
    dm = np.asarray(m1) - np.asarray(m2)
    return math.sqrt(max(tr, 0.0) + float(dm @ dm))


def lapack_eigh(a):
    """Ascending eigenvalues and eigenvectors from numpy (LAPACK)."""
    return np.linalg.eigh(a)


def lapack_psd_sqrt(a):
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def random_psd(rng, d, lo=0.1, hi=10.0):
    """PSD matrix with eigenvalues uniform in ``[lo, hi]`` (numpy Generator)."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(lo, hi, d)) @ q.T


def nadaraya_watson_two_point(x, y1, y2, a, b, bandwidth):
    """Kernel-weighted average of two matrices written out term by term."""
    w1 = math.exp(-float(np.sum((np.asarray(x) - y1) ** 2)) / (2.0 * bandwidth))
    w2 = math.exp(-float(np.sum((np.asarray(x) - y2) ** 2)) / (2.0 * bandwidth))
    return (w1 * np.asarray(a) + w2 * np.asarray(b)) / (w1 + w2)


def poisson_pmf(n, delta):
    return delta**n * math.exp(-delta) / math.factorial(n)


def even_count_probability(delta, terms=60):
    """P[Poisson(delta) is even] summed term by term."""
    return sum(poisson_pmf(2 * k, delta) for k in range(terms))


def window_occupation(t, parity, depth=1100):
    """Time spent before ``t`` in the windows ``[2^-(n+1), 2^-n]`` with ``n % 2 == parity``.

    Summed window by window in exact rational arithmetic.
    """
    from fractions import Fraction

    t = Fraction(t)
    total = Fraction(0)
    for n in range(depth):
        lo, hi = Fraction(1, 2 ** (n + 1)), Fraction(1, 2**n)
        if n % 2 == parity:
            total += max(Fraction(0), min(t, hi) - lo)
    return float(total)
