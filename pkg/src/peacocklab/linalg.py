"""Small dense symmetric linear algebra.

Matrices are plain numpy arrays.  All routines accept a single ``(d, d)``
matrix or a stack ``(..., d, d)`` and work on the whole stack at once, which
is how the simulation code calls them (one diffusion matrix per path).
"""
import numpy as np

from .errors import DimensionMismatch, NonSymmetric, NotPSD

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-10


def as_square(A):
    """Validate and return ``A`` as a float array of shape ``(..., d, d)``."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2] or A.shape[-1] < 1:
        raise DimensionMismatch(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def hs_norm(A):
    """Hilbert-Schmidt (Frobenius) norm, ``sqrt(sum A_ij**2)``.

    Batched over leading axes.
    """
    A = as_square(A)
    return np.sqrt(np.sum(A * A, axis=(-2, -1)))


def _check_symmetric(A):
    scale = np.maximum(hs_norm(A), np.finfo(float).tiny)
    asym = hs_norm(A - np.swapaxes(A, -1, -2))
    if np.any(asym > SYMMETRY_RTOL * scale):
        raise NonSymmetric(f"matrix is not symmetric (relative asymmetry {np.max(asym / scale):.3e})")


def jacobi_eigh(A, tol=1e-15, max_sweeps=64):
    """Eigen-decomposition of symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    A : array_like, shape (..., d, d)
        Symmetric matrices.  Only the symmetric part is used.
    tol : float
        Sweeps stop once the off-diagonal Frobenius mass of every matrix is
        below ``tol`` times its norm.
    max_sweeps : int
        Hard cap on the number of cyclic sweeps.

    Returns
    -------
    w : ndarray, shape (..., d)
        Eigenvalues in ascending order.
    V : ndarray, shape (..., d, d)
        Orthonormal eigenvectors in the columns, ``A = V diag(w) V^T``.

    Notes
    -----
    The pivot order is the fixed row-cyclic order ``(0,1), (0,2), ...,
    (d-2,d-1)``, so results are reproducible bit for bit on a given platform.
    Rotation angles follow the stable formulation of Rutishauser.
    """
    A = as_square(A)
    batch = A.shape[:-2]
    d = A.shape[-1]
    a = 0.5 * (A + np.swapaxes(A, -1, -2)).reshape(-1, d, d).copy()
    v = np.broadcast_to(np.eye(d), a.shape).copy()
    scale = np.sqrt(np.sum(a * a, axis=(-2, -1)))
    idx = np.arange(a.shape[0])
    offmask = ~np.eye(d, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum((a * a)[:, offmask], axis=-1))
        if np.all(off <= tol * scale):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[:, p, q]
                active = np.abs(apq) > np.finfo(float).tiny * 1e16 * np.maximum(scale, 1e-300)
                if not np.any(active):
                    continue
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    theta = (a[:, q, q] - a[:, p, p]) / (2.0 * apq)
                    big = np.abs(theta) > 1e150
                    t = np.where(big, 0.5 / np.where(big, theta, 1.0),
                                 np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0)))
                t = np.where(theta == 0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) Givens rotation.
                ap = a[:, :, p].copy()
                aq = a[:, :, q].copy()
                a[:, :, p] = c[:, None] * ap - s[:, None] * aq
                a[:, :, q] = s[:, None] * ap + c[:, None] * aq
                ap = a[:, p, :].copy()
                aq = a[:, q, :].copy()
                a[:, p, :] = c[:, None] * ap - s[:, None] * aq
                a[:, q, :] = s[:, None] * ap + c[:, None] * aq
                a[idx, p, q] = np.where(active, 0.0, a[:, p, q])
                a[idx, q, p] = a[:, p, q]
                vp = v[:, :, p].copy()
                vq = v[:, :, q].copy()
                v[:, :, p] = c[:, None] * vp - s[:, None] * vq
                v[:, :, q] = s[:, None] * vp + c[:, None] * vq
    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[:, None, :], axis=-1)
    return w.reshape(batch + (d,)), v.reshape(batch + (d, d))


def _psd_eigh(A, check):
    A = as_square(A)
    if check:
        _check_symmetric(A)
    w, V = jacobi_eigh(A)
    lmax = np.max(np.abs(w), axis=-1, keepdims=True)
    if check and np.any(w < -PSD_RTOL * lmax):
        raise NotPSD(f"matrix has a negative eigenvalue (min {np.min(w):.3e})")
    return w, V


def psd_sqrt(A, check=True):
    """Unique positive semidefinite square root.

    Eigenvalues in ``[-1e-10 * lambda_max, 0)`` are clipped to zero before
    rooting; anything more negative raises :class:`NotPSD`.  With
    ``check=False`` symmetry and sign checks are skipped and all negative
    eigenvalues are clipped (used on matrices that are PSD by construction).
    """
    w, V = _psd_eigh(A, check)
    root = np.sqrt(np.clip(w, 0.0, None))
    B = (V * root[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def eigen_bounds(A):
    """Smallest and largest eigenvalue of a PSD matrix (or stack)."""
    w, _ = _psd_eigh(A, True)
    return w[..., 0], w[..., -1]


def clip_psd(A):
    """Project a symmetric matrix onto the PSD cone (negative eigenvalues -> 0)."""
    w, V = jacobi_eigh(A)
    B = (V * np.clip(w, 0.0, None)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def perp(x):
    """Rotate planar vectors by a quarter turn: ``(x1, x2) -> (-x2, x1)``.

    Accepts shape ``(2,)`` or ``(..., 2)``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (2,):
        raise DimensionMismatch(f"perp needs planar vectors, got shape {x.shape}")
    out = np.empty_like(x)
    out[..., 0] = -x[..., 1]
    out[..., 1] = x[..., 0]
    return out
