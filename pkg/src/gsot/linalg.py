"""Dense matrix helpers: validation, norms and a one-sided Jacobi SVD.

Matrices are plain ``numpy`` float64 arrays; row ``i`` holds sample ``i``.
"""

from typing import NamedTuple

import numpy as np

from gsot._kernels import BACKEND, orthogonalize_rows
from gsot.errors import NumericalFailure

MAX_SWEEPS = 100
ROTATION_TOL = 1e-12

__all__ = [
    "BACKEND",
    "SvdResult",
    "as_matrix",
    "frobenius_norm",
    "group_norm_12",
    "max_abs",
    "nuclear_norm",
    "numerical_rank",
    "svd",
]


class SvdResult(NamedTuple):
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray

    def reconstruct(self):
        return (self.u * self.singular_values) @ self.vt


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array with at least one row and column."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def _scaled(a):
    # divide by the largest entry so squares neither underflow nor overflow
    scale = float(np.max(np.abs(a)))
    return (a / scale if scale > 0.0 else a), scale


def frobenius_norm(a):
    b, scale = _scaled(as_matrix(a))
    return scale * float(np.sqrt(np.sum(b * b)))


def group_norm_12(a):
    """Sum of the Euclidean norms of the columns of ``a``."""
    b, scale = _scaled(as_matrix(a))
    return scale * float(np.sum(np.sqrt(np.sum(b * b, axis=0))))


def max_abs(a):
    return float(np.max(np.abs(as_matrix(a))))


def nuclear_norm(a):
    return float(np.sum(svd(a).singular_values))


def numerical_rank(a, rtol=1e-9):
    """Count singular values above ``rtol`` times the largest one."""
    s = svd(a).singular_values
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def _complete_orthonormal(u, keep):
    """Replace columns of ``u`` not flagged in ``keep`` by an orthonormal completion."""
    m = u.shape[0]
    basis = [u[:, j] for j in range(u.shape[1]) if keep[j]]
    for j in range(u.shape[1]):
        if keep[j]:
            continue
        best, best_norm = None, -1.0
        for i in range(m):
            v = np.zeros(m)
            v[i] = 1.0
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > best_norm:
                best, best_norm = v, nv
        col = best / best_norm
        u[:, j] = col
        basis.append(col)
    return u


def svd(a):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Parameters
    ----------
    a : array_like, shape (m, d)

    Returns
    -------
    SvdResult
        ``u`` is m x k with orthonormal columns, ``singular_values`` is
        non-increasing of length k = min(m, d), ``vt`` is k x d with
        orthonormal rows.

    Raises
    ------
    NumericalFailure
        If the rotations have not converged after ``MAX_SWEEPS`` sweeps.
    """
    a, scale = _scaled(as_matrix(a))
    m, d = a.shape
    transposed = m < d
    # rows of g are the vectors to orthogonalize: the columns of a (or of a.T)
    g = np.ascontiguousarray(a if transposed else a.T, dtype=np.float64).copy()
    k = g.shape[0]
    q = np.eye(k)
    eps = np.finfo(np.float64).eps
    # rows at roundoff level relative to ||a||_F are numerically zero
    zero_level = max(m, d) * eps * float(np.sqrt(np.sum(g * g)))
    floor = zero_level ** 2
    sweeps = orthogonalize_rows(g, q, ROTATION_TOL, MAX_SWEEPS, floor)
    if sweeps < 0:
        raise NumericalFailure(f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps")

    sigma = np.sqrt(np.sum(g * g, axis=1))
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    g = g[order]
    q = q[order]

    keep = sigma > max(zero_level, 1e-300)
    vecs = np.zeros_like(g)
    vecs[keep] = g[keep] / sigma[keep, None]
    # vecs rows are the singular vectors of the side that was orthogonalized
    vecs = _complete_orthonormal(vecs.T.copy(), keep)
    sigma = np.where(keep, sigma, 0.0) if not np.all(keep) else sigma
    if transposed:
        u, vt = q.T.copy(), vecs.T.copy()
    else:
        u, vt = vecs, q.copy()
    return SvdResult(u, sigma * scale, vt)
