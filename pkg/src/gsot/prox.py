"""Closed-form proximal maps for the non-smooth cost terms, plus an oracle.

All maps solve ``argmin_z xi * g(z) + 0.5 * ||v - z||_F^2``; the ADMM step
``argmin (lam*alpha/m) g + (rho/2) ||v - z||^2`` is this with
``xi = lam*alpha/(rho*m)``.
"""

import math

import numpy as np
from scipy import optimize

from gsot.errors import OracleInconclusive
from gsot.groupcost import CostKind
from gsot.linalg import as_matrix, group_norm_12, svd


def prox_equal_rows(v):
    """Euclidean projection onto matrices whose rows are all equal."""
    v = as_matrix(v, "v")
    return np.repeat(v.mean(axis=0, keepdims=True), v.shape[0], axis=0)


def prox_group_columns(v, xi):
    """Block soft-thresholding of each column by ``xi``."""
    v = as_matrix(v, "v")
    if xi < 0:
        raise ValueError("xi must be non-negative")
    norms = np.sqrt(np.sum(v * v, axis=0))
    scale = np.zeros_like(norms)
    live = norms > xi
    scale[live] = (norms[live] - xi) / norms[live]
    return v * scale


def prox_singular_values(v, xi):
    """Singular value soft-thresholding by ``xi``."""
    v = as_matrix(v, "v")
    if xi < 0:
        raise ValueError("xi must be non-negative")
    res = svd(v)
    shrunk = np.maximum(res.singular_values - xi, 0.0)
    return (res.u * shrunk) @ res.vt


def prox(kind, v, xi):
    kind = CostKind(kind)
    if kind is CostKind.INDICATOR:
        return prox_equal_rows(v)
    if kind is CostKind.GROUP:
        return prox_group_columns(v, xi)
    return prox_singular_values(v, xi)


def prox_objective(kind, v, z, xi):
    """``xi * g(z) + 0.5 * ||v - z||^2`` (``inf`` off the indicator's domain).

    The indicator domain is tested with tolerance 1e-9 here: this is a
    verification helper, not the cost definition.
    """
    kind = CostKind(kind)
    v = as_matrix(v, "v")
    z = as_matrix(z, "z")
    quad = 0.5 * float(np.sum((v - z) ** 2))
    if kind is CostKind.INDICATOR:
        spread = np.max(np.abs(z - z.mean(axis=0, keepdims=True)))
        return quad if spread <= 1e-9 * max(1.0, np.max(np.abs(z))) else math.inf
    if kind is CostKind.GROUP:
        return xi * group_norm_12(z) + quad
    return xi * float(np.sum(np.linalg.svd(z, compute_uv=False))) + quad


# --- oracle ------------------------------------------------------------------

def _subgradient(kind, v, xi, iters):
    """Subgradient descent with steps 1/(t+1) on the 1-strongly convex objective."""
    z = v.copy()
    for t in range(iters):
        if kind is CostKind.GROUP:
            n = np.sqrt(np.sum(z * z, axis=0))
            sub = np.divide(z, n, out=np.zeros_like(z), where=n > 0)
        else:
            u, s, vt = np.linalg.svd(z, full_matrices=False)
            live = s > 1e-14 * max(s[0], 1e-300)
            sub = (u[:, live]) @ vt[live]
        z = z - (z - v + xi * sub) / (t + 1.0)
    return z


def _factored_objective(kind, v, xi):
    """Smooth reformulation via a product parametrization.

    group:   ||z_j|| = min_{z_j = s_j u_j} (s_j^2 + ||u_j||^2) / 2
    nuclear: ||Z||_* = min_{Z = L R^T} (||L||^2 + ||R||^2) / 2
    """
    m, d = v.shape
    if kind is CostKind.GROUP:
        def unpack(p):
            return p[:d], p[d:].reshape(m, d)

        def fun(p):
            s, u = unpack(p)
            z = u * s
            r = z - v
            f = 0.5 * xi * (s @ s + np.sum(u * u)) + 0.5 * np.sum(r * r)
            gs = xi * s + np.sum(r * u, axis=0)
            gu = xi * u + r * s
            return f, np.concatenate([gs, gu.ravel()])

        def build(p):
            s, u = unpack(p)
            return u * s

        return fun, build, d + m * d

    k = min(m, d)

    def unpack_factors(p):
        return p[:m * k].reshape(m, k), p[m * k:].reshape(d, k)

    def fun(p):
        L, R = unpack_factors(p)
        r = L @ R.T - v
        f = 0.5 * xi * (np.sum(L * L) + np.sum(R * R)) + 0.5 * np.sum(r * r)
        gL = xi * L + r @ R
        gR = xi * R + r.T @ L
        return f, np.concatenate([gL.ravel(), gR.ravel()])

    def build(p):
        L, R = unpack_factors(p)
        return L @ R.T

    return fun, build, (m + d) * k


def _warm_start(kind, z, rng):
    m, d = z.shape
    if kind is CostKind.GROUP:
        n = np.sqrt(np.sum(z * z, axis=0))
        s = np.sqrt(n) + 1e-3
        u = z / s
        p = np.concatenate([s, u.ravel()])
    else:
        u, sv, vt = np.linalg.svd(z, full_matrices=False)
        root = np.sqrt(sv)
        p = np.concatenate([(u * root).ravel(), (vt.T * root).ravel()])
    return p + 1e-3 * rng.standard_normal(p.size)


def prox_oracle(kind, v, xi, subgradient_iters=2000, seed=0):
    """Brute-force near-minimizer of ``xi * g(z) + 0.5 ||v - z||^2``.

    ``indicator`` is solved as least squares over row vectors ``r`` with
    ``z = 1 r^T``. ``group`` and ``nuclear`` run subgradient descent with
    diminishing steps, then polish with L-BFGS on a smooth factored
    reformulation that never touches a shrinkage formula. Intended for
    ``m * d <= 64``.

    Raises
    ------
    OracleInconclusive
        If the polish stage does not reach a stationary point.
    """
    kind = CostKind(kind)
    v = as_matrix(v, "v")
    m, d = v.shape
    if m * d > 64:
        raise ValueError(f"prox_oracle is limited to m*d <= 64, got {m * d}")
    if xi < 0:
        raise ValueError("xi must be non-negative")
    if kind is CostKind.INDICATOR:
        design = np.ones((m, 1))
        r, *_ = np.linalg.lstsq(design, v, rcond=None)
        return design @ r
    if xi == 0.0:
        return v.copy()

    z0 = _subgradient(kind, v, xi, subgradient_iters)
    fun, build, _ = _factored_objective(kind, v, xi)
    rng = np.random.default_rng(seed)
    best = z0
    best_val = prox_objective(kind, v, z0, xi)
    certified = False
    for _ in range(3):
        res = optimize.minimize(fun, _warm_start(kind, best, rng), jac=True,
                                method="L-BFGS-B",
                                options={"maxiter": 20000, "gtol": 1e-13,
                                         "ftol": 1e-16, "maxcor": 30})
        z = build(res.x)
        val = prox_objective(kind, v, z, xi)
        gnorm = float(np.max(np.abs(res.jac)))
        if val <= best_val:
            best, best_val = z, val
        if gnorm < 1e-7:
            certified = True
            break
    if not certified:
        raise OracleInconclusive(f"prox oracle ({kind.value}) did not reach stationarity")
    return best
