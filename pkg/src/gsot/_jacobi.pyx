"""Compiled one-sided Jacobi rotation sweeps.

Mirrors :func:`gsot._jacobi_py.orthogonalize_rows` rotation for rotation;
both walk the pairs in the same cyclic order so the two backends agree to
rounding.
"""

from libc.math cimport fabs, sqrt


def orthogonalize_rows(double[:, ::1] g, double[:, ::1] q, double tol,
                       int max_sweeps, double floor=0.0):
    """Rotate rows of ``g`` (and identically ``q``) until mutually orthogonal.

    Rows with squared norm at or below ``floor`` are treated as numerically
    zero and never rotated. Returns the number of sweeps used, or -1 if
    ``max_sweeps`` ran out.
    """
    cdef Py_ssize_t k = g.shape[0]
    cdef Py_ssize_t n = g.shape[1]
    cdef Py_ssize_t nq = q.shape[1]
    cdef Py_ssize_t p, r, i
    cdef double alpha, beta, gamma, zeta, t, c, s, a, b
    cdef int sweep, rotated

    for sweep in range(max_sweeps):
        rotated = 0
        for p in range(k - 1):
            for r in range(p + 1, k):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(n):
                    a = g[p, i]
                    b = g[r, i]
                    alpha += a * a
                    beta += b * b
                    gamma += a * b
                if alpha <= floor or beta <= floor:
                    continue
                if gamma == 0.0 or fabs(gamma) <= tol * sqrt(alpha) * sqrt(beta):
                    continue
                rotated = 1
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for i in range(n):
                    a = g[p, i]
                    b = g[r, i]
                    g[p, i] = c * a - s * b
                    g[r, i] = s * a + c * b
                for i in range(nq):
                    a = q[p, i]
                    b = q[r, i]
                    q[p, i] = c * a - s * b
                    q[r, i] = s * a + c * b
        if not rotated:
            return sweep + 1
    return -1
