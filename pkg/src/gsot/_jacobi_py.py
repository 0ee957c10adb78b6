"""Pure-Python fallback for the Jacobi rotation kernel (see ``_jacobi.pyx``)."""

import math


def orthogonalize_rows(g, q, tol, max_sweeps, floor=0.0):
    """Rotate rows of ``g`` (and identically ``q``) until mutually orthogonal.

    Works in place. Rows with squared norm at or below ``floor`` count as
    numerically zero and are skipped. Returns the number of sweeps used, or -1 if
    ``max_sweeps`` ran out before every pair passed the tolerance test.
    """
    k = g.shape[0]
    for sweep in range(max_sweeps):
        rotated = False
        for p in range(k - 1):
            for r in range(p + 1, k):
                gp = g[p]
                gr = g[r]
                alpha = float(gp @ gp)
                beta = float(gr @ gr)
                gamma = float(gp @ gr)
                if alpha <= floor or beta <= floor:
                    continue
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha) * math.sqrt(beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + math.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_p = c * gp - s * gr
                g[r] = s * gp + c * gr
                g[p] = new_p
                qp = q[p].copy()
                q[p] = c * qp - s * q[r]
                q[r] = s * qp + c * q[r]
        if not rotated:
            return sweep + 1
    return -1
