"""Brute-force checks of the group optimal transport theory on tiny instances.

* :func:`grid_ctransform` maximizes the c_m-transform objective by exhaustive
  grid search over perturbation matrices, followed by zoomed re-gridding
  around the incumbent.
* :func:`weak_duality_check` compares any label-preserving transport map
  against that maximum.
* :func:`coupling_cost_bruteforce` computes the group transport cost between
  two small discrete distributions for m = 2.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

from gsot.errors import OracleInconclusive
from gsot.groupcost import CostKind, eval_cost
from gsot.linalg import as_matrix
from gsot.rng import make_rng


@dataclass(frozen=True)
class TinyInstance:
    """Search domain: each perturbation entry ranges over ``[-half_range, half_range]``.

    ``resolution`` points per axis (odd, >= 3) on the base grid; the total
    number of grid combinations may not exceed ``budget``. Zoom levels use
    the coarser ``refine_resolution``.
    """

    half_range: float
    resolution: int = 5
    refine_resolution: int = 5
    refine_levels: int = 60
    refine_tol: float = 1e-10
    budget: int = 10**6

    def __post_init__(self):
        for r in (self.resolution, self.refine_resolution):
            if r < 3 or r % 2 == 0:
                raise ValueError("resolutions must be odd and >= 3")
        if not self.half_range > 0:
            raise ValueError("half_range must be positive")

    @classmethod
    def for_size(cls, dims, half_range, budget=10**6, max_resolution=31, **kw):
        """Finest odd resolution whose full grid over ``dims`` axes fits ``budget``."""
        res = 3
        while res + 2 <= max_resolution and (res + 2) ** dims <= budget:
            res += 2
        return cls(half_range, res, budget=budget, **kw)


@dataclass
class GridResult:
    value: float
    delta: np.ndarray
    base_value: float
    slack: float
    levels: int


def objective(model, group, spec, delta):
    """``mean_i l(x_i + delta_i) - (lam/m) c_m(delta)``."""
    x = as_matrix(group.x)
    m = x.shape[0]
    cost = eval_cost(spec, delta)
    if math.isinf(cost):
        return -math.inf
    losses, _ = model.sample_losses_and_input_grads(x + delta, group.y)
    return float(np.sum(losses)) / m - spec.lam * cost / m


def _axis_points(center, half, res):
    """Per-row candidate grid: (res**d, d) points of a box around ``center``."""
    axes = [np.linspace(c - half, c + half, res) for c in center]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def _row_losses(model, x_row, y_row, pts):
    xs = x_row[None, :] + pts
    losses, _ = model.sample_losses_and_input_grads(xs, np.full(pts.shape[0], y_row))
    return losses


def _combined(model, x, y, spec, centers, half, res):
    """Evaluate the objective on the product grid; return (values, row grids)."""
    m, d = x.shape
    lam = spec.lam
    if spec.kind is CostKind.INDICATOR:
        pts = _axis_points(centers[0], half, res)
        total = np.zeros(pts.shape[0])
        for i in range(m):
            total += _row_losses(model, x[i], y[i], pts)
        quad = (1.0 - spec.alpha) * m * np.sum(pts * pts, axis=1)
        return total / m - lam * quad / m, [pts]

    grids = [_axis_points(centers[i], half, res) for i in range(m)]
    p = grids[0].shape[0]
    loss_sum = np.zeros((p,) * m)
    for i in range(m):
        shape = [1] * m
        shape[i] = p
        loss_sum = loss_sum + _row_losses(model, x[i], y[i], grids[i]).reshape(shape)
    loss_sum = loss_sum.ravel()

    idx = np.indices((p,) * m).reshape(m, -1)
    deltas = np.stack([grids[i][idx[i]] for i in range(m)], axis=1)  # (N, m, d)
    frob = np.sum(deltas * deltas, axis=(1, 2))
    if spec.kind is CostKind.GROUP:
        g = np.sum(np.sqrt(np.sum(deltas * deltas, axis=1)), axis=1)
    else:
        gram = np.einsum("nij,nik->njk", deltas, deltas) if d <= m else \
            np.einsum("nji,nki->njk", deltas, deltas)
        g = np.sum(np.sqrt(np.maximum(np.linalg.eigvalsh(gram), 0.0)), axis=1)
    cost = spec.alpha * g + (1.0 - spec.alpha) * frob
    return loss_sum / m - lam * cost / m, grids


def _decode(spec, flat_idx, grids, m):
    p = grids[0].shape[0]
    if spec.kind is CostKind.INDICATOR:
        row = grids[0][flat_idx]
        return np.tile(row, (m, 1)), [flat_idx]
    parts = np.unravel_index(flat_idx, (p,) * m)
    return np.stack([grids[i][parts[i]] for i in range(m)]), list(parts)


def _on_box_edge(parts, res, d):
    for q in parts:
        coords = np.unravel_index(int(q), (res,) * d)
        if any(c == 0 or c == res - 1 for c in coords):
            return True
    return False


def _neighbour_slack(model, group, spec, delta, step, value):
    """Largest objective change when one coordinate moves by one grid step."""
    m, d = delta.shape
    worst = 0.0
    rows = [slice(None)] if spec.kind is CostKind.INDICATOR else range(m)
    for r in rows:
        for j in range(d):
            for s in (-step, step):
                nb = delta.copy()
                nb[r, j] += s
                v = objective(model, group, spec, nb)
                if math.isfinite(v):
                    worst = max(worst, abs(v - value))
    return worst


def _factored_polish(model, group, spec, start, rng):
    """Maximize the objective over a smooth product parametrization.

    ``||delta_j|| = min (s_j^2 + ||u_j||^2)/2`` over ``delta_j = s_j u_j`` and
    ``||delta||_* = min (||L||^2 + ||R||^2)/2`` over ``delta = L R^T`` turn the
    non-smooth cost into a smooth one with the same maximum. Gradients are
    finite differences, so no solver or model gradient code is involved.
    """
    x = as_matrix(group.x)
    m, d = x.shape
    lam, alpha = spec.lam, spec.alpha

    def losses(delta):
        out, _ = model.sample_losses_and_input_grads(x + delta, group.y)
        return float(np.sum(out)) / m

    if spec.kind is CostKind.GROUP:
        def unpack(p):
            s, u = p[:d], p[d:].reshape(m, d)
            return s, u, u * s

        def neg(p):
            s, u, delta = unpack(p)
            pen = alpha * 0.5 * (s @ s + np.sum(u * u)) + (1 - alpha) * np.sum(delta ** 2)
            return -(losses(delta) - lam * pen / m)

        n = np.sqrt(np.sum(start ** 2, axis=0))
        sv = np.sqrt(n) + 1e-3
        p0 = np.concatenate([sv, (start / sv).ravel()])
    else:
        k = min(m, d)

        def unpack(p):
            L, R = p[:m * k].reshape(m, k), p[m * k:].reshape(d, k)
            return L, R, L @ R.T

        def neg(p):
            L, R, delta = unpack(p)
            pen = alpha * 0.5 * (np.sum(L * L) + np.sum(R * R)) + (1 - alpha) * np.sum(delta ** 2)
            return -(losses(delta) - lam * pen / m)

        u, sv, vt = np.linalg.svd(start, full_matrices=False)
        root = np.sqrt(sv)
        p0 = np.concatenate([(u * root).ravel(), (vt.T * root).ravel()])

    p0 = p0 + 1e-3 * rng.standard_normal(p0.size)
    res = minimize(neg, p0, jac="3-point", method="L-BFGS-B",
                   options={"maxiter": 5000, "gtol": 1e-10, "ftol": 1e-15})
    delta = unpack(res.x)[2]
    return objective(model, group, spec, delta), delta


def grid_ctransform(model, group, spec, inst, polish=True, seed=0):
    """Maximize the c_m-transform objective over a perturbation grid.

    Labels are held fixed. For the indicator cost the search runs over one
    shared row. After the base grid the box is re-centred on the incumbent
    and narrowed to half a cell (kept at full size while the incumbent sits
    on the box edge) until the spacing drops below ``refine_tol``. For the
    group and nuclear costs coordinate grids can stall on the cost's kinks,
    so with ``polish`` the incumbent is also refined on a smooth factored
    reformulation and the better point is kept.

    Returns
    -------
    GridResult
        ``value``/``delta`` after refinement, ``base_value`` of the base grid
        and ``slack``: the largest objective change between the base-grid
        argmax and its axis neighbours.

    Raises
    ------
    OracleInconclusive
        Grid budget exceeded, or the maximizer sits on the outer boundary.
    """
    x = as_matrix(group.x)
    y = np.asarray(group.y)
    m, d = x.shape
    res = inst.resolution
    free_rows = 1 if spec.kind is CostKind.INDICATOR else m
    n_combos = res ** (d * free_rows)
    if n_combos > inst.budget:
        raise OracleInconclusive(f"grid needs {n_combos} points, budget is {inst.budget}")

    half = inst.half_range
    centers = np.zeros((free_rows, d))
    values, grids = _combined(model, x, y, spec, centers, half, res)
    best = int(np.argmax(values))
    delta, parts = _decode(spec, best, grids, m)
    base_value = float(values[best])
    if _on_box_edge(parts, res, d):
        raise OracleInconclusive("grid argmax lies on the search boundary; widen half_range")
    spacing = 2.0 * half / (res - 1)
    slack = _neighbour_slack(model, group, spec, delta, spacing, base_value)

    value = base_value
    levels = 0
    half = spacing / 2.0
    rres = min(inst.refine_resolution, res)
    while 2.0 * half / (rres - 1) > inst.refine_tol and levels < inst.refine_levels:
        levels += 1
        centers = delta[:1] if spec.kind is CostKind.INDICATOR else delta
        values, grids = _combined(model, x, y, spec, centers, half, rres)
        best = int(np.argmax(values))
        on_edge = False
        if values[best] > value:
            delta, parts = _decode(spec, best, grids, m)
            value = float(values[best])
            on_edge = _on_box_edge(parts, rres, d)
        if not on_edge:
            half = half / 2.0

    if polish and spec.kind is not CostKind.INDICATOR:
        rng = make_rng(seed)
        for start in (delta, np.zeros_like(delta) + 1e-2 * rng.standard_normal(delta.shape)):
            v, cand = _factored_polish(model, group, spec, start, rng)
            if v > value:
                value, delta = v, cand
    if np.max(np.abs(delta)) >= inst.half_range:
        raise OracleInconclusive("refined maximizer left the search box; widen half_range")
    return GridResult(value, delta, base_value, slack, levels)


# --- weak duality ------------------------------------------------------------

@dataclass
class WeakDualityReport:
    passed: bool
    gaps: list

    @property
    def min_gap(self):
        return min(self.gaps) if self.gaps else math.inf


def transport_value(model, group, spec, x_new):
    """``mean l(T x) - (lam/m) c_m(x, T x)`` for a label-preserving map T.

    For the indicator cost, displacement rows that differ only by the
    rounding of ``T x - x`` (a few ulps of the coordinates) count as equal.
    """
    x = as_matrix(group.x)
    x_new = as_matrix(x_new)
    delta = x_new - x
    if spec.kind is CostKind.INDICATOR and delta.shape[0] > 1:
        ulps = 8 * np.finfo(np.float64).eps * np.maximum(np.abs(x), np.abs(x_new)).max(axis=0)
        if np.all(np.abs(delta - delta[0]) <= 2 * ulps):
            delta = np.tile(delta.mean(axis=0), (delta.shape[0], 1))
    return objective(model, group, spec, delta)


def weak_duality_check(model, groups, spec, pushforward, inst, tol=1e-9):
    """Check ``value(T) <= c_m-transform`` on every group and every map.

    ``groups`` is an iterable of labeled groups; ``pushforward`` is one map or
    a list of maps from a group's feature matrix to transported features
    (labels unchanged). The transform is computed once per group. Gaps
    ``transform - value(T)`` are recorded group-major.
    """
    maps = pushforward if isinstance(pushforward, (list, tuple)) else [pushforward]
    gaps = []
    for group in groups:
        rhs = grid_ctransform(model, group, spec, inst).value
        x = as_matrix(group.x)
        for T in maps:
            lhs = transport_value(model, group, spec, T(x.copy()))
            gaps.append(rhs - lhs if math.isfinite(lhs) else math.inf)
    return WeakDualityReport(all(g >= -tol for g in gaps), gaps)


def random_pushforward(d, scale, pieces=3, shared=False, seed=0):
    """Piecewise-constant shift map.

    Points are assigned to one of ``pieces`` regions by a random hyperplane
    arrangement and shifted by that region's constant vector. With
    ``shared`` the region of the group mean picks one shift for every row.
    """
    rng = make_rng(seed)
    normals = rng.standard_normal((max(pieces - 1, 1), d))
    offsets = rng.standard_normal(max(pieces - 1, 1)) * 0.5
    shifts = rng.uniform(-scale, scale, size=(pieces, d))

    def region(points):
        return np.sum(points @ normals.T > offsets, axis=1) % pieces

    def T(x):
        if shared:
            k = region(x.mean(axis=0, keepdims=True))[0]
            return x + shifts[k]
        return x + shifts[region(x)]

    return T


# --- group coupling cost -------------------------------------------------------

def coupling_cost_bruteforce(p_points, q_points, spec, m=2, p_weights=None,
                             q_weights=None):
    """Group OT cost between discrete P and Q for m = 2.

    Minimizes ``E[(1/m) c_m(X, X')]`` over joint laws of ``(X1, X2, X1', X2')``
    whose source part is ``P x P`` and whose targets each have marginal Q.
    Solved exactly as a linear program over the product support. Returns
    ``inf`` if no finite-cost coupling exists.
    """
    if m != 2:
        raise ValueError("only m = 2 is supported")
    P = as_matrix(p_points)
    Q = as_matrix(q_points)
    if P.shape[0] > 4 or Q.shape[0] > 4:
        raise OracleInconclusive("supports limited to 4 points each")
    pw = _weights(p_weights, P.shape[0])
    qw = _weights(q_weights, Q.shape[0])
    a, b = P.shape[0], Q.shape[0]
    src = list(itertools.product(range(a), repeat=2))
    dst = list(itertools.product(range(b), repeat=2))
    n_var = len(src) * len(dst)
    cost = np.empty(n_var)
    for s, (i1, i2) in enumerate(src):
        for t, (j1, j2) in enumerate(dst):
            delta = np.stack([Q[j1] - P[i1], Q[j2] - P[i2]])
            cost[s * len(dst) + t] = eval_cost(spec, delta) / m
    finite = np.isfinite(cost)
    c = np.where(finite, cost, 0.0)
    bounds = [(0, None) if f else (0, 0) for f in finite]

    rows, rhs = [], []
    for s, (i1, i2) in enumerate(src):
        r = np.zeros(n_var)
        r[s * len(dst):(s + 1) * len(dst)] = 1.0
        rows.append(r)
        rhs.append(pw[i1] * pw[i2])
    for coord in range(2):
        for j in range(b):
            r = np.zeros(n_var)
            for s in range(len(src)):
                for t, pair in enumerate(dst):
                    if pair[coord] == j:
                        r[s * len(dst) + t] = 1.0
            rows.append(r)
            rhs.append(qw[j])
    res = linprog(c, A_eq=np.array(rows), b_eq=np.array(rhs), bounds=bounds,
                  method="highs")
    if res.status == 2:
        return math.inf
    if res.status != 0:
        raise OracleInconclusive(f"coupling LP failed: {res.message}")
    return float(res.fun)


def _weights(w, n):
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
        raise ValueError("weights must be a probability vector matching the support")
    return w
