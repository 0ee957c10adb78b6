"""Oracle suite: every closed form and solver checked against an independent route.

Each check returns a :class:`CheckResult`; :func:`run_suite` runs them all at
fixed seeds. The generators for the fuzzed instances are public so the test
suite can reuse exactly the same instances.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from gsot.errors import OracleInconclusive
from gsot.gdadmm import SolverConfig, admm_inner_maximize, inner_objective
from gsot.groupcost import CostKind, GroupCostSpec, is_permutation_invariant_witness
from gsot.linalg import svd
from gsot.models import ARCHS, LabeledBatch, init_params, loss_and_grads
from gsot.ot_oracle import (TinyInstance, coupling_cost_bruteforce, grid_ctransform,
                            random_pushforward, weak_duality_check)
from gsot.prox import prox, prox_objective, prox_oracle
from gsot.rng import make_rng

PROX_XIS = (0.0, 0.1, 1.0, 10.0)
PROX_OBJ_TOL = 1e-6
PROX_DIST_TOL = 1e-4
GRAD_REL_TOL = 1e-4
BRACKET_UPPER_TOL = 1e-3
DUALITY_TOL = 1e-9

# Tiny-instance regime for the bracket and duality checks: a small ELU net
# with doubled weights and a penalty strong enough for a bounded but
# nonzero maximizer inside a +-3 search box.
TINY_SIZES = ((2, 2), (3, 2), (2, 3), (4, 2))
TINY_INDICATOR_SIZES = ((2, 2), (3, 2), (2, 3), (4, 2), (3, 3), (4, 3))
TINY_LAMBDA = 1.0
TINY_ALPHA = 0.3
TINY_HALF_RANGE = 3.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    cases: int
    worst: float
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: cases={self.cases} worst={self.worst:.3e} "
                f"time={self.seconds:.1f}s {self.detail}").rstrip()


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --- prox ----------------------------------------------------------------------

def prox_instances(count, seed=0):
    """``count`` seeded (v, xi) pairs with shapes up to 6 x 5."""
    rng = make_rng(seed)
    out = []
    for i in range(count):
        m, d = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        v = rng.standard_normal((m, d)) * rng.choice([0.1, 1.0, 5.0])
        out.append((v, PROX_XIS[i % len(PROX_XIS)]))
    return out


@_timed
def check_prox(count=100, seed=0, threshold_scale=1.0):
    """Closed-form prox against the numerical oracle for every cost kind.

    ``threshold_scale`` multiplies the threshold handed to the closed form;
    anything other than 1 is a deliberately broken prox (negative control).
    """
    worst, bad, n = 0.0, [], 0
    for kind in CostKind:
        for j, (v, xi) in enumerate(prox_instances(count, seed + 17 * len(kind.value))):
            n += 1
            z = prox(kind, v, xi * threshold_scale)
            try:
                zo = prox_oracle(kind, v, xi, seed=j)
            except OracleInconclusive as exc:
                bad.append(f"{kind.value}#{j}:inconclusive({exc})")
                continue
            obj_gap = prox_objective(kind, v, z, xi) - prox_objective(kind, v, zo, xi)
            dist = float(np.linalg.norm(z - zo))
            if not math.isfinite(obj_gap):
                obj_gap = math.inf
            worst = max(worst, dist, obj_gap)
            if obj_gap > PROX_OBJ_TOL or dist > PROX_DIST_TOL:
                bad.append(f"{kind.value}#{j}")
    return CheckResult("prox_closed_form_vs_oracle", not bad, n, worst,
                       f"failures={bad[:5]}" if bad else "")


# --- gradients -----------------------------------------------------------------

def gradient_instances(count, seed=0):
    rng = make_rng(seed)
    out = []
    for i in range(count):
        arch = ARCHS[i % len(ARCHS)]
        d, K = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        H, m = int(rng.integers(1, 7)), int(rng.integers(1, 6))
        params = init_params(arch, d, K, H, seed=int(rng.integers(2**31)))
        params = params.with_flat(params.flat() * rng.uniform(0.5, 3.0))
        x = rng.standard_normal((m, d)) * 2.0
        y = rng.integers(0, K, size=m)
        out.append((params, LabeledBatch(x, y)))
    return out


def _rel_err(a, b):
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-8)
    return float(np.linalg.norm(a - b)) / scale


def fd_gradients(params, batch, eps=1e-6):
    """Central finite differences of the mean loss in weights and inputs."""
    base = params.flat()
    gw = np.empty_like(base)
    for i in range(base.size):
        e = np.zeros_like(base)
        e[i] = eps
        hi = loss_and_grads(params.with_flat(base + e), batch).loss
        lo = loss_and_grads(params.with_flat(base - e), batch).loss
        gw[i] = (hi - lo) / (2 * eps)
    x = np.asarray(batch.x, dtype=np.float64)
    gx = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        hi = loss_and_grads(params, LabeledBatch(xp, batch.y)).loss
        lo = loss_and_grads(params, LabeledBatch(xm, batch.y)).loss
        gx[idx] = (hi - lo) / (2 * eps)
    return gw, gx


def gradient_error(params, batch):
    """Max relative error (per block, in norm) between analytic and FD gradients."""
    lg = loss_and_grads(params, batch)
    gw_fd, gx_fd = fd_gradients(params, batch)
    analytic_w = np.concatenate([lg.grad_w[k].ravel() for k in params.shapes()])
    err = _rel_err(analytic_w, gw_fd)
    # per weight block as well, so a tiny block cannot hide behind a big one
    off = 0
    for name, shape in params.shapes().items():
        size = int(np.prod(shape))
        err = max(err, _rel_err(analytic_w[off:off + size], gw_fd[off:off + size]))
        off += size
    return max(err, _rel_err(lg.grad_x, gx_fd))


@_timed
def check_gradients(count=50, seed=0):
    errs = [gradient_error(p, b) for p, b in gradient_instances(count, seed)]
    worst = max(errs) if errs else 0.0
    return CheckResult("gradient_analytic_vs_fd", worst < GRAD_REL_TOL, len(errs), worst)


# --- inner solver bracket ------------------------------------------------------

def tiny_instance(i, kind=None, seed=0):
    """Deterministic tiny (model, group, spec, search domain) number ``i``."""
    kinds = tuple(CostKind)
    kind = CostKind(kind) if kind is not None else kinds[i % 3]
    sizes = TINY_INDICATOR_SIZES if kind is CostKind.INDICATOR else TINY_SIZES
    m, d = sizes[(i // 3) % len(sizes)]
    rng = make_rng(seed * 100_003 + i)
    params = init_params("mlp-elu", d, 3, 5, seed=int(rng.integers(2**31)))
    params = params.with_flat(2.0 * params.flat())
    group = LabeledBatch(rng.standard_normal((m, d)), rng.integers(0, 3, size=m))
    spec = GroupCostSpec(kind, TINY_ALPHA, TINY_LAMBDA)
    dims = d if kind is CostKind.INDICATOR else m * d
    return params, group, spec, TinyInstance.for_size(dims, TINY_HALF_RANGE)


def tiny_solver(m):
    """ADMM settings for the tiny instances (ascent step scaled with m)."""
    return SolverConfig(eta1=m / 2.0, T1=200)


def bracket_gap(i, seed=0):
    """``(admm_value - grid_value, grid_slack)`` on tiny instance ``i``."""
    params, group, spec, inst = tiny_instance(i, seed=seed)
    m = group.x.shape[0]
    state, _ = admm_inner_maximize(params, group, spec, tiny_solver(m))
    admm_val = inner_objective(params, group, spec, state.delta_aux)
    grid = grid_ctransform(params, group, spec, inst)
    return admm_val - grid.value, grid.slack


@_timed
def check_bracket(count=4, seed=0):
    worst, bad = 0.0, []
    for i in range(count):
        try:
            diff, slack = bracket_gap(i, seed)
        except OracleInconclusive as exc:
            bad.append(f"#{i}:inconclusive({exc})")
            continue
        worst = max(worst, diff, -diff - slack)
        if not (-slack <= diff <= BRACKET_UPPER_TOL):
            bad.append(f"#{i}:diff={diff:.3e},slack={slack:.3e}")
    return CheckResult("admm_within_grid_bracket", not bad, count, worst,
                       f"failures={bad}" if bad else "")


# --- weak duality ----------------------------------------------------------------

def duality_case(i, trials, seed=0):
    """Gaps for ``trials`` random pushforwards plus identity and argmax maps."""
    params, group, spec, inst = tiny_instance(i, seed=seed)
    d = group.x.shape[1]
    maps = [lambda x: x]
    for t in range(trials):
        maps.append(random_pushforward(d, 1.5, pieces=3,
                                       shared=(spec.kind is CostKind.INDICATOR or t % 2 == 0),
                                       seed=seed * 7919 + 1000 * i + t))
    report = weak_duality_check(params, [group], spec, maps, inst, tol=DUALITY_TOL)
    best = grid_ctransform(params, group, spec, inst).delta
    tight = weak_duality_check(params, [group], spec, lambda x: x + best, inst)
    return report, tight.gaps[0]


@_timed
def check_weak_duality(instances=5, trials=20, seed=0):
    bad, worst, n = [], 0.0, 0
    for i in range(instances):
        try:
            report, tight_gap = duality_case(i, trials, seed)
        except OracleInconclusive as exc:
            bad.append(f"#{i}:inconclusive({exc})")
            continue
        n += len(report.gaps)
        finite = [g for g in report.gaps if math.isfinite(g)]
        worst = max(worst, -min(finite, default=0.0), abs(tight_gap))
        if not report.passed:
            bad.append(f"#{i}:min_gap={report.min_gap:.3e}")
        if abs(tight_gap) > DUALITY_TOL:
            bad.append(f"#{i}:argmax_gap={tight_gap:.3e}")
    return CheckResult("weak_duality_and_tightness", not bad, n, worst,
                       f"failures={bad}" if bad else "")


# --- coupling cost and structural witnesses --------------------------------------

@_timed
def check_coupling(seed=0):
    rng = make_rng(seed)
    bad, worst, n = [], 0.0, 0
    for kind in CostKind:
        for _ in range(3):
            spec = GroupCostSpec(kind, 0.5, 1.0)
            p = rng.standard_normal((3, 2))
            w = coupling_cost_bruteforce(p, p, spec)
            n += 1
            worst = max(worst, abs(w))
            if abs(w) > 1e-9:
                bad.append(f"{kind.value}:Q=P gives {w:.3e}")
    for _ in range(5):
        x, delta = rng.standard_normal(2), rng.standard_normal(2)
        spec = GroupCostSpec(CostKind.GROUP, 0.0, 1.0)
        w = coupling_cost_bruteforce(x[None], (x + delta)[None], spec)
        n += 1
        err = abs(w - float(delta @ delta))
        worst = max(worst, err)
        if err > 1e-9:
            bad.append(f"singleton err {err:.3e}")
    return CheckResult("coupling_cost_identities", not bad, n, worst,
                       f"failures={bad}" if bad else "")


@_timed
def check_permutation_invariance(count=30, seed=0):
    rng = make_rng(seed)
    bad, n = [], 0
    for kind in CostKind:
        spec = GroupCostSpec(kind, 0.5, 1.0)
        for _ in range(count):
            m, d = int(rng.integers(1, 6)), int(rng.integers(1, 5))
            delta = rng.standard_normal((m, d))
            if kind is CostKind.INDICATOR and rng.random() < 0.5:
                delta = np.tile(delta[:1], (m, 1))
            n += 1
            if not is_permutation_invariant_witness(spec, delta, rng.permutation(m)):
                bad.append(kind.value)
    return CheckResult("cost_permutation_invariance", not bad, n, 0.0,
                       f"failures={bad[:5]}" if bad else "")


@_timed
def check_svd(count=200, seed=0):
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(count):
        m, d = int(rng.integers(1, 13)), int(rng.integers(1, 13))
        a = rng.standard_normal((m, d))
        if rng.random() < 0.3:
            a = a[:, :1] @ rng.standard_normal((1, d))
        res = svd(a)
        scale = max(1.0, float(np.linalg.norm(a)))
        err = float(np.linalg.norm(res.reconstruct() - a)) / scale
        ref = np.linalg.svd(a, compute_uv=False)
        err = max(err, float(np.max(np.abs(np.sort(res.singular_values)[::-1][:ref.size] - ref))) / scale)
        worst = max(worst, err)
    return CheckResult("svd_reconstruction_vs_lapack", worst < 1e-10, count, worst)


def run_suite(seed=0, prox_instances=100, grad_instances=50, bracket_instances=4,
              duality_instances=5, duality_trials=20, prox_threshold_scale=1.0):
    """Run every check once; returns the list of :class:`CheckResult`."""
    return [
        check_svd(seed=seed),
        check_prox(prox_instances, seed, prox_threshold_scale),
        check_gradients(grad_instances, seed),
        check_permutation_invariance(seed=seed),
        check_bracket(bracket_instances, seed),
        check_weak_duality(duality_instances, duality_trials, seed),
        check_coupling(seed),
    ]
