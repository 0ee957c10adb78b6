"""GDADMM: stochastic gradient descent on the weights around an ADMM inner maximizer.

Inner problem, for a group ``(x_i, y_i)_{i<m}`` and fixed weights::

    max_delta  (1/m) sum_i l(f(x_i + delta_i), y_i) - (lam/m) c_m(delta)

with ``c_m = alpha g + (1-alpha) ||delta||_F^2``. It is split as
``delta' = delta`` and solved with one gradient-ascent step on ``delta`` per
iteration, an exact prox step on ``delta'`` and a scaled dual step on
``u``. The iteration, with ``xi = lam*alpha/rho``::

    delta <- (1 - 2 lam (1-alpha) eta1/m) delta
             - (rho eta1/m) (delta - delta' - u) + (eta1/m) grad_l
    delta' <- prox_{xi g}(delta - u)
    u      <- u - eta_dual (delta - delta')

is gradient ascent / exact minimization / dual descent on the augmented
Lagrangian ``(1/m)[sum l - lam(1-alpha)||delta||^2 - lam alpha g(delta')
- (rho/2)||delta - delta'||^2 + rho <u, delta - delta'>]``, so every fixed
point maximizes the inner problem.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from gsot.errors import DivergenceError
from gsot.fileio import write_csv_atomic
from gsot.groupcost import CostKind, eval_cost, nonsmooth_part
from gsot.linalg import as_matrix, numerical_rank
from gsot.models import (LabeledBatch, grad_norm, init_params, loss_and_grads,
                         mean_loss)
from gsot.prox import prox
from gsot.rng import child_seed, make_rng

TRACE_COLUMNS = ("iter", "robust_loss", "clean_loss", "primal_residual",
                 "structure_stat", "stationarity")


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    eta0: float = 1e-4
    eta1: float = 0.1
    eta_dual: float = 1.0
    T0: int = 10_000
    T1: int = 20
    m: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("rho", "eta0", "eta1", "eta_dual"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.T0 < 0 or self.T1 < 1:
            raise ValueError("need T0 >= 0 and T1 >= 1")


@dataclass
class AdmmState:
    delta: np.ndarray
    delta_aux: np.ndarray
    dual: np.ndarray
    iter: int = 0


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)
    mean_perturbation_norms: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def mean_perturbation_norm(self):
        if not self.mean_perturbation_norms:
            return 0.0
        return float(np.mean(self.mean_perturbation_norms))

    def to_csv(self, path):
        write_csv_atomic(path, TRACE_COLUMNS,
                         [[r[c] for c in TRACE_COLUMNS] for r in self.rows])


def lambda_from_rule(x, factor=0.25):
    """``factor`` times the mean row norm of ``x``."""
    x = as_matrix(x)
    return factor * float(np.mean(np.sqrt(np.sum(x * x, axis=1))))


def prox_threshold(spec, cfg):
    return spec.lam * spec.alpha / cfg.rho


def inner_objective(model, batch, spec, delta):
    """Value of the c_m-transform objective at ``delta`` (may be -inf)."""
    x = as_matrix(batch.x)
    m = x.shape[0]
    losses, _ = model.sample_losses_and_input_grads(x + delta, batch.y)
    cost = eval_cost(spec, delta)
    if math.isinf(cost):
        return -math.inf
    return float(np.mean(losses)) - spec.lam * cost / m


def augmented_objective(model, batch, spec, cfg, state):
    x = as_matrix(batch.x)
    m = x.shape[0]
    losses, _ = model.sample_losses_and_input_grads(x + state.delta, batch.y)
    g = nonsmooth_part(spec, state.delta_aux)
    if math.isinf(g):
        return -math.inf
    r = state.delta - state.delta_aux
    val = (np.sum(losses)
           - spec.quad_weight * np.sum(state.delta ** 2)
           - spec.lam * spec.alpha * g
           - 0.5 * cfg.rho * np.sum(r * r)
           + cfg.rho * np.sum(state.dual * r))
    return float(val) / m


def _check_finite(state, t):
    for name in ("delta", "delta_aux", "dual"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise DivergenceError(f"non-finite {name} in ADMM inner loop", iteration=t)


def admm_inner_maximize(model, batch, spec, cfg, T1=None, record=False):
    """Run the inner ADMM maximizer for ``T1`` iterations from zero.

    ``model`` is anything with ``sample_losses_and_input_grads(x, y)``.
    Returns ``(state, trace)``; ``trace`` holds the augmented objective after
    each iteration when ``record`` is set, else it is empty.
    """
    if not spec.strongly_concave() and spec.kind is not CostKind.INDICATOR:
        raise ValueError("alpha must be < 1 for group/nuclear costs (no strong concavity)")
    x = as_matrix(batch.x, "x")
    y = batch.y
    m = x.shape[0]
    T1 = cfg.T1 if T1 is None else T1
    xi = prox_threshold(spec, cfg)
    shrink = 1.0 - 2.0 * spec.quad_weight * cfg.eta1 / m
    couple = cfg.rho * cfg.eta1 / m
    step = cfg.eta1 / m

    state = AdmmState(np.zeros_like(x), np.zeros_like(x), np.zeros_like(x))
    trace = []
    for t in range(1, T1 + 1):
        _, g = model.sample_losses_and_input_grads(x + state.delta, y)
        delta = (shrink * state.delta
                 - couple * (state.delta - state.delta_aux - state.dual)
                 + step * g)
        if not np.all(np.isfinite(delta)):
            raise DivergenceError("non-finite delta in ADMM inner loop", iteration=t)
        aux = prox(spec.kind, delta - state.dual, xi)
        dual = state.dual - cfg.eta_dual * (delta - aux)
        state = AdmmState(delta, aux, dual, t)
        _check_finite(state, t)
        if record:
            trace.append(augmented_objective(model, batch, spec, cfg, state))
    return state, trace


def structure_stat(kind, delta):
    """max row deviation | nonzero-column count | numerical rank."""
    kind = CostKind(kind)
    if kind is CostKind.INDICATOR:
        dev = delta - delta.mean(axis=0, keepdims=True)
        return float(np.max(np.sqrt(np.sum(dev * dev, axis=1))))
    if kind is CostKind.GROUP:
        return int(np.sum(np.any(delta != 0.0, axis=0)))
    if not np.any(delta):
        return 0
    return numerical_rank(delta)


def _sample(rng, n, m):
    return rng.integers(0, n, size=m)


def _init(data, arch, hidden, K, rng, init):
    if init is not None:
        return init.copy()
    K = K if K is not None else int(np.max(data.y)) + 1
    return init_params(arch, data.x.shape[1], K, hidden, seed=child_seed(rng))


def _check_params(params, t):
    for name, w in params.weights.items():
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"non-finite weight {name}", iteration=t)


def gsat_train(data, arch, spec, cfg, hidden=16, K=None, init=None, callback=None):
    """Group-structured adversarial training.

    Each outer step draws ``m`` samples uniformly with replacement, finds the
    structured perturbation with :func:`admm_inner_maximize`, then takes a
    gradient step on the loss at the perturbed inputs. The perturbation used
    for the step is the prox iterate ``delta'``, which satisfies the cost's
    structure exactly. Labels are never perturbed.

    Returns ``(params, trace)``.
    """
    rng = make_rng(cfg.seed)
    params = _init(data, arch, hidden, K, rng, init)
    trace = TrainTrace()
    n = data.x.shape[0]
    for t in range(1, cfg.T0 + 1):
        idx = _sample(rng, n, cfg.m)
        batch = LabeledBatch(data.x[idx], data.y[idx])
        state, _ = admm_inner_maximize(params, batch, spec, cfg)
        delta = state.delta_aux
        lg = loss_and_grads(params, LabeledBatch(batch.x + delta, batch.y))
        trace.rows.append({
            "iter": t,
            "robust_loss": lg.loss,
            "clean_loss": mean_loss(params, batch),
            "primal_residual": float(np.linalg.norm(state.delta - state.delta_aux)),
            "structure_stat": structure_stat(spec.kind, delta),
            "stationarity": grad_norm(lg.grad_w),
        })
        trace.mean_perturbation_norms.append(
            float(np.mean(np.sqrt(np.sum(delta * delta, axis=1)))))
        params = params.step(lg.grad_w, cfg.eta0)
        _check_params(params, t)
        if callback is not None:
            callback(t, params, state)
    return params, trace


def erm_train(data, arch, cfg, hidden=16, K=None, init=None, callback=None):
    """Plain mini-batch gradient descent with the same sampling contract."""
    rng = make_rng(cfg.seed)
    params = _init(data, arch, hidden, K, rng, init)
    n = data.x.shape[0]
    for t in range(1, cfg.T0 + 1):
        idx = _sample(rng, n, cfg.m)
        lg = loss_and_grads(params, LabeledBatch(data.x[idx], data.y[idx]))
        params = params.step(lg.grad_w, cfg.eta0)
        _check_params(params, t)
        if callback is not None:
            callback(t, params, None)
    return params


def adversarial_train(data, arch, cfg, attack_cfg, hidden=16, K=None, init=None):
    """PGD / FGSM adversarial-training baseline (per-sample L2 attacks)."""
    from gsot.attacks import run_attack

    rng = make_rng(cfg.seed)
    params = _init(data, arch, hidden, K, rng, init)
    n = data.x.shape[0]
    for t in range(1, cfg.T0 + 1):
        idx = _sample(rng, n, cfg.m)
        batch = LabeledBatch(data.x[idx], data.y[idx])
        delta = run_attack(params, batch, attack_cfg)
        lg = loss_and_grads(params, LabeledBatch(batch.x + delta, batch.y))
        params = params.step(lg.grad_w, cfg.eta0)
        _check_params(params, t)
    return params


def danskin_gradient(params, batch, spec, cfg, T1):
    """Weight gradient of the loss at the inner maximizer (after ``T1`` steps)."""
    state, _ = admm_inner_maximize(params, batch, spec, cfg, T1=T1)
    lg = loss_and_grads(params, LabeledBatch(batch.x + state.delta_aux, batch.y))
    return lg.grad_w


def stationarity_estimate(params, batch, spec, cfg, inner_factor=10):
    """Estimate ||grad F(w)|| of the inner-maximized objective.

    The inner problem is solved with ``inner_factor * T1`` iterations on
    each consecutive group of ``cfg.m`` rows of ``batch``; the estimate is the
    norm of the averaged weight gradient at those maximizers.
    """
    x = as_matrix(batch.x)
    n = x.shape[0]
    m = min(cfg.m, n)
    total, count = None, 0
    for start in range(0, n - m + 1, m):
        sl = slice(start, start + m)
        g = danskin_gradient(params, LabeledBatch(x[sl], batch.y[sl]), spec, cfg,
                             cfg.T1 * inner_factor)
        total = g if total is None else {k: total[k] + g[k] for k in g}
        count += 1
    return grad_norm({k: v / count for k, v in total.items()})
