"""Test-time adversaries: structured PGD, per-sample PGD and FGSM (L2 budgets)."""

from dataclasses import dataclass

import numpy as np

from gsot.linalg import as_matrix, svd

KINDS = ("universal", "group-sparse", "low-rank", "pgd", "fgsm")


@dataclass(frozen=True)
class AttackConfig:
    """Absolute attack parameters (relative rules are resolved by the caller).

    ``k`` is the number of kept columns for group-sparse, ``r`` the rank for
    low-rank; ``k = 0`` / ``r = 0`` means no perturbation at all.
    """

    kind: str
    steps: int
    step_size: float
    max_norm: float
    k: int = 0
    r: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.kind == "fgsm":
            object.__setattr__(self, "steps", 1)
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not self.max_norm > 0:
            raise ValueError("max_norm must be positive")
        if self.step_size < 0:
            raise ValueError("step_size must be non-negative")
        if self.k < 0 or self.r < 0:
            raise ValueError("k and r must be non-negative")

    @property
    def structure_param(self):
        if self.kind == "group-sparse":
            return self.k
        if self.kind == "low-rank":
            return self.r
        return None


def clip_rows(delta, max_norm):
    """Scale every row with L2 norm above ``max_norm`` back onto the sphere."""
    norms = np.sqrt(np.sum(delta * delta, axis=1, keepdims=True))
    scale = np.minimum(1.0, max_norm / np.maximum(norms, 1e-300))
    return delta * scale


def project_universal(delta):
    return np.repeat(delta.mean(axis=0, keepdims=True), delta.shape[0], axis=0)


def project_group_sparse(delta, k):
    """Keep the ``k`` columns of largest norm (ties to the lower index)."""
    d = delta.shape[1]
    if k >= d:
        return delta.copy()
    norms = np.sqrt(np.sum(delta * delta, axis=0))
    keep = np.argsort(-norms, kind="stable")[:k]
    out = np.zeros_like(delta)
    out[:, keep] = delta[:, keep]
    return out


def project_low_rank(delta, r):
    """Best rank-``r`` approximation (truncated SVD, ties kept in SVD order)."""
    res = svd(delta)
    if r >= res.singular_values.size:
        return delta.copy()
    return (res.u[:, :r] * res.singular_values[:r]) @ res.vt[:r]


def project_structure(delta, cfg):
    if cfg.kind == "universal":
        return project_universal(delta)
    if cfg.kind == "group-sparse":
        return project_group_sparse(delta, cfg.k)
    if cfg.kind == "low-rank":
        return project_low_rank(delta, cfg.r)
    return delta


def _input_grads(model, x, y):
    _, g = model.sample_losses_and_input_grads(x, y)
    return g


def _normalize_rows(g):
    norms = np.sqrt(np.sum(g * g, axis=1, keepdims=True))
    return np.divide(g, norms, out=np.zeros_like(g), where=norms > 0)


def structured_pgd(model, batch, cfg):
    """Projected gradient ascent on the batch loss under a shared structure.

    Each step moves every row along its own unit-normalized loss gradient
    (so confidently classified rows with vanishing gradients still move),
    then projects onto the structure set and clips each row to ``max_norm``.
    """
    x = as_matrix(batch.x, "x")
    y = np.asarray(batch.y)
    delta = np.zeros_like(x)
    if cfg.structure_param == 0:
        return delta
    for _ in range(cfg.steps):
        g = _input_grads(model, x + delta, y)
        delta = delta + cfg.step_size * _normalize_rows(g)
        delta = project_structure(delta, cfg)
        delta = clip_rows(delta, cfg.max_norm)
    return delta


def pgd_attack(model, batch, cfg):
    """Per-sample L2 PGD: normalized gradient step, then per-row projection."""
    x = as_matrix(batch.x, "x")
    y = np.asarray(batch.y)
    delta = np.zeros_like(x)
    for _ in range(cfg.steps):
        g = _input_grads(model, x + delta, y)
        delta = clip_rows(delta + cfg.step_size * _normalize_rows(g), cfg.max_norm)
    return delta


def fgsm_attack(model, batch, cfg):
    """One-step sign attack rescaled to the per-row L2 budget."""
    x = as_matrix(batch.x, "x")
    s = np.sign(_input_grads(model, x, np.asarray(batch.y)))
    return cfg.max_norm * _normalize_rows(s)


def run_attack(model, batch, cfg):
    if cfg.kind == "pgd":
        return pgd_attack(model, batch, cfg)
    if cfg.kind == "fgsm":
        return fgsm_attack(model, batch, cfg)
    return structured_pgd(model, batch, cfg)


def attack_in_groups(model, batch, cfg, group_size=0):
    """Attack consecutive groups of ``group_size`` rows (0 = whole batch)."""
    x = as_matrix(batch.x, "x")
    y = np.asarray(batch.y)
    n = x.shape[0]
    size = n if group_size <= 0 else group_size
    out = np.zeros_like(x)
    for start in range(0, n, size):
        sl = slice(start, min(start + size, n))
        sub = type(batch)(x[sl], y[sl])
        c = cfg
        if cfg.kind == "low-rank":
            rows = sl.stop - sl.start
            c = AttackConfig(cfg.kind, cfg.steps, cfg.step_size, cfg.max_norm,
                             cfg.k, min(cfg.r, rows, x.shape[1]), cfg.seed)
        out[sl] = run_attack(model, sub, c)
    return out


def average_norm(delta):
    """Mean row L2 norm."""
    delta = as_matrix(delta, "delta")
    return float(np.mean(np.sqrt(np.sum(delta * delta, axis=1))))
