"""Experiment configuration: flat ``key = value`` lines with dotted sections.

Example::

    seed = 0
    data.source = planted          # blobs | planted | csv
    data.n = 400
    data.d = 10
    model.arch = mlp-elu
    cost.kind = group
    cost.alpha = 0.9
    cost.lambda_rule = 0.25-mean-norm
    solver.T0 = 500
    attack.0.kind = group-sparse
    attack.0.k = 0,1,2,4

Blank lines and ``#`` comments are ignored. Unknown keys are rejected.
Every numeric constraint of the inner types is checked by :func:`load_config`
before any computation starts.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from gsot.attacks import KINDS as ATTACK_KINDS
from gsot.attacks import AttackConfig
from gsot.data import (PlantSpec, gen_blobs, gen_planted_task, load_csv,
                       mean_feature_norm, plant_shift, train_test_split)
from gsot.errors import ConfigError, ParseError
from gsot.gdadmm import SolverConfig, lambda_from_rule
from gsot.groupcost import CostKind, GroupCostSpec
from gsot.models import ARCHS
from gsot.rng import make_rng

LAMBDA_RULES = ("absolute", "0.25-mean-norm")
SCALE_RULES = ("absolute", "relative")
DATA_SOURCES = ("blobs", "planted", "csv")
TRAIN_METHODS = ("gsat", "erm", "pgd", "fgsm")

_DEFAULTS = {
    "seed": "0",
    "out": "runs/default",
    "data.source": "blobs",
    "data.n": "400",
    "data.d": "10",
    "data.K": "2",
    "data.separation": "4.0",
    "data.test_fraction": "0.25",
    "data.path": "",
    "data.test_path": "",
    "data.onehot": "false",
    "data.support": "0,1,2",
    "data.support_rank": "0",
    "data.support_noise": "1.0",
    "data.background": "0.0",
    "data.plant.kind": "none",
    "data.plant.magnitude": "0.0",
    "data.plant.magnitude_rule": "absolute",
    "data.plant.k": "1",
    "data.plant.r": "1",
    "data.plant.split": "test",
    "model.arch": "mlp-elu",
    "model.hidden": "16",
    "model.path": "",
    "model.tag": "",
    "train.method": "gsat",
    "train.attack": "0",
    "train.budget": "0.0",
    "cost.kind": "group",
    "cost.alpha": "0.5",
    "cost.lambda_rule": "0.25-mean-norm",
    "cost.lambda": "1.0",
    "solver.rho": "1.0",
    "solver.eta0": "1e-4",
    "solver.eta1": "0.1",
    "solver.eta_dual": "1.0",
    "solver.T0": "10000",
    "solver.T1": "20",
    "solver.m": "200",
    "select.k": "3",
    "select.r": "1",
    "select.R": "20",
    "select.method": "admm",
    "select.attack": "0",
    "verify.prox_instances": "100",
    "verify.grad_instances": "50",
    "verify.bracket_instances": "4",
    "verify.duality_trials": "20",
    "verify.prox_threshold_scale": "1.0",
}

_ATTACK_DEFAULTS = {
    "kind": None,
    "steps": "100",
    "step_size": "0.001",
    "step_rule": "relative",
    "max_norm": "0.05",
    "norm_rule": "relative",
    "k": "0",
    "r": "0",
    "group_size": "0",
}


@dataclass
class AttackSpec:
    """One attack family of the eval ladder (sizes and budgets still relative)."""

    index: int
    kind: str
    steps: int
    step_size: float
    step_rule: str
    max_norm: float
    norm_rule: str
    ladder: tuple
    group_size: int

    def resolve(self, mean_norm, param=None, seed=0):
        """Absolute :class:`AttackConfig` for one ladder entry."""
        scale = mean_norm if self.step_rule == "relative" else 1.0
        budget = self.max_norm * (mean_norm if self.norm_rule == "relative" else 1.0)
        k = param if self.kind == "group-sparse" else 0
        r = param if self.kind == "low-rank" else 0
        return AttackConfig(self.kind, self.steps, self.step_size * scale, budget,
                            k or 0, r or 0, seed)


@dataclass
class ExperimentConfig:
    raw: dict
    seed: int
    out: str
    source: str
    arch: str
    hidden: int
    model_path: str
    train_method: str
    train_attack: int
    train_budget: float
    cost_kind: CostKind
    alpha: float
    lambda_rule: str
    lam_abs: float
    solver: SolverConfig
    attacks: list = field(default_factory=list)
    base_dir: str = "."

    def get(self, key):
        return self.raw[key]

    def num(self, key, cast=float):
        return _convert(key, self.raw[key], cast)

    def with_seed(self, seed):
        raw = dict(self.raw)
        raw["seed"] = str(seed)
        return build_config(raw, self.base_dir)

    def with_out(self, out):
        raw = dict(self.raw)
        raw["out"] = out
        return build_config(raw, self.base_dir)

    def path(self, key):
        p = self.raw[key]
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def cost_spec(self, train_x):
        """Cost spec with lambda resolved against the training features."""
        if self.lambda_rule == "absolute":
            lam = self.lam_abs
        else:
            lam = lambda_from_rule(train_x, 0.25)
        if not lam > 0:
            raise ConfigError(f"resolved lambda must be positive, got {lam}")
        return GroupCostSpec(self.cost_kind, self.alpha, lam)


def parse_lines(text):
    """Parse ``key = value`` lines into a dict; duplicates are errors."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {line.strip()!r}", line=lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ParseError("empty key", line=lineno)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        out[key] = value
    return out


def load_config(path, seed=None, out=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = parse_lines(text)
    if seed is not None:
        raw["seed"] = str(seed)
    if out is not None:
        raw["out"] = out
    return build_config(raw, os.path.dirname(os.path.abspath(path)))


def _convert(key, value, cast):
    try:
        if cast is bool:
            v = value.strip().lower()
            if v not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return v in ("true", "1", "yes")
        out = cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {value!r} as {cast.__name__}") from None
    if cast is float and not math.isfinite(out):
        raise ConfigError(f"{key}: must be finite")
    return out


def _int_list(key, value):
    parts = [p.strip() for p in value.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{key}: empty list")
    vals = tuple(_convert(key, p, int) for p in parts)
    if any(v < 0 for v in vals):
        raise ConfigError(f"{key}: entries must be non-negative")
    return vals


def _choice(key, value, allowed):
    if value not in allowed:
        raise ConfigError(f"{key}: {value!r} not in {allowed}")
    return value


def build_config(raw, base_dir="."):
    merged = dict(_DEFAULTS)
    attack_raw = {}
    for key, value in raw.items():
        if key.startswith("attack."):
            parts = key.split(".")
            if len(parts) != 3 or not parts[1].isdigit() or parts[2] not in _ATTACK_DEFAULTS:
                raise ConfigError(f"unknown attack key {key!r}")
            attack_raw.setdefault(int(parts[1]), {})[parts[2]] = value
        elif key in _DEFAULTS:
            merged[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for idx, a in attack_raw.items():
        for k, v in a.items():
            merged[f"attack.{idx}.{k}"] = v

    n = _convert("data.n", merged["data.n"], int)
    d = _convert("data.d", merged["data.d"], int)
    K = _convert("data.K", merged["data.K"], int)
    source = _choice("data.source", merged["data.source"], DATA_SOURCES)
    if source != "csv":
        if n < 2 or d < 1 or K < 2:
            raise ConfigError("need data.n >= 2, data.d >= 1, data.K >= 2")
        if _convert("data.separation", merged["data.separation"], float) < 0:
            raise ConfigError("data.separation must be non-negative")
    tf = _convert("data.test_fraction", merged["data.test_fraction"], float)
    if not 0 < tf < 1:
        raise ConfigError("data.test_fraction must lie in (0, 1)")
    if source == "csv":
        path = merged["data.path"]
        if not path:
            raise ConfigError("data.path is required for data.source = csv")
        for key in ("data.path", "data.test_path"):
            p = merged[key]
            if p and not os.path.isfile(p if os.path.isabs(p) else os.path.join(base_dir, p)):
                raise ConfigError(f"{key}: file {p!r} does not exist")
    _convert("data.onehot", merged["data.onehot"], bool)
    if source == "planted":
        rank = _convert("data.support_rank", merged["data.support_rank"], int)
        if rank < 0 or rank > d:
            raise ConfigError("data.support_rank must lie in [0, d]")
        sup = merged["data.support"]
        if sup.startswith("random:"):
            k = _convert("data.support", sup.split(":", 1)[1], int)
            if not 1 <= k <= d:
                raise ConfigError("data.support = random:k needs 1 <= k <= d")
        elif rank == 0:
            cols = _int_list("data.support", sup)
            if max(cols) >= d or len(set(cols)) != len(cols):
                raise ConfigError("data.support must be distinct columns < d")
        if _convert("data.support_noise", merged["data.support_noise"], float) <= 0:
            raise ConfigError("data.support_noise must be positive")
        if _convert("data.background", merged["data.background"], float) < 0:
            raise ConfigError("data.background must be non-negative")
    plant = merged["data.plant.kind"]
    if plant != "none":
        _choice("data.plant.kind", plant, ("universal", "group-sparse", "low-rank"))
        _choice("data.plant.magnitude_rule", merged["data.plant.magnitude_rule"], SCALE_RULES)
        _choice("data.plant.split", merged["data.plant.split"], ("train", "test", "both"))
        try:
            PlantSpec(plant, _convert("data.plant.magnitude", merged["data.plant.magnitude"], float),
                      _convert("data.plant.k", merged["data.plant.k"], int),
                      _convert("data.plant.r", merged["data.plant.r"], int))
        except ValueError as exc:
            raise ConfigError(f"data.plant: {exc}") from None

    arch = _choice("model.arch", merged["model.arch"], ARCHS)
    hidden = _convert("model.hidden", merged["model.hidden"], int)
    if arch == "mlp-elu" and hidden < 1:
        raise ConfigError("model.hidden must be >= 1 for mlp-elu")

    kind = _choice("cost.kind", merged["cost.kind"], tuple(k.value for k in CostKind))
    alpha = _convert("cost.alpha", merged["cost.alpha"], float)
    if not 0 <= alpha <= 1:
        raise ConfigError("cost.alpha must lie in [0, 1]")
    if alpha >= 1 and kind != CostKind.INDICATOR.value:
        raise ConfigError("cost.alpha = 1 loses strong concavity; only allowed for the indicator cost")
    lambda_rule = _choice("cost.lambda_rule", merged["cost.lambda_rule"], LAMBDA_RULES)
    lam_abs = _convert("cost.lambda", merged["cost.lambda"], float)
    if lambda_rule == "absolute" and not lam_abs > 0:
        raise ConfigError("cost.lambda must be positive")

    seed = _convert("seed", merged["seed"], int)
    try:
        solver = SolverConfig(
            rho=_convert("solver.rho", merged["solver.rho"], float),
            eta0=_convert("solver.eta0", merged["solver.eta0"], float),
            eta1=_convert("solver.eta1", merged["solver.eta1"], float),
            eta_dual=_convert("solver.eta_dual", merged["solver.eta_dual"], float),
            T0=_convert("solver.T0", merged["solver.T0"], int),
            T1=_convert("solver.T1", merged["solver.T1"], int),
            m=_convert("solver.m", merged["solver.m"], int),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None

    method = _choice("train.method", merged["train.method"], TRAIN_METHODS)
    train_budget = _convert("train.budget", merged["train.budget"], float)
    if train_budget < 0:
        raise ConfigError("train.budget must be non-negative")

    attacks = []
    for idx in sorted(attack_raw):
        a = dict(_ATTACK_DEFAULTS)
        a.update(attack_raw[idx])
        prefix = f"attack.{idx}"
        if a["kind"] is None:
            raise ConfigError(f"{prefix}.kind is required")
        akind = _choice(f"{prefix}.kind", a["kind"], ATTACK_KINDS)
        ladder_key = "k" if akind == "group-sparse" else "r"
        ladder = _int_list(f"{prefix}.{ladder_key}", a[ladder_key]) \
            if akind in ("group-sparse", "low-rank") else (None,)
        if akind == "group-sparse" and source != "csv" and max(ladder) > d:
            raise ConfigError(f"{prefix}.k: entries must be <= d")
        spec = AttackSpec(
            idx, akind,
            _convert(f"{prefix}.steps", a["steps"], int),
            _convert(f"{prefix}.step_size", a["step_size"], float),
            _choice(f"{prefix}.step_rule", a["step_rule"], SCALE_RULES),
            _convert(f"{prefix}.max_norm", a["max_norm"], float),
            _choice(f"{prefix}.norm_rule", a["norm_rule"], SCALE_RULES),
            ladder,
            _convert(f"{prefix}.group_size", a["group_size"], int),
        )
        try:
            spec.resolve(1.0, ladder[0])
        except ValueError as exc:
            raise ConfigError(f"{prefix}: {exc}") from None
        attacks.append(spec)
    if method in ("pgd", "fgsm") and train_budget == 0:
        if not any(a.index == _convert("train.attack", merged["train.attack"], int)
                   for a in attacks):
            raise ConfigError("baseline training needs train.budget > 0 or a train.attack entry")

    for key, cast in (("select.k", int), ("select.r", int), ("select.R", int),
                      ("select.attack", int), ("verify.prox_instances", int),
                      ("verify.grad_instances", int), ("verify.bracket_instances", int),
                      ("verify.duality_trials", int)):
        if _convert(key, merged[key], cast) < 0:
            raise ConfigError(f"{key} must be non-negative")
    if _convert("select.R", merged["select.R"], int) < 1:
        raise ConfigError("select.R must be >= 1")
    _choice("select.method", merged["select.method"], ("admm", "attack"))
    _convert("verify.prox_threshold_scale", merged["verify.prox_threshold_scale"], float)

    return ExperimentConfig(
        raw=merged, seed=seed, out=merged["out"], source=source, arch=arch,
        hidden=hidden, model_path=merged["model.path"], train_method=method,
        train_attack=_convert("train.attack", merged["train.attack"], int),
        train_budget=train_budget, cost_kind=CostKind(kind), alpha=alpha,
        lambda_rule=lambda_rule, lam_abs=lam_abs, solver=solver, attacks=attacks,
        base_dir=base_dir,
    )


def load_data(cfg):
    """``(train, test)`` datasets described by the config (deterministic per seed)."""
    seed = cfg.seed
    src = cfg.source
    if src == "csv":
        onehot = cfg.num("data.onehot", bool)
        full = load_csv(cfg.path("data.path"), "train", onehot)
        if cfg.get("data.test_path"):
            train = full
            test = load_csv(cfg.path("data.test_path"), "test", onehot)
        else:
            train, test = train_test_split(full, cfg.num("data.test_fraction"), seed)
    else:
        n, d, K = cfg.num("data.n", int), cfg.num("data.d", int), cfg.num("data.K", int)
        sep = cfg.num("data.separation")
        if src == "blobs":
            full = gen_blobs(n, d, K, sep, seed)
        else:
            full = gen_planted_task(n, d, K, sep, planted_support(cfg), seed,
                                    cfg.num("data.support_noise"), cfg.num("data.background"))
        train, test = train_test_split(full, cfg.num("data.test_fraction"), seed)
    plant = cfg.get("data.plant.kind")
    if plant != "none":
        mag = cfg.num("data.plant.magnitude")
        if cfg.get("data.plant.magnitude_rule") == "relative":
            mag *= mean_feature_norm(train)
        split = cfg.get("data.plant.split")
        spec = PlantSpec(plant, mag, cfg.num("data.plant.k", int),
                         cfg.num("data.plant.r", int), split, seed)
        try:
            if split in ("train", "both"):
                train = plant_shift(train, spec)
            if split in ("test", "both"):
                test = plant_shift(test, spec)
        except ValueError as exc:
            raise ConfigError(f"data.plant: {exc}") from None
    return train, test


def planted_support(cfg):
    """The planted label-relevant columns or basis, if the source is planted."""
    if cfg.source != "planted":
        return None
    d = cfg.num("data.d", int)
    rank = cfg.num("data.support_rank", int)
    if rank > 0:
        basis, _ = np.linalg.qr(make_rng(cfg.seed + 7919).standard_normal((d, rank)))
        return basis
    sup = cfg.get("data.support")
    if sup.startswith("random:"):
        k = int(sup.split(":", 1)[1])
        return np.sort(make_rng(cfg.seed + 7919).choice(d, size=k, replace=False))
    return np.array(_int_list("data.support", sup))
