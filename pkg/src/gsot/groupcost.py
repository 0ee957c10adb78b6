"""Group transportation costs on perturbation matrices.

Each cost splits into ``alpha * g(delta) + (1 - alpha) * ||delta||_F^2`` where
``g`` is the non-smooth structure-inducing term:

* ``indicator`` : 0 if every row equals the row mean, +inf otherwise
* ``group``     : sum of column Euclidean norms (column sparsity)
* ``nuclear``   : sum of singular values (low rank)

The cost depends on the original samples only through ``delta``.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from gsot.linalg import as_matrix, group_norm_12, nuclear_norm


class CostKind(str, Enum):
    INDICATOR = "indicator"
    GROUP = "group"
    NUCLEAR = "nuclear"


@dataclass(frozen=True)
class GroupCostSpec:
    kind: CostKind
    alpha: float
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "kind", CostKind(self.kind))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.lam > 0.0 or not math.isfinite(self.lam):
            raise ValueError(f"lambda must be positive and finite, got {self.lam}")

    @property
    def quad_weight(self):
        """Weight of ``||delta||_F^2`` inside the penalty ``lam * c_m``."""
        return self.lam * (1.0 - self.alpha)

    def strongly_concave(self):
        return self.alpha < 1.0


def rows_equal(delta):
    """Exact (bitwise) equality of every row with the first."""
    return bool(np.all(delta == delta[0:1, :]))


def nonsmooth_part(spec, delta):
    delta = as_matrix(delta, "delta")
    if spec.kind is CostKind.INDICATOR:
        return 0.0 if rows_equal(delta) else math.inf
    if spec.kind is CostKind.GROUP:
        return group_norm_12(delta)
    return nuclear_norm(delta)


def eval_cost(spec, delta):
    """Group cost c_m(x, x + delta); may be +inf for the indicator cost."""
    delta = as_matrix(delta, "delta")
    g = nonsmooth_part(spec, delta)
    quad = (1.0 - spec.alpha) * float(np.sum(delta * delta))
    if math.isinf(g):
        return math.inf
    return spec.alpha * g + quad


def is_permutation_invariant_witness(spec, delta, perm):
    """Check c_m(delta) == c_m(delta[perm]) for one row permutation.

    Permuting the rows of both the original and the transported group
    permutes the rows of ``delta``.
    """
    delta = as_matrix(delta, "delta")
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(delta.shape[0])):
        raise ValueError("perm is not a permutation of the row indices")
    a = eval_cost(spec, delta)
    b = eval_cost(spec, delta[perm])
    if math.isinf(a) or math.isinf(b):
        return a == b
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)
