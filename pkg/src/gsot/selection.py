"""Feature and basis selection from structured worst-case perturbations.

Both procedures sample ``R`` groups of ``m`` training rows, compute the
trained model's structured perturbation on each (inner ADMM maximizer or a
structured PGD attack) and aggregate:

* features: column L2 norms of every perturbation, summed over groups, then
  ranked (ties broken by lower column index);
* basis: all perturbation matrices stacked vertically; the top right singular
  vectors span the selected subspace.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from gsot.attacks import structured_pgd
from gsot.gdadmm import admm_inner_maximize
from gsot.groupcost import CostKind
from gsot.linalg import svd
from gsot.models import LabeledBatch
from gsot.rng import make_rng

SUBSPACE_ANGLE_WARN_DEG = 30.0


@dataclass
class FeatureReport:
    ranking: np.ndarray
    scores: np.ndarray
    k: int

    @property
    def selected(self):
        return self.ranking[:self.k]

    def lines(self):
        out = ["rank,feature,score"]
        for i, j in enumerate(self.ranking[:self.k]):
            out.append(f"{i + 1},{int(j)},{float(self.scores[j])!r}")
        return out


@dataclass
class BasisReport:
    basis: np.ndarray           # d x r, orthonormal columns
    singular_values: np.ndarray
    max_angle_deg: float
    warnings: list = field(default_factory=list)

    def lines(self):
        out = [f"# max pairwise principal angle between group subspaces: {self.max_angle_deg!r} deg"]
        out += [f"# warning: {w}" for w in self.warnings]
        d = self.basis.shape[0]
        out.append("component,score," + ",".join(f"v{j}" for j in range(d)))
        for i in range(self.basis.shape[1]):
            vals = ",".join(repr(float(v)) for v in self.basis[:, i])
            out.append(f"{i},{float(self.singular_values[i])!r},{vals}")
        return out


def _perturbations(model, data, spec, cfg, R, attack_cfg=None):
    rng = make_rng(cfg.seed)
    n = data.x.shape[0]
    for _ in range(R):
        idx = rng.integers(0, n, size=cfg.m)
        batch = LabeledBatch(data.x[idx], data.y[idx])
        if attack_cfg is None:
            state, _ = admm_inner_maximize(model, batch, spec, cfg)
            yield state.delta_aux
        else:
            yield structured_pgd(model, batch, attack_cfg)


def select_features(model, data, spec, cfg, k, R=20, attack_cfg=None):
    """Rank features by column norms of structured perturbations summed over R groups."""
    d = data.x.shape[1]
    if not 0 <= k <= d:
        raise ValueError(f"k={k} must lie in [0, d={d}]")
    if attack_cfg is None and spec.kind is not CostKind.GROUP:
        warnings.warn("feature selection expects a model trained with the group-norm cost",
                      stacklevel=2)
    scores = np.zeros(d)
    for delta in _perturbations(model, data, spec, cfg, R, attack_cfg):
        scores += np.sqrt(np.sum(delta * delta, axis=0))
    ranking = np.argsort(-scores, kind="stable")
    return FeatureReport(ranking, scores, k)


def _top_right(delta, r):
    res = svd(delta)
    return res.vt[:r].T, res.singular_values[:r]


def principal_angles_deg(a, b):
    """Principal angles (degrees) between the column spans of orthonormal a and b."""
    s = svd(a.T @ b).singular_values
    return np.degrees(np.arccos(np.clip(s, -1.0, 1.0)))


def select_basis(model, data, spec, cfg, r, R=20, attack_cfg=None):
    """Top-r right singular vectors of the stacked perturbations over R groups."""
    d = data.x.shape[1]
    if not 1 <= r <= min(cfg.m, d):
        raise ValueError(f"r={r} must lie in [1, min(m, d)]")
    if attack_cfg is None and spec.kind is not CostKind.NUCLEAR:
        warnings.warn("basis selection expects a model trained with the nuclear cost",
                      stacklevel=2)
    blocks, subspaces = [], []
    for delta in _perturbations(model, data, spec, cfg, R, attack_cfg):
        blocks.append(delta)
        if np.any(delta):
            subspaces.append(_top_right(delta, r)[0])
    basis, sv = _top_right(np.vstack(blocks), r)
    max_angle = 0.0
    for i in range(len(subspaces)):
        for j in range(i + 1, len(subspaces)):
            max_angle = max(max_angle, float(np.max(principal_angles_deg(subspaces[i], subspaces[j]))))
    notes = []
    if max_angle > SUBSPACE_ANGLE_WARN_DEG:
        notes.append(f"group subspaces disagree (principal angle {max_angle:.1f} deg > "
                     f"{SUBSPACE_ANGLE_WARN_DEG:.0f}); the selected basis is an average")
    if not subspaces:
        notes.append("all perturbations were zero; basis is arbitrary")
        max_angle = math.nan
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return BasisReport(basis, sv, max_angle, notes)
