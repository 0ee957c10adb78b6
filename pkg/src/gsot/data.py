"""Synthetic datasets with planted group-structured shifts, and CSV I/O."""

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from gsot.errors import ParseError
from gsot.fileio import write_csv_atomic
from gsot.linalg import as_matrix
from gsot.models import LabeledBatch
from gsot.rng import make_rng

SHIFT_KINDS = ("universal", "group-sparse", "low-rank")


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    split: str = "train"
    note: str = ""

    def __post_init__(self):
        self.x = as_matrix(self.x, "x")
        self.y = np.asarray(self.y, dtype=np.int64).reshape(-1)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("x and y lengths differ")
        if self.x.shape[0] < 2:
            raise ValueError("a dataset needs at least 2 samples")
        if np.any(self.y < 0):
            raise ValueError("labels must be non-negative")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def num_classes(self):
        return int(self.y.max()) + 1

    def batch(self, idx=None):
        if idx is None:
            return LabeledBatch(self.x, self.y)
        return LabeledBatch(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class PlantSpec:
    kind: str
    magnitude: float
    k: int = 1
    r: int = 1
    split: str = "test"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if self.magnitude < 0:
            raise ValueError("magnitude must be non-negative")


def gen_blobs(n, d, K, separation, seed=0, split="train"):
    """Unit-covariance Gaussian blobs.

    Class means are ``separation / sqrt(2)`` times distinct random orthonormal
    directions (pairwise distance exactly ``separation``), which needs K <= d;
    for K > d the means are random directions scaled to norm ``separation / 2``.
    Labels are assigned round-robin, so classes are balanced.
    """
    if K < 2:
        raise ValueError("need K >= 2")
    rng = make_rng(seed)
    means = _class_means(rng, d, K, separation)
    y = np.arange(n) % K
    x = means[y] + rng.standard_normal((n, d))
    return Dataset(x, y, split, f"blobs(n={n},d={d},K={K},sep={separation},seed={seed})")


def _class_means(rng, d, K, separation):
    if K <= d:
        q, _ = np.linalg.qr(rng.standard_normal((d, K)))
        return q.T * (separation / np.sqrt(2.0))
    if d == 1:
        return ((np.arange(K) - (K - 1) / 2.0) * separation)[:, None]
    dirs = rng.standard_normal((K, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs * (separation / 2.0)


def gen_planted_task(n, d, K, separation, support, seed=0, support_noise=1.0,
                     background=0.0):
    """Blobs whose strongest class signal lives inside a planted structure.

    ``support`` is either a list of column indices or a ``d x r`` matrix
    with orthonormal columns. Class means are separated by ``separation``
    inside the support, where the noise has standard deviation
    ``support_noise``; for two classes the means are antipodal and load
    every support coordinate equally, so each planted feature carries
    signal. With ``background > 0`` the orthogonal complement
    carries a weaker, redundant copy of the class signal (means separated by
    ``background``, unit noise), spread over many coordinates. With the
    defaults, labels depend only on the support.
    """
    rng = make_rng(seed)
    support = np.asarray(support)
    if support.ndim == 1:
        basis = np.zeros((d, support.size))
        basis[support, np.arange(support.size)] = 1.0
    else:
        basis = support
    r = basis.shape[1]
    y = np.arange(n) % K
    if K == 2:
        # antipodal means loading every support coordinate equally
        signs = rng.choice([-1.0, 1.0], size=r)
        u = signs / np.sqrt(r)
        means = np.stack([-u, u]) * (separation / 2.0)
    else:
        means = _class_means(rng, r, K, separation)
    z = means[y] + support_noise * rng.standard_normal((n, r))
    x = z @ basis.T
    comp = np.eye(d) - basis @ basis.T
    noise = rng.standard_normal((n, d))
    if background > 0 and r < d:
        q, _ = np.linalg.qr(comp @ rng.standard_normal((d, d - r)))
        q = q[:, :d - r]
        low = _class_means(rng, d - r, K, background)
        noise = noise + low[y] @ q.T
    x = x + noise @ comp
    return Dataset(x, y, "train",
                   f"planted(n={n},d={d},K={K},support={r},bg={background},seed={seed})")


def shift_matrix(n, d, spec):
    """The additive shift that :func:`plant_shift` applies, and its support.

    Returns ``(delta, support)`` where support is the column list
    (group-sparse), the ``d x r`` row-space basis (low-rank) or the shared
    unit vector (universal).
    """
    rng = make_rng(spec.seed)
    if spec.kind == "universal":
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        return np.tile(spec.magnitude * v, (n, 1)), v
    if spec.kind == "group-sparse":
        if spec.k > d or spec.k < 1:
            raise ValueError(f"k={spec.k} must lie in [1, d={d}]")
        cols = np.sort(rng.choice(d, size=spec.k, replace=False))
        v = np.zeros(d)
        v[cols] = rng.standard_normal(spec.k)
        v /= np.linalg.norm(v)
        return np.tile(spec.magnitude * v, (n, 1)), cols
    if spec.r > min(n, d) or spec.r < 1:
        raise ValueError(f"r={spec.r} must lie in [1, min(n, d)={min(n, d)}]")
    basis, _ = np.linalg.qr(rng.standard_normal((d, spec.r)))
    coef = rng.standard_normal((n, spec.r))
    norms = np.linalg.norm(coef, axis=1, keepdims=True)
    coef = np.divide(coef, norms, out=np.zeros_like(coef), where=norms > 0)
    return spec.magnitude * coef @ basis.T, basis


def plant_shift(ds, spec):
    """Add a structured shift to every row; labels are untouched."""
    delta, _ = shift_matrix(ds.n, ds.d, spec)
    return replace(ds, x=ds.x + delta, y=ds.y.copy(),
                   note=f"{ds.note}+shift({spec.kind},{spec.magnitude})")


def train_test_split(ds, test_fraction, seed=0):
    """Disjoint random split."""
    rng = make_rng(seed)
    perm = rng.permutation(ds.n)
    n_test = int(round(test_fraction * ds.n))
    if not 2 <= n_test <= ds.n - 2:
        raise ValueError("split leaves fewer than 2 samples on one side")
    te, tr = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return (Dataset(ds.x[tr], ds.y[tr], "train", ds.note),
            Dataset(ds.x[te], ds.y[te], "test", ds.note))


def mean_feature_norm(ds):
    x = ds.x if hasattr(ds, "x") else as_matrix(ds)
    return float(np.mean(np.sqrt(np.sum(x * x, axis=1))))


def one_hot_encode(x):
    """Expand each integer-valued column into indicator columns (sorted levels)."""
    x = as_matrix(x)
    cols = []
    for j in range(x.shape[1]):
        levels = np.unique(x[:, j])
        cols.append((x[:, j:j + 1] == levels[None, :]).astype(np.float64))
    return np.hstack(cols)


# --- CSV ---------------------------------------------------------------------

def save_csv(ds, path):
    """Header ``f0,...,f{d-1},label``; values written with full precision."""
    header = [f"f{j}" for j in range(ds.d)] + ["label"]
    rows = [[repr(float(v)) for v in row] + [int(label)] for row, label in zip(ds.x, ds.y)]
    write_csv_atomic(path, header, rows)


def load_csv(path, split="train", onehot=False):
    x_rows, y = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if not header or header[-1] != "label":
            raise ParseError("header must end with a 'label' column", line=1)
        d = len(header) - 1
        if d < 1 or header[:-1] != [f"f{j}" for j in range(d)]:
            raise ParseError("feature columns must be named f0..f{d-1}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if len(row) != d + 1:
                raise ParseError(f"expected {d + 1} fields, got {len(row)}", line=lineno)
            try:
                feats = [float(c) for c in row[:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if label < 0:
                raise ParseError("labels must be non-negative", line=lineno)
            x_rows.append(feats)
            y.append(label)
    if len(y) < 2:
        raise ParseError("need at least 2 data rows")
    x = np.array(x_rows, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ParseError("non-finite feature value")
    if onehot:
        x = one_hot_encode(x)
    return Dataset(x, np.array(y), split, os.path.basename(path))
