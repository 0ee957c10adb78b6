import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gsot import linalg
from gsot._jacobi_py import orthogonalize_rows as py_orthogonalize
from gsot.errors import NumericalFailure
from gsot.linalg import frobenius_norm, group_norm_12, max_abs, nuclear_norm, numerical_rank, svd

from oracles import singular_values_oracle, sum_of_squares_loop


def assert_svd_contract(a, res):
    m, d = a.shape
    k = min(m, d)
    assert res.u.shape == (m, k)
    assert res.singular_values.shape == (k,)
    assert res.vt.shape == (k, d)
    s = res.singular_values
    assert np.all(s >= 0)
    assert np.all(np.diff(s) <= 0)
    resid = np.linalg.norm(res.reconstruct() - a)
    assert resid <= 1e-8 * max(1.0, np.linalg.norm(a))
    assert np.allclose(res.u.T @ res.u, np.eye(k), atol=1e-10)
    assert np.allclose(res.vt @ res.vt.T, np.eye(k), atol=1e-10)


def test_frobenius_examples(rng):
    assert frobenius_norm([[3, 4], [0, 0]]) == 5.0
    assert frobenius_norm(np.zeros((3, 2))) == 0.0
    a = rng.standard_normal((5, 4))
    assert frobenius_norm(a) == pytest.approx(np.sqrt(sum_of_squares_loop(a)), rel=1e-14)


def test_group_norm_examples(rng):
    assert group_norm_12([[3, 4], [0, 0]]) == 7.0
    assert group_norm_12(np.zeros((2, 2))) == 0.0
    a = rng.standard_normal((4, 3))
    expected = sum(np.sqrt(sum_of_squares_loop(a[:, [j]])) for j in range(3))
    assert group_norm_12(a) == pytest.approx(expected, rel=1e-14)


def test_nuclear_examples(rng):
    assert nuclear_norm(np.diag([3.0, 1.0])) == pytest.approx(4.0, abs=1e-14)
    u = np.array([2.0, 0.0, 0.0])
    v = np.array([0.0, 3.0 / np.sqrt(2), 3.0 / np.sqrt(2)])
    assert nuclear_norm(np.outer(u, v)) == pytest.approx(6.0, abs=1e-12)
    a = rng.standard_normal((4, 4))
    assert abs(nuclear_norm(a) - singular_values_oracle(a).sum()) < 1e-8


def test_svd_examples(rng):
    res = svd(np.eye(3))
    assert np.allclose(res.singular_values, 1.0, atol=1e-15)
    res = svd(np.diag([5.0, 2.0]))
    assert np.allclose(res.singular_values, [5.0, 2.0], atol=1e-15)
    assert np.allclose(np.abs(res.u), np.eye(2), atol=1e-15)
    assert np.allclose(np.abs(res.vt), np.eye(2), atol=1e-15)
    a = rng.standard_normal((6, 4))
    res = svd(a)
    assert_svd_contract(a, res)
    assert np.allclose(res.singular_values, singular_values_oracle(a), atol=1e-10)


def test_svd_ascending_diagonal_is_sorted():
    res = svd(np.diag([1.0, 2.0, 7.0]))
    assert np.allclose(res.singular_values, [7.0, 2.0, 1.0])
    assert_svd_contract(np.diag([1.0, 2.0, 7.0]), res)


@pytest.mark.parametrize("shape", [(1, 1), (1, 5), (5, 1), (3, 7), (7, 3)])
def test_svd_thin_shapes(rng, shape):
    a = rng.standard_normal(shape)
    assert_svd_contract(a, svd(a))


def test_svd_rank_deficient(rng):
    a = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 5))
    res = svd(a)
    assert_svd_contract(a, res)
    assert numerical_rank(a) == 2
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert_svd_contract(np.zeros((3, 2)), svd(np.zeros((3, 2))))


def test_svd_rejects_non_finite():
    with pytest.raises(ValueError):
        svd([[1.0, np.nan]])
    with pytest.raises(ValueError):
        frobenius_norm(np.zeros((0, 3)))


def test_svd_iteration_cap(monkeypatch):
    monkeypatch.setattr(linalg, "MAX_SWEEPS", 0)
    with pytest.raises(NumericalFailure):
        svd(np.array([[1.0, 2.0], [3.0, 4.0]]))


matrices = st.tuples(st.integers(1, 16), st.integers(1, 16)).flatmap(
    lambda s: arrays(np.float64, s, elements=st.floats(-1e3, 1e3, allow_nan=False, width=64))
)


@settings(max_examples=1000)
@given(matrices)
def test_svd_fuzz(a):
    res = svd(a)
    assert_svd_contract(a, res)
    ref = np.linalg.svd(a, compute_uv=False)
    assert np.allclose(res.singular_values, ref, atol=1e-9 * max(1.0, ref[0]))


@settings(max_examples=200)
@given(matrices)
def test_norm_ordering(a):
    nuc, fro, mx = nuclear_norm(a), frobenius_norm(a), max_abs(a)
    slack = 1e-9 * max(1.0, nuc)
    assert nuc + slack >= fro >= mx - slack
    zero = not np.any(a)
    assert (nuc == 0.0) == zero and (fro == 0.0) == zero and (mx == 0.0) == zero


@settings(max_examples=200)
@given(matrices, st.randoms(use_true_random=False))
def test_group_norm_row_permutation_invariant(a, r):
    perm = list(range(a.shape[0]))
    r.shuffle(perm)
    assert group_norm_12(a[perm]) == pytest.approx(group_norm_12(a), rel=1e-12, abs=1e-12)


def test_backend_parity(rng):
    """The compiled kernel and the numpy fallback produce the same SVD."""
    for shape in [(4, 3), (8, 8), (3, 9)]:
        a = rng.standard_normal(shape)
        g = np.ascontiguousarray(a.T if shape[0] >= shape[1] else a).copy()
        q = np.eye(g.shape[0])
        g2, q2 = g.copy(), q.copy()
        linalg.orthogonalize_rows(g, q, linalg.ROTATION_TOL, linalg.MAX_SWEEPS, 0.0)
        py_orthogonalize(g2, q2, linalg.ROTATION_TOL, linalg.MAX_SWEEPS, 0.0)
        assert np.allclose(g, g2, atol=1e-12)
        assert np.allclose(q, q2, atol=1e-12)


def test_pure_python_switch():
    code = ("import numpy as np; from gsot import linalg; "
            "print(linalg.BACKEND); print(linalg.nuclear_norm(np.diag([3.0, 1.0])))")
    env = dict(os.environ, GSOT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.split()
    assert out[0] == "python"
    assert float(out[1]) == pytest.approx(4.0, abs=1e-14)
