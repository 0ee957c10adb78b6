import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gsot.groupcost import CostKind
from gsot.prox import (prox, prox_equal_rows, prox_group_columns, prox_objective, prox_oracle,
                       prox_singular_values)


def test_equal_rows_examples(rng):
    out = prox_equal_rows([[1, 1], [3, 3]])
    assert np.array_equal(out, [[2, 2], [2, 2]])
    v = np.tile([[0.5, -2.0, 3.0]], (4, 1))
    assert np.array_equal(prox_equal_rows(v), v)
    v = rng.standard_normal((5, 3))
    design = np.ones((5, 1))
    r, *_ = np.linalg.lstsq(design, v, rcond=None)
    assert np.allclose(prox_equal_rows(v), design @ r, atol=1e-14)


def test_group_columns_examples(rng):
    assert np.allclose(prox_group_columns([[3.0], [4.0]], 1.0), [[2.4], [3.2]], atol=1e-15)
    v = np.array([[0.3, 5.0], [0.4, 0.0]])
    out = prox_group_columns(v, 0.5)
    assert np.all(out[:, 0] == 0.0)
    assert np.array_equal(prox_group_columns(np.zeros((2, 2)), 0.1), np.zeros((2, 2)))
    v = rng.standard_normal((4, 3))
    ref = prox_oracle("group", v, 0.3)
    assert np.linalg.norm(prox_group_columns(v, 0.3) - ref) < 1e-6


def test_singular_values_examples(rng):
    out = prox_singular_values(np.diag([3.0, 1.0]), 2.0)
    assert np.allclose(out, np.diag([1.0, 0.0]), atol=1e-14)
    v = rng.standard_normal((4, 5))
    assert np.linalg.norm(prox_singular_values(v, 0.0) - v) < 1e-8


def test_singular_values_subdifferential(rng):
    xi = 0.5
    v = rng.standard_normal((4, 4))
    out = prox_singular_values(v, xi)
    u, s, vt = np.linalg.svd(out)
    r = int(np.sum(s > 1e-10))
    U, V = u[:, :r], vt[:r].T
    g = (v - out) / xi
    w = g - U @ V.T
    assert r >= 1
    assert np.linalg.norm(w, 2) <= 1 + 1e-9
    assert np.allclose(U.T @ w, 0, atol=1e-9)
    assert np.allclose(w @ V, 0, atol=1e-9)


@pytest.mark.parametrize("kind,shape", [("group", (4, 3)), ("nuclear", (4, 4))])
def test_oracle_self_consistency(kind, shape):
    r = np.random.default_rng(7)
    for _ in range(20):
        v = r.standard_normal(shape)
        xi = float(r.uniform(0.05, 1.5))
        closed = prox(kind, v, xi)
        ref = prox_oracle(kind, v, xi)
        assert prox_objective(kind, v, closed, xi) <= prox_objective(kind, v, ref, xi) + 1e-6
        assert np.linalg.norm(closed - ref) < 1e-4


@pytest.mark.parametrize("kind", ["group", "nuclear", "indicator"])
def test_oracle_identity_at_zero_threshold(kind, rng):
    v = rng.standard_normal((3, 3))
    out = prox_oracle(kind, v, 0.0)
    if kind == "indicator":
        assert np.allclose(out, prox_equal_rows(v))
    else:
        assert np.array_equal(out, v)


def test_oracle_rejects_large():
    with pytest.raises(ValueError):
        prox_oracle("group", np.ones((9, 8)), 0.1)


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        prox_group_columns(np.ones((2, 2)), -1.0)
    with pytest.raises(ValueError):
        prox_singular_values(np.ones((2, 2)), -1.0)


def test_objective_dominance(rng):
    for kind in CostKind:
        v = rng.standard_normal((4, 3))
        out = prox(kind, v, 0.4)
        assert prox_objective(kind, v, out, 0.4) <= prox_objective(kind, v, v, 0.4) + 1e-12


def test_large_threshold_sends_to_zero(rng):
    v = rng.standard_normal((4, 3))
    assert not np.any(prox_group_columns(v, 1e6))
    assert np.allclose(prox_singular_values(v, 1e6), 0.0, atol=1e-12)


def test_equivariance(rng):
    v = rng.standard_normal((4, 3))
    perm = np.array([2, 0, 1])
    assert np.allclose(prox_group_columns(v[:, perm], 0.7), prox_group_columns(v, 0.7)[:, perm])
    left = np.eye(4)[[3, 1, 0, 2]]
    right = np.eye(3)[perm]
    assert np.allclose(prox_singular_values(left @ v @ right, 0.7),
                       left @ prox_singular_values(v, 0.7) @ right, atol=1e-12)


pairs = st.tuples(st.integers(1, 5), st.integers(1, 5)).flatmap(
    lambda s: st.tuples(*[arrays(np.float64, s, elements=st.floats(-5, 5, allow_nan=False))] * 2))


@settings(max_examples=300)
@given(pairs, st.sampled_from(list(CostKind)), st.floats(0, 3))
def test_non_expansive(p, kind, xi):
    a, b = p
    lhs = np.linalg.norm(prox(kind, a, xi) - prox(kind, b, xi))
    assert lhs <= np.linalg.norm(a - b) * (1 + 1e-9) + 1e-9
