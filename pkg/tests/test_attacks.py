import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsot.attacks import (AttackConfig, attack_in_groups, average_norm, clip_rows, fgsm_attack,
                          pgd_attack, project_group_sparse, project_low_rank, project_universal,
                          run_attack, structured_pgd)
from gsot.linalg import numerical_rank
from gsot.models import ModelParams, init_params, loss_and_grads, make_batch, mean_loss


def constant_model(d=3, K=2):
    return ModelParams("linear-softmax", d, K, weights={"W": np.zeros((d, K)),
                                                        "b": np.array([1.0] + [0.0] * (K - 1))})


def instance(seed, m=6, d=4):
    r = np.random.default_rng(seed)
    p = init_params("mlp-elu", d, 3, 6, seed=seed)
    return p, make_batch(r.standard_normal((m, d)), r.integers(0, 3, size=m))


def test_universal_projection_example():
    assert np.array_equal(project_universal(np.array([[1.0, 0.0], [3.0, 0.0]])),
                          [[2.0, 0.0], [2.0, 0.0]])


def test_group_sparse_projection_example():
    delta = np.array([[3.0, 0.0], [0.0, 4.0]])
    out = clip_rows(project_group_sparse(delta, 1), 2.0)
    assert np.all(out[:, 0] == 0.0)
    assert np.allclose(out[:, 1], [0.0, 2.0])


def test_group_sparse_ties_lower_index():
    out = project_group_sparse(np.array([[1.0, 1.0, 0.5]]), 1)
    assert np.array_equal(out, [[1.0, 0.0, 0.0]])


def test_low_rank_projection_eckart_young(rng):
    a = rng.standard_normal((5, 2)) @ rng.standard_normal((2, 4))
    out = project_low_rank(a, 1)
    u, s, vt = np.linalg.svd(a)
    assert np.allclose(out, s[0] * np.outer(u[:, 0], vt[0]), atol=1e-10)
    assert np.linalg.norm(a - out) == pytest.approx(s[1], rel=1e-9)


@pytest.mark.parametrize("kind,param", [("universal", None), ("group-sparse", 2), ("low-rank", 1)])
def test_structured_postconditions(kind, param):
    for seed in range(5):
        p, b = instance(seed)
        cfg = AttackConfig(kind, 20, 0.1, 0.7, k=param or 0, r=param or 0)
        delta = structured_pgd(p, b, cfg)
        assert np.all(np.linalg.norm(delta, axis=1) <= 0.7 + 1e-12)
        if kind == "universal":
            assert np.all(delta == delta[0])
        elif kind == "group-sparse":
            assert np.sum(np.any(delta != 0, axis=0)) <= 2
        else:
            assert numerical_rank(delta) <= 1
        assert mean_loss(p, make_batch(b.x + delta, b.y)) >= mean_loss(p, b) - 1e-9


def test_zero_structure_parameter_is_clean():
    p, b = instance(0)
    assert not np.any(structured_pgd(p, b, AttackConfig("group-sparse", 5, 0.1, 1.0, k=0)))


def test_pgd_constant_model_is_zero():
    p = constant_model()
    b = make_batch(np.ones((3, 3)), [0, 1, 0])
    assert not np.any(pgd_attack(p, b, AttackConfig("pgd", 10, 0.1, 1.0)))
    assert not np.any(fgsm_attack(p, b, AttackConfig("fgsm", 1, 0.1, 1.0)))


def test_pgd_first_step_follows_gradient():
    p, b = instance(3)
    delta = pgd_attack(p, b, AttackConfig("pgd", 1, 1e-6, 1.0))
    g = loss_and_grads(p, b).grad_x
    cos = np.sum(delta * g, axis=1) / (np.linalg.norm(delta, axis=1) * np.linalg.norm(g, axis=1))
    assert np.allclose(cos, 1.0, atol=1e-12)
    # first-order increase of the loss matches the directional derivative
    gain = mean_loss(p, make_batch(b.x + delta, b.y)) - mean_loss(p, b)
    assert gain == pytest.approx(np.sum(g * delta), rel=1e-4)


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.integers(1, 30), st.floats(0.01, 2.0))
def test_pgd_budget_and_damage(seed, steps, budget):
    p, b = instance(seed)
    delta = pgd_attack(p, b, AttackConfig("pgd", steps, budget / 4, budget))
    assert np.all(np.linalg.norm(delta, axis=1) <= budget + 1e-12)
    assert mean_loss(p, make_batch(b.x + delta, b.y)) >= mean_loss(p, b) - 1e-9


def test_fgsm_sign_then_normalize():
    p = ModelParams("linear-softmax", 2, 2, weights={"W": np.array([[-0.5, 0.5], [1.0, -1.0]]),
                                                     "b": np.zeros(2)})
    b = make_batch([[0.0, 0.0]], [0])
    g = loss_and_grads(p, b).grad_x
    assert np.allclose(np.sign(g), [[1.0, -1.0]])
    delta = fgsm_attack(p, b, AttackConfig("fgsm", 1, 0.0, 0.3))
    assert np.allclose(delta, 0.3 * np.array([[1.0, -1.0]]) / np.sqrt(2))


def test_fgsm_row_norms(rng):
    p, b = instance(8)
    cfg = AttackConfig("fgsm", 5, 0.1, 0.4)
    assert cfg.steps == 1
    delta = fgsm_attack(p, b, cfg)
    assert np.allclose(np.linalg.norm(delta, axis=1), 0.4)


def test_average_norm():
    assert average_norm(np.array([[3.0, 0.0], [0.0, 5.0]])) == 4.0
    assert average_norm(np.zeros((2, 2))) == 0.0
    a = np.random.default_rng(1).standard_normal((7, 3))
    assert average_norm(a) == pytest.approx(np.mean([np.linalg.norm(r) for r in a]), rel=1e-14)


def test_attack_in_groups_matches_per_group():
    p, b = instance(4, m=10)
    cfg = AttackConfig("low-rank", 5, 0.1, 0.5, r=3)
    out = attack_in_groups(p, b, cfg, group_size=4)
    first = run_attack(p, make_batch(b.x[:4], b.y[:4]), cfg)
    last = run_attack(p, make_batch(b.x[8:], b.y[8:]), AttackConfig("low-rank", 5, 0.1, 0.5, r=2))
    assert np.array_equal(out[:4], first)
    assert np.array_equal(out[8:], last)


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig("linf", 1, 0.1, 1.0)
    with pytest.raises(ValueError):
        AttackConfig("pgd", 0, 0.1, 1.0)
    with pytest.raises(ValueError):
        AttackConfig("pgd", 1, 0.1, 0.0)
