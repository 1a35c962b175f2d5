import numpy as np
import pytest

from conftest import random_spd
from kroncov.errors import MaxSweepsExceeded, NotPositiveDefinite
from kroncov.glasso import (GlassoOptions, check_dual_feasibility, duality_gap, glasso_oracle,
                            glasso_solve, primal_objective)
from kroncov.matkit import is_spd
from kroncov.sampler import derive_rng


def singular_cov(seed, d, n):
    z = derive_rng(seed).standard_normal((n, d))
    return z.T @ z / n


def test_unpenalized_is_inverse():
    res = glasso_solve(np.array([[2.0, 1.0], [1.0, 2.0]]), 0.0)
    np.testing.assert_allclose(res.theta, [[2 / 3, -1 / 3], [-1 / 3, 2 / 3]], atol=1e-6)
    assert res.gap <= 1e-10


def test_identity_input():
    for lam in (0.1, 0.5, 2.0):
        res = glasso_solve(np.eye(4), lam)
        np.testing.assert_allclose(res.theta, np.eye(4) / (1 + lam), atol=1e-12)


def test_box_contains_scaled_identity():
    res = glasso_solve(np.array([[1.0, 0.3], [0.3, 1.0]]), 0.3)
    np.testing.assert_allclose(res.theta, np.eye(2) / 1.3, atol=1e-12)


def test_singular_input_requires_penalty():
    t = singular_cov(0, 5, 2)
    with pytest.raises(NotPositiveDefinite):
        glasso_solve(t, 0.0)
    res = glasso_solve(t, 0.1)
    assert is_spd(res.theta)


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        glasso_solve(np.eye(2), -0.1)


def test_options_validation():
    with pytest.raises(ValueError):
        GlassoOptions(gap_tol=0.0)
    with pytest.raises(ValueError):
        GlassoOptions(max_sweeps=0)


def test_gap_examples():
    t = np.array([[2.0, 1.0], [1.0, 2.0]])
    assert duality_gap(np.linalg.inv(t), t, 0.0) <= 1e-10
    assert duality_gap(np.eye(3) / 1.4, np.eye(3), 0.4) <= 1e-10
    assert duality_gap(np.linalg.inv(t) + 0.1 * np.eye(2), t, 0.0) > 0


def test_dual_feasibility_examples():
    t = random_spd(np.random.default_rng(0), 3)
    assert check_dual_feasibility(t, t, 0.0)
    assert not check_dual_feasibility(t + 0.6 * np.eye(3), t, 0.3)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("lam", [0.02, 0.1, 0.3])
def test_solution_is_certified(seed, lam):
    t = singular_cov(seed, 12, 6 + seed)
    res = glasso_solve(t, lam)
    assert is_spd(res.theta)
    assert res.gap <= 1e-3
    assert check_dual_feasibility(np.linalg.inv(res.theta), t, lam, slack_tol=1e-6)


@pytest.mark.parametrize("seed", range(10))
def test_primal_objective_nonincreasing_over_sweeps(seed):
    d, n = (8, 30)[seed % 2], (4, 50)[seed // 2 % 2]
    t = singular_cov(100 + seed, d, n)
    values = []
    glasso_solve(t, 0.1, trace=lambda sweep, gap, primal: values.append(primal))
    finite = [v for v in values if np.isfinite(v)]
    assert finite
    assert all(b <= a + 1e-10 for a, b in zip(finite, finite[1:]))


@pytest.mark.parametrize("penalize_diagonal", [True, False])
def test_screening_gives_exact_diagonal(penalize_diagonal):
    t = np.array([[2.0, 0.2, -0.1], [0.2, 1.0, 0.05], [-0.1, 0.05, 3.0]])
    lam = 0.25
    res = glasso_solve(t, lam, GlassoOptions(penalize_diagonal=penalize_diagonal))
    off = res.theta[~np.eye(3, dtype=bool)]
    assert np.all(off == 0.0)
    shift = lam if penalize_diagonal else 0.0
    np.testing.assert_allclose(np.diag(res.theta), 1.0 / (np.diag(t) + shift), rtol=1e-12)
    np.testing.assert_allclose(glasso_oracle(t, lam, penalize_diagonal=penalize_diagonal),
                               res.theta, atol=1e-4)


def test_unpenalized_diagonal_variant_matches_oracle():
    for seed in range(10):
        t = random_spd(derive_rng(seed), 3)
        res = glasso_solve(t, 0.1, GlassoOptions(penalize_diagonal=False))
        np.testing.assert_allclose(res.theta, glasso_oracle(t, 0.1, penalize_diagonal=False),
                                   atol=1e-4)


def test_oracle_lambda_zero():
    t = np.array([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(glasso_oracle(t, 0.0), np.linalg.inv(t))
    with pytest.raises(ValueError):
        glasso_oracle(np.eye(4), 0.1)


def test_warm_start_never_worse():
    t = singular_cov(3, 10, 5)
    cold = glasso_solve(t, 0.1)
    warm = glasso_solve(t, 0.1, theta_init=cold.theta)
    assert primal_objective(warm.theta, t, 0.1) <= primal_objective(cold.theta, t, 0.1) + 1e-12
    with pytest.raises(NotPositiveDefinite):
        glasso_solve(t, 0.1, theta_init=-np.eye(10))


def test_max_sweeps_carries_best_iterate():
    t = singular_cov(4, 30, 5)
    with pytest.raises(MaxSweepsExceeded) as info:
        glasso_solve(t, 0.01, GlassoOptions(gap_tol=1e-12, max_sweeps=2))
    assert info.value.sweeps == 2
    assert info.value.theta is None or is_spd(info.value.theta)


def test_deterministic():
    t = singular_cov(5, 15, 6)
    a = glasso_solve(t, 0.05)
    b = glasso_solve(t, 0.05)
    assert np.array_equal(a.theta, b.theta)
