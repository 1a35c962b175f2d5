import numpy as np
from hypothesis import given, settings, strategies as st

from kroncov.glasso import check_dual_feasibility, glasso_solve
from kroncov.matkit import BlockView, chol_inv_logdet, kron, permute_kron
from kroncov.sampler import derive_rng, gen_er_precision

seeds = st.integers(0, 2 ** 32 - 1)
dims = st.integers(1, 5)


def spd(seed, d):
    g = derive_rng(seed).standard_normal((d, d + 1))
    return g @ g.T / (d + 1) + 0.3 * np.eye(d)


@given(seeds, dims, dims)
def test_permute_kron_swaps_any_factors(seed, p, f):
    rng = derive_rng(seed)
    a, b = rng.standard_normal((p, p)), rng.standard_normal((f, f))
    assert np.array_equal(permute_kron(kron(a, b), p, f), kron(b, a))


@given(seeds, dims, dims)
def test_blocks_reassemble(seed, p, f):
    m = derive_rng(seed).standard_normal((p * f, p * f))
    view = BlockView(m, p, f)
    rebuilt = np.block([[view.block(i, j) for j in range(p)] for i in range(p)])
    assert np.array_equal(rebuilt, m)


@given(seeds, dims)
def test_chol_inverse(seed, d):
    m = spd(seed, d)
    inv, ld = chol_inv_logdet(m)
    np.testing.assert_allclose(inv @ m, np.eye(d), atol=1e-8)
    np.testing.assert_allclose(ld, np.linalg.slogdet(m)[1], atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(2, 8), st.integers(1, 10), st.floats(0.01, 1.0))
def test_glasso_certificate(seed, d, n, lam):
    z = derive_rng(seed).standard_normal((n, d))
    t = z.T @ z / n
    res = glasso_solve(t, lam)
    np.linalg.cholesky(res.theta)
    assert res.gap <= 1e-3
    assert check_dual_feasibility(np.linalg.inv(res.theta), t, lam, slack_tol=1e-6)


@given(seeds, st.integers(1, 12), st.floats(0.0, 1.0))
def test_er_precision_floor(seed, d, prob):
    y = gen_er_precision(d, prob, 0.05, seed)
    assert np.array_equal(y, y.T)
    assert abs(np.linalg.eigvalsh(y)[0] - 0.05) < 1e-8
