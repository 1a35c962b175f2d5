"""Compiled inner loops of the glasso solver."""

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def primal_sweep(theta, w, t, lam, inner_tol, max_inner):
    """One cyclic pass over the columns of ``theta``, updating it in place.

    For column j, with ``H = inv(theta_11)`` obtained from ``w = inv(theta)``,
    the lasso ``min_a 0.5 a'Ha + t_12'a + sum_k lam_kj |a_k|`` is solved by
    cyclic coordinate descent warm-started at ``a = w_22' theta_12``, where
    ``w_22' = t_jj + lam_jj``. Then ``theta_12 = a / w_22'`` and
    ``theta_22 = 1/w_22' + a'Ha / w_22'^2``; ``w`` is kept equal to
    ``inv(theta)`` by rank-one updates.

    Returns the number of columns whose inner loop hit ``max_inner``.
    """
    d = theta.shape[0]
    alpha = np.zeros(d)
    g = np.zeros(d)
    wcol = np.zeros(d)
    hdiag = np.zeros(d)
    capped = 0
    for j in range(d):
        wjj = w[j, j]
        w22n = t[j, j] + lam[j, j]
        for k in range(d):
            wcol[k] = w[k, j]
        for k in range(d):
            if k == j:
                alpha[k] = 0.0
            else:
                alpha[k] = w22n * theta[k, j]
        # g = H alpha with H_km = w_km - w_kj w_mj / w_jj (k, m != j)
        for k in range(d):
            g[k] = 0.0
        for k in range(d):
            if k == j:
                continue
            hdiag[k] = w[k, k] - wcol[k] * wcol[k] / wjj
            acc = 0.0
            for m in range(d):
                if m == j:
                    continue
                acc += (w[k, m] - wcol[k] * wcol[m] / wjj) * alpha[m]
            g[k] = acc
        it = 0
        while it < max_inner:
            it += 1
            maxchg = 0.0
            for k in range(d):
                if k == j:
                    continue
                hkk = hdiag[k]
                old = alpha[k]
                z = -(t[k, j] + g[k] - hkk * old)
                new = _soft(z, lam[k, j]) / hkk
                delta = new - old
                if delta != 0.0:
                    alpha[k] = new
                    for m in range(d):
                        if m == j:
                            continue
                        g[m] += (w[m, k] - wcol[m] * wcol[k] / wjj) * delta
                    chg = abs(delta) * hkk
                    if chg > maxchg:
                        maxchg = chg
            if maxchg <= inner_tol:
                break
        if it >= max_inner:
            capped += 1
        # new column of theta
        quad = 0.0
        for k in range(d):
            if k != j:
                quad += alpha[k] * g[k]
        for k in range(d):
            if k == j:
                continue
            theta[k, j] = alpha[k] / w22n
            theta[j, k] = theta[k, j]
        theta[j, j] = 1.0 / w22n + quad / (w22n * w22n)
        # w = inv(theta): W11 <- H + g g' / w22n, w12 <- -g, w22 <- w22n
        for k in range(d):
            if k == j:
                continue
            for m in range(d):
                if m == j:
                    continue
                w[k, m] = w[k, m] - wcol[k] * wcol[m] / wjj + g[k] * g[m] / w22n
        for k in range(d):
            if k == j:
                continue
            w[k, j] = -g[k]
            w[j, k] = -g[k]
        w[j, j] = w22n
    return capped


@njit(cache=True)
def dual_sweep(w, beta, t, lam, inner_tol, max_inner):
    """One cyclic pass of block coordinate ascent on the dual, in place.

    For column j the lasso ``min_b 0.5 b'W11 b - t_12'b + sum_k lam_kj |b_k|``
    is solved by coordinate descent warm-started at ``beta[:, j]``, and then
    ``w_12 <- W11 b``. The diagonal of ``w`` is left untouched.

    Returns the largest change of an off-diagonal entry of ``w``.
    """
    d = w.shape[0]
    g = np.zeros(d)
    dwmax = 0.0
    for j in range(d):
        for k in range(d):
            if k == j:
                continue
            acc = 0.0
            for m in range(d):
                if m != j:
                    acc += w[k, m] * beta[m, j]
            g[k] = acc
        for _ in range(max_inner):
            maxchg = 0.0
            for k in range(d):
                if k == j:
                    continue
                wkk = w[k, k]
                old = beta[k, j]
                new = _soft(t[k, j] - (g[k] - wkk * old), lam[k, j]) / wkk
                delta = new - old
                if delta != 0.0:
                    beta[k, j] = new
                    # w is symmetric, so read row k instead of column k
                    for m in range(d):
                        if m != j:
                            g[m] += w[k, m] * delta
                    chg = abs(delta) * wkk
                    if chg > maxchg:
                        maxchg = chg
            if maxchg <= inner_tol:
                break
        for k in range(d):
            if k == j:
                continue
            chg = abs(w[k, j] - g[k])
            if chg > dwmax:
                dwmax = chg
            w[k, j] = g[k]
            w[j, k] = g[k]
    return dwmax


@njit(cache=True)
def theta_from_beta(w, beta):
    """Precision implied by the dual iterate: ``theta_22 = 1/(w_22 - w_12'b)``,
    ``theta_12 = -b theta_22`` column by column (not symmetrized)."""
    d = w.shape[0]
    theta = np.zeros((d, d))
    for j in range(d):
        acc = w[j, j]
        for k in range(d):
            if k != j:
                acc -= w[k, j] * beta[k, j]
        # a nonpositive Schur complement means the iterate is not yet PD
        t22 = 1.0 / acc if acc > 0.0 else np.nan
        for k in range(d):
            if k != j:
                theta[k, j] = -beta[k, j] * t22
        theta[j, j] = t22
    return theta
