"""l1-penalized log-determinant solver.

Solves ``min_{Theta > 0} tr(Theta T) - logdet Theta + sum_ij L_ij |Theta_ij|``
with ``L_ij = lam`` (the diagonal optionally unpenalized). The dual is
``max logdet W  s.t.  |W - T| <= L`` elementwise, and the solver stops once
the primal-dual gap and the optimality residual of ``inv(Theta)`` are both
small.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._kernels import dual_sweep, primal_sweep, theta_from_beta
from .errors import MaxSweepsExceeded, NotPositiveDefinite
from .matkit import chol_inv_logdet, logdet, symmetrize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GlassoOptions:
    gap_tol: float = 1e-3
    max_sweeps: int = 500
    penalize_diagonal: bool = True
    inner_tol: float = 1e-6
    # max KKT residual of (theta, inv(theta)) on return
    feas_tol: float = 5e-7
    max_inner: int = 1000

    def __post_init__(self):
        if not self.gap_tol > 0:
            raise ValueError("gap_tol must be > 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")


@dataclass
class GlassoResult:
    theta: np.ndarray
    w: np.ndarray
    gap: float
    sweeps: int

    def __iter__(self):
        return iter((self.theta, self.w, self.gap, self.sweeps))


def penalty_matrix(d: int, lam: float, penalize_diagonal: bool = True) -> np.ndarray:
    pen = np.full((d, d), float(lam))
    if not penalize_diagonal:
        np.fill_diagonal(pen, 0.0)
    return pen


def primal_objective(theta, t, lam, penalize_diagonal: bool = True) -> float:
    pen = penalty_matrix(theta.shape[0], lam, penalize_diagonal)
    return float(np.sum(theta * t) - logdet(theta) + np.sum(pen * np.abs(theta)))


def _gap_and_violation(theta, t, pen):
    """Return (gap, KKT residual, inv(theta), primal objective).

    The KKT residual is ``|w - t - L sign(theta)|`` on the support of theta
    and the box excess ``|w - t| - L`` off it.
    """
    d = theta.shape[0]
    w, ld_theta = chol_inv_logdet(theta)
    primal = float(np.sum(theta * t) - ld_theta + np.sum(pen * np.abs(theta)))
    diff = w - t
    resid = np.where(theta != 0, np.abs(diff - pen * np.sign(theta)), np.abs(diff) - pen)
    viol = float(np.max(resid)) if d else 0.0
    w_box = np.clip(w, t - pen, t + pen)
    try:
        dual = logdet(w_box) + d
    except NotPositiveDefinite:
        return float("inf"), viol, w, primal
    return max(primal - dual, 0.0), max(viol, 0.0), w, primal


def duality_gap(theta, t, lam, penalize_diagonal: bool = True) -> float:
    """Primal objective minus the dual value at ``inv(theta)`` clipped to the box."""
    pen = penalty_matrix(theta.shape[0], lam, penalize_diagonal)
    return _gap_and_violation(symmetrize(theta), symmetrize(t), pen)[0]


def check_dual_feasibility(w, t, lam, slack_tol: float = 0.0,
                           penalize_diagonal: bool = True) -> bool:
    """True iff ``|w - t|_inf <= lam + slack_tol`` (diagonal slack 0 if unpenalized)."""
    w = np.asarray(w, dtype=float)
    t = np.asarray(t, dtype=float)
    pen = penalty_matrix(w.shape[0], lam, penalize_diagonal)
    return bool(np.all(np.abs(w - t) <= pen + slack_tol))


def _evaluate(theta, t, pen):
    if not np.all(np.isfinite(theta)):
        return float("inf"), float("inf"), None, float("inf")
    try:
        return _gap_and_violation(theta, t, pen)
    except NotPositiveDefinite:
        return float("inf"), float("inf"), None, float("inf")


def glasso_solve(t, lam: float, opts: GlassoOptions | None = None,
                 theta_init: np.ndarray | None = None,
                 trace: Callable[[int, float, float], None] | None = None) -> GlassoResult:
    """Minimize ``tr(Theta t) - logdet Theta + lam |Theta|_1`` over SPD Theta.

    Block coordinate ascent on the dual box problem: every column solves a
    lasso by cyclic coordinate descent, so the recovered precision has exact
    zeros. If the optimality residual stalls once the gap is small, a few
    primal block-descent sweeps finish the job.

    ``theta_init`` warm-starts the iteration (default ``inv(t + lam I)``), and
    the returned precision never has a larger objective than ``theta_init``.
    ``trace(sweep, gap, primal)`` is called after every sweep.
    Raises NotPositiveDefinite when ``lam == 0`` and ``t`` is singular, and
    MaxSweepsExceeded (carrying the best iterate) if the stopping rule is not
    met within ``opts.max_sweeps``.
    """
    opts = opts or GlassoOptions()
    t = np.ascontiguousarray(symmetrize(t))
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    d = t.shape[0]
    pen = penalty_matrix(d, lam, opts.penalize_diagonal)

    if lam == 0:
        try:
            theta, _ = chol_inv_logdet(t)
        except NotPositiveDefinite:
            raise NotPositiveDefinite("lam = 0 requires a positive definite t") from None
        gap, _, w, _ = _gap_and_violation(theta, t, pen)
        return GlassoResult(theta, w, gap, 0)

    wdiag = np.diag(t) + np.diag(pen)
    if np.any(wdiag <= 0):
        raise NotPositiveDefinite("diagonal of t + lam must be positive")
    offdiag = ~np.eye(d, dtype=bool)
    if d == 1 or np.all(np.abs(t[offdiag]) <= pen[offdiag]):
        # The diagonal matrix diag(t + L) is dual feasible and optimal.
        theta = np.diag(1.0 / wdiag)
        gap, _, w, _ = _gap_and_violation(theta, t, pen)
        return GlassoResult(theta, w, gap, 0)

    # W starts at t + diag(L), which is PD, so every column lasso is convex.
    # A warm start only seeds the lasso coefficients.
    init = None
    w = t + np.diag(np.diag(pen))
    if theta_init is None:
        beta = np.zeros((d, d))
    else:
        theta0 = symmetrize(np.asarray(theta_init, dtype=float))
        gap0, _, w0, primal0 = _evaluate(theta0, t, pen)
        if w0 is None:
            raise NotPositiveDefinite("theta_init must be positive definite")
        init = (theta0, w0, gap0, primal0)
        beta = -theta0 / np.diag(theta0)[None, :]
        np.fill_diagonal(beta, 0.0)
    w = np.ascontiguousarray(w)
    beta = np.ascontiguousarray(beta)

    def finish(theta, w_inv, gap, sweep):
        if init is not None and primal_objective(theta, t, lam, opts.penalize_diagonal) > init[3]:
            # Never hand back something worse than the warm start; the newer
            # dual point still certifies it.
            return GlassoResult(init[0], init[1], min(init[2], gap), sweep)
        return GlassoResult(theta, w_inv, gap, sweep)

    floor = opts.inner_tol * 1e-3
    dw = 1e-2 * float(np.max(np.abs(t)))
    best = None
    primal_phase = False
    stall = 0
    best_viol = np.inf
    theta = w_inv = None
    for sweep in range(1, opts.max_sweeps + 1):
        if primal_phase:
            primal_sweep(theta, w_inv, t, pen, opts.inner_tol * 1e-2, opts.max_inner)
            theta = 0.5 * (theta + theta.T)
        else:
            dw = dual_sweep(w, beta, t, pen, max(floor, 1e-2 * dw), opts.max_inner)
            theta = theta_from_beta(w, beta)
            theta = 0.5 * (theta + theta.T)
        gap, viol, w_inv, primal = _evaluate(theta, t, pen)
        if trace is not None:
            trace(sweep, gap, primal)
        if w_inv is None:
            continue
        w_inv = np.ascontiguousarray(w_inv)
        if best is None or gap < best[2]:
            best = (theta.copy(), w_inv.copy(), gap)
        if gap <= opts.gap_tol and viol <= opts.feas_tol:
            return finish(theta, w_inv, gap, sweep)
        if not primal_phase and gap <= opts.gap_tol:
            stall = stall + 1 if viol > 0.9 * best_viol else 0
            best_viol = min(best_viol, viol)
            if stall >= 5:
                log.debug("glasso switching to primal sweeps at sweep %d", sweep)
                primal_phase = True
                theta = np.ascontiguousarray(theta)
    if best is None:
        raise MaxSweepsExceeded(
            f"glasso found no positive definite iterate in {opts.max_sweeps} sweeps",
            theta=None, w=None, gap=float("inf"), sweeps=opts.max_sweeps)
    raise MaxSweepsExceeded(
        f"glasso did not converge in {opts.max_sweeps} sweeps (best gap {best[2]:.3g})",
        theta=best[0], w=best[1], gap=best[2], sweeps=opts.max_sweeps)


def glasso_oracle(t, lam: float, tol: float = 1e-8,
                  penalize_diagonal: bool = True) -> np.ndarray:
    """Reference solution for tiny problems (d <= 3), used by the tests.

    Maximizes ``logdet W`` over the box ``|W - t| <= L`` with the bounded
    quasi-Newton method L-BFGS-B and returns
    ``inv(W)``. Shares no code with the coordinate-descent solver.
    """
    from scipy.optimize import minimize

    t = symmetrize(t)
    d = t.shape[0]
    if d > 3:
        raise ValueError("glasso_oracle is limited to d <= 3")
    if lam == 0:
        return np.linalg.inv(t)
    pen = penalty_matrix(d, lam, penalize_diagonal)
    iu = np.triu_indices(d)

    def unpack(v):
        w = np.zeros((d, d))
        w[iu] = v
        return w + np.triu(w, 1).T

    def neg_logdet(v):
        w = unpack(v)
        sign, ld = np.linalg.slogdet(w)
        if sign <= 0:
            return 1e30, np.zeros_like(v)
        winv = np.linalg.inv(w)
        grad = 2.0 * winv - np.diag(np.diag(winv))
        return -ld, -grad[iu]

    w0 = t + np.diag(np.diag(pen))
    bounds = list(zip((t - pen)[iu], (t + pen)[iu]))
    res = minimize(neg_logdet, w0[iu], jac=True, method="L-BFGS-B", bounds=bounds,
                   options={"ftol": 1e-15, "gtol": tol * 1e-4, "maxiter": 10_000})
    return np.linalg.inv(unpack(res.x))
