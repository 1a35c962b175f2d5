"""Kronecker covariance estimators: flip-flop, FF/Thres, KGlasso, full Glasso, SCM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DimensionGuard, DimensionMismatch, InvalidTarget, SampleSizeTooSmall
from .glasso import GlassoOptions, GlassoResult, glasso_solve
from .matkit import (chol_inv_logdet, check_spd, kron, kron_frob_dist2, kron_frob_norm2,
                     lambda_min, logdet)
from .sampler import SampleCov

DEFAULT_EPS = 1e-3
DEFAULT_MAX_OUTER = 50
GLASSO_FULL_MAX_DIM = 1000


# --- compression maps ---------------------------------------------------------

def compress_B(s: SampleCov, x) -> np.ndarray:
    """``(1/p) sum_ij x[i,j] S(j,i)``: an f x f estimate of the right factor."""
    x = np.asarray(x, dtype=float)
    if x.shape != (s.p, s.p):
        raise DimensionMismatch(f"x must be {s.p}x{s.p}, got {x.shape}")
    if s.data is not None:
        z = s.tensor()
        xz = np.matmul(x, z)  # (n, p, f)
        out = xz.reshape(-1, s.f).T @ z.reshape(-1, s.f) / (s.n * s.p)
    else:
        s4 = s.blocks.as_4d()  # (j, k, i, l)
        out = np.einsum("ij,jkil->kl", x, s4, optimize=True) / s.p
    return 0.5 * (out + out.T)


def compress_A(s: SampleCov, y) -> np.ndarray:
    """``(1/f) sum_kl y[k,l] Sbar(l,k)``: a p x p estimate of the left factor."""
    y = np.asarray(y, dtype=float)
    if y.shape != (s.f, s.f):
        raise DimensionMismatch(f"y must be {s.f}x{s.f}, got {y.shape}")
    if s.data is not None:
        z = s.tensor()
        zy = np.matmul(z, y.T)  # (n, p, f)
        lhs = zy.transpose(1, 0, 2).reshape(s.p, -1)
        rhs = z.transpose(1, 0, 2).reshape(s.p, -1)
        out = lhs @ rhs.T / (s.n * s.f)
    else:
        s4 = s.blocks.as_4d()  # (i, l, j, k)
        out = np.einsum("kl,iljk->ij", y, s4, optimize=True) / s.f
    return 0.5 * (out + out.T)


def kron_trace(s: SampleCov, x, y) -> float:
    """``tr((x (x) y) S)`` computed blockwise as ``p * tr(y compress_B(s, x))``."""
    return float(s.p * np.sum(np.asarray(y) * compress_B(s, x)))


def objective_J(x, y, s: SampleCov, lambda_bar_x: float = 0.0, lambda_bar_y: float = 0.0,
                penalize_diagonal: bool = True) -> float:
    """Penalized negative log-likelihood of the factor pair (x, y)."""
    val = kron_trace(s, x, y) - s.f * logdet(x) - s.p * logdet(y)
    if lambda_bar_x or lambda_bar_y:
        val += lambda_bar_x * _l1(x, penalize_diagonal) + lambda_bar_y * _l1(y, penalize_diagonal)
    return float(val)


def _l1(m, penalize_diagonal):
    total = np.sum(np.abs(m))
    if not penalize_diagonal:
        total -= np.sum(np.abs(np.diag(m)))
    return total


# --- regularization schedule ----------------------------------------------------

def schedule(p: int, f: int, n: int, c_x: float, c_y: float, step_k: int) -> tuple[float, float]:
    """Glasso penalties ``(lambda_Y, lambda_X)`` for outer iteration ``step_k``.

    The first Y-step uses ``c_y sqrt(ln M / (n p))``; every later step (the
    first X-step included) uses ``c_x sqrt(ln M / (n f)) + lambda_Y1``,
    with ``M = max(p, f, n)``.
    """
    if step_k < 1:
        raise ValueError("step_k must be >= 1")
    big_m = max(p, f, n)
    lam_y1 = c_y * math.sqrt(math.log(big_m) / (n * p))
    lam_x = c_x * math.sqrt(math.log(big_m) / (n * f)) + lam_y1
    if step_k == 1:
        return lam_y1, lam_x
    return lam_x, lam_x


def schedule_asymptotic(p: int, f: int, n: int, c_x: float, c_y: float,
                        step_k: int) -> tuple[float, float]:
    """Rate-theory penalties: ``lambda ~ (1/sqrt(p) + 1/sqrt(f)) sqrt(ln M / n)``."""
    if step_k < 1:
        raise ValueError("step_k must be >= 1")
    big_m = max(p, f, n)
    base = math.sqrt(math.log(big_m) / n)
    lam_x = c_x * (1 / math.sqrt(p) + 1 / math.sqrt(f)) * base
    if step_k == 1:
        return c_y * base / math.sqrt(p), lam_x
    return c_y * (1 / math.sqrt(p) + 1 / math.sqrt(f)) * base, lam_x


@dataclass(frozen=True)
class PenaltyPlan:
    """Penalty constants for KGlasso.

    ``lambdas(k)`` gives the Glasso-level values ``(lambda_Y, lambda_X)``;
    the objective uses the barred values ``lambda_bar_Y = p lambda_Y`` and
    ``lambda_bar_X = f lambda_X``.
    """

    p: int
    f: int
    n: int
    c_x: float = 0.4
    c_y: float = 0.4
    mode: str = "simulation"

    def lambdas(self, k: int) -> tuple[float, float]:
        fn = schedule if self.mode == "simulation" else schedule_asymptotic
        return fn(self.p, self.f, self.n, self.c_x, self.c_y, k)

    def barred(self, k: int) -> tuple[float, float]:
        lam_y, lam_x = self.lambdas(k)
        return lam_y * self.p, lam_x * self.f

    def steady_barred(self) -> tuple[float, float]:
        """Barred penalties in force from the second outer iteration on."""
        return self.barred(2)

    @classmethod
    def zero(cls, p: int, f: int, n: int) -> "PenaltyPlan":
        return cls(p, f, n, 0.0, 0.0)


# --- results --------------------------------------------------------------------

@dataclass
class EstimateResult:
    """Precision factors ``x_hat`` (p x p), ``y_hat`` (f x f) and diagnostics."""

    x_hat: np.ndarray
    y_hat: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    outer_iters: int = 0
    converged: bool = False
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    @cached_property
    def theta_hat(self) -> np.ndarray:
        return kron(self.x_hat, self.y_hat)

    @cached_property
    def covariance_factors(self) -> tuple[np.ndarray, np.ndarray]:
        return chol_inv_logdet(self.x_hat)[0], chol_inv_logdet(self.y_hat)[0]

    @cached_property
    def sigma_hat(self) -> np.ndarray:
        a, b = self.covariance_factors
        return kron(a, b)

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Factors rescaled so that ``tr(y) = f``; the product is unchanged."""
        c = np.trace(self.y_hat) / self.y_hat.shape[0]
        return self.x_hat * c, self.y_hat / c


def rel_change(x_old, y_old, x_new, y_new) -> float:
    """Relative Frobenius change between two Kronecker products."""
    denom = kron_frob_norm2(x_old, y_old)
    return math.sqrt(kron_frob_dist2(x_old, y_old, x_new, y_new) / denom)


def _check_sample_size(s: SampleCov):
    need = max(s.p / s.f, s.f / s.p) + 1
    if s.n < need:
        raise SampleSizeTooSmall(
            f"n = {s.n} < max(p/f, f/p) + 1 = {need:g} (p={s.p}, f={s.f})")


# --- flip-flop -------------------------------------------------------------------

def ff_estimate(s: SampleCov, k_steps: int = 3, a_init=None, eps: float = 0.0) -> EstimateResult:
    """Flip-flop: alternate ``B <- compress_B(s, inv(A))`` and ``A <- compress_A(s, inv(B))``.

    ``k_steps`` counts compressions, starting with B. With ``eps > 0`` the
    loop stops early once a full (B, A) pass changes the product by at most
    ``eps`` in relative Frobenius norm.
    """
    _check_sample_size(s)
    if k_steps < 1:
        raise ValueError("k_steps must be >= 1")
    a = np.eye(s.p) if a_init is None else check_spd(a_init, "a_init")
    x = chol_inv_logdet(a)[0]
    y = None
    x_prev = y_prev = None
    trace = []
    converged = False
    for step in range(1, k_steps + 1):
        if step % 2 == 1:
            y = chol_inv_logdet(compress_B(s, x))[0]
        else:
            x = chol_inv_logdet(compress_A(s, y))[0]
        trace.append(objective_J(x, y, s))
        if step % 2 == 0:
            if eps > 0 and y_prev is not None and rel_change(x_prev, y_prev, x, y) <= eps:
                converged = True
                break
            x_prev, y_prev = x, y
    return EstimateResult(x, y, trace, outer_iters=(step + 1) // 2,
                          converged=converged, method="ff")


def ff_thres(ff: EstimateResult, target_sx: int, target_sy: int) -> EstimateResult:
    """Zero the smallest off-diagonal pairs of each factor until the target sparsity remains."""
    x = _threshold_to(ff.x_hat, target_sx)
    y = _threshold_to(ff.y_hat, target_sy)
    diag = {"lambda_min_x": lambda_min(x), "lambda_min_y": lambda_min(y)}
    return EstimateResult(x, y, list(ff.objective_trace), ff.outer_iters, ff.converged,
                          method="ff-thres", diagnostics=diag)


def _threshold_to(m, target: int) -> np.ndarray:
    d = m.shape[0]
    if target < 0 or target % 2 or target > d * (d - 1):
        raise InvalidTarget(f"target {target} must be even and in [0, {d * (d - 1)}]")
    out = np.array(m, dtype=float, copy=True)
    rows, cols = np.triu_indices(d, 1)
    vals = np.abs(out[rows, cols])
    nz = np.flatnonzero(vals != 0)
    keep_pairs = target // 2
    if keep_pairs >= nz.size:
        return out
    # lexsort: last key is primary -> magnitude ascending, then (row, col)
    order = np.lexsort((cols[nz], rows[nz], vals[nz]))
    drop = nz[order[: nz.size - keep_pairs]]
    out[rows[drop], cols[drop]] = 0.0
    out[cols[drop], rows[drop]] = 0.0
    return out


# --- KGlasso ---------------------------------------------------------------------

StepCallback = Callable[[str, int, np.ndarray, np.ndarray, GlassoResult, float], None]


def kglasso(s: SampleCov, plan: PenaltyPlan | None = None, a_init=None,
            eps: float = DEFAULT_EPS, max_outer: int = DEFAULT_MAX_OUTER,
            gopts: GlassoOptions | None = None,
            on_step: StepCallback | None = None) -> EstimateResult:
    """Kronecker graphical lasso.

    Starting from ``x = inv(a_init)`` each outer iteration runs
    ``y <- G(compress_B(s, x), lambda_Y)`` then ``x <- G(compress_A(s, y), lambda_X)``,
    where G is the Glasso operator. Every Glasso call is warm-started at the
    current factor. ``objective_trace`` records J after each subiteration at
    the steady-state penalties (those used from the first X-step on), which
    every subiteration after the first minimizes, so the trace never
    increases. Stops when the product changes by at most ``eps`` (relative
    Frobenius) or after ``max_outer``.

    ``on_step(which, k, compressed, factor, glasso_result, lam)`` is called
    after each Glasso subiteration with ``which`` in {"Y", "X"}.
    """
    _check_sample_size(s)
    if eps <= 0:
        raise ValueError("eps must be > 0")
    plan = plan or PenaltyPlan(s.p, s.f, s.n)
    gopts = gopts or GlassoOptions()
    a = np.eye(s.p) if a_init is None else check_spd(a_init, "a_init")
    x = chol_inv_logdet(a)[0]
    y = None
    trace = []
    lams = []
    converged = False
    jbar_y, jbar_x = plan.steady_barred()
    k = 0
    for k in range(1, max_outer + 1):
        lam_y, lam_x = plan.lambdas(k)
        x_old, y_old = x, y

        b_hat = compress_B(s, x)
        res_y = glasso_solve(b_hat, lam_y, gopts, theta_init=y)
        y = res_y.theta
        # the objective after a Y-step carries the X penalty in force for x
        trace.append(objective_J(x, y, s, jbar_x, jbar_y, gopts.penalize_diagonal))
        if on_step is not None:
            on_step("Y", k, b_hat, y, res_y, lam_y)

        a_hat = compress_A(s, y)
        res_x = glasso_solve(a_hat, lam_x, gopts, theta_init=x)
        x = res_x.theta
        trace.append(objective_J(x, y, s, jbar_x, jbar_y, gopts.penalize_diagonal))
        if on_step is not None:
            on_step("X", k, a_hat, x, res_x, lam_x)
        lams.append((lam_y, lam_x))

        if y_old is not None and rel_change(x_old, y_old, x, y) <= eps:
            converged = True
            break
    return EstimateResult(x, y, trace, outer_iters=k, converged=converged, method="kglasso",
                          diagnostics={"lambdas": lams})


# --- full-dimension baselines ---------------------------------------------------

def glasso_full(s: SampleCov, lam: float, gopts: GlassoOptions | None = None,
                max_dim: int = GLASSO_FULL_MAX_DIM) -> GlassoResult:
    """Glasso on the full pf x pf sample covariance."""
    if s.dim > max_dim:
        raise DimensionGuard(f"p*f = {s.dim} exceeds the full-Glasso limit {max_dim}")
    return glasso_solve(s.s, lam, gopts)


def glasso_full_lambda(p: int, f: int, n: int, c: float = 0.4) -> float:
    """Penalty ``c sqrt(ln M / n)`` for the unstructured Glasso baseline."""
    return c * math.sqrt(math.log(max(p, f, n)) / n)


def scm(s: SampleCov) -> np.ndarray:
    return s.s
