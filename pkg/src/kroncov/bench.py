"""Monte Carlo harness: example studies, rate curves and the concentration check."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, KroncovError
from .estimators import (PenaltyPlan, compress_B, ff_estimate, ff_thres, glasso_full,
                         glasso_full_lambda, kglasso)
from .glasso import GlassoOptions, penalty_matrix
from .matkit import kron_frob_dist2, kron_frob_norm2, sparsity
from .sampler import (EXAMPLE_DEFAULTS, KroneckerModel, derive_rng, make_model, sample_cov,
                      sample_matrix_normal)

ESTIMATORS = ("kglasso", "ff", "ff-thres", "glasso", "scm")
REPORT_HEADER = ["estimator", "n", "rmse_precision", "rmse_precision_sd",
                 "rmse_covariance", "rmse_covariance_sd", "runtime_ms", "seed"]
# full Glasso is only run where p*f is small enough
EXAMPLE_ESTIMATORS = {
    1: ("kglasso", "ff", "glasso"),
    2: ("kglasso", "ff", "glasso"),
    3: ("kglasso", "ff"),
    4: ("kglasso", "ff", "ff-thres"),
}
# stream key separating tuning draws from evaluation draws
TUNE_KEY = 1_000_003


def default_threads() -> int:
    env = os.environ.get("KRONCOV_THREADS")
    if env:
        return max(1, int(env))
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# --- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo study.

    ``example_id`` fills in dimensions and the truth generator from
    ``EXAMPLE_DEFAULTS``; explicit fields override it. The truth is drawn once
    from ``model_seed`` (default ``master_seed``) unless ``per_trial_truth``.
    """

    example_id: int | None = 1
    p: int | None = None
    f: int | None = None
    generator: str | None = None
    edge_prob: float | None = None
    rho_floor: float | None = None
    n_grid: tuple[int, ...] = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    n_mc: int = 20
    master_seed: int = 7
    model_seed: int | None = None
    estimators: tuple[str, ...] | None = None
    c_x: float = 0.4
    c_y: float = 0.4
    glasso_c: float = 0.4
    kg_eps: float = 1e-3
    max_outer: int = 50
    ff_eps: float = 1e-3
    ff_max_steps: int = 200
    gap_tol: float = 1e-3
    glasso_max_dim: int = 1000
    penalize_diagonal: bool = True
    per_trial_truth: bool = False

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        object.__setattr__(self, "n_grid", grid)
        if self.estimators is not None:
            object.__setattr__(self, "estimators", tuple(self.estimators))
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be nonempty and strictly ascending")
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")
        ests = self.estimators or ()
        unknown = set(ests) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")
        if "ff-thres" in ests and "kglasso" not in ests:
            raise ValueError("ff-thres takes its sparsity targets from kglasso")

    def resolved(self) -> "ExperimentConfig":
        """Copy with every example default written out explicitly."""
        base = EXAMPLE_DEFAULTS.get(self.example_id, {}) if self.example_id else {}
        if self.example_id is not None and self.example_id not in EXAMPLE_DEFAULTS:
            raise ValueError(f"unknown example {self.example_id}")
        vals = {k: getattr(self, k) if getattr(self, k) is not None else base.get(k)
                for k in ("p", "f", "generator", "edge_prob", "rho_floor")}
        if vals["p"] is None or vals["f"] is None or vals["generator"] is None:
            raise ValueError("config needs example_id or explicit p, f and generator")
        seed = self.master_seed if self.model_seed is None else self.model_seed
        ests = self.estimators
        if ests is None:
            ests = EXAMPLE_ESTIMATORS.get(self.example_id, ("kglasso", "ff"))
        return replace(self, model_seed=seed, estimators=ests, **vals)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_grid"] = list(self.n_grid)
        d["estimators"] = None if self.estimators is None else list(self.estimators)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        extra = set(d) - set(known)
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**known)

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved().to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --- error metrics ------------------------------------------------------------------

def normalized_rmse(estimates, truth) -> float:
    """``sqrt(mean_i |truth - est_i|_F^2 / |truth|_F^2)``."""
    truth = np.asarray(truth, dtype=float)
    if len(estimates) == 0:
        raise ValueError("need at least one estimate")
    denom = float(np.sum(truth ** 2))
    acc = 0.0
    for est in estimates:
        est = np.asarray(est, dtype=float)
        if est.shape != truth.shape:
            raise DimensionMismatch(f"estimate shape {est.shape} != truth shape {truth.shape}")
        acc += float(np.sum((truth - est) ** 2)) / denom
    return math.sqrt(acc / len(estimates))


def rmse_from_sq(sq_errors) -> float:
    """Normalized RMSE from per-trial squared relative errors."""
    sq = np.asarray(sq_errors, dtype=float)
    return float(np.sqrt(np.mean(sq))) if sq.size else float("nan")


def db_gain(rmse_ref: float, rmse_new: float) -> float:
    """``20 log10(rmse_ref / rmse_new)``; a 69% reduction is about 5.09 dB."""
    return 20.0 * math.log10(rmse_ref / rmse_new)


def reduction(rmse_ref: float, rmse_new: float) -> float:
    """Fractional RMSE reduction ``1 - new/ref``."""
    return 1.0 - rmse_new / rmse_ref


def _inverse(m) -> np.ndarray:
    # thresholded factors need not be PD, so use a general inverse
    return np.linalg.inv(m)


def _factor_errors(x, y, model: KroneckerModel) -> tuple[float, float]:
    prec = kron_frob_dist2(x, y, model.x0, model.y0) / kron_frob_norm2(model.x0, model.y0)
    a, b = _inverse(x), _inverse(y)
    cov = kron_frob_dist2(a, b, model.a0, model.b0) / kron_frob_norm2(model.a0, model.b0)
    return prec, cov


def _dense_errors(theta, sigma, model: KroneckerModel) -> tuple[float, float]:
    t0, s0 = model.theta0, model.sigma0
    prec = float(np.sum((theta - t0) ** 2) / np.sum(t0 ** 2)) if theta is not None else math.nan
    cov = float(np.sum((sigma - s0) ** 2) / np.sum(s0 ** 2))
    return prec, cov


# --- one trial ----------------------------------------------------------------------

@dataclass
class TrialResult:
    n: int
    trial: int
    # estimator -> (squared rel. precision error, squared rel. covariance error, ms)
    errors: dict = field(default_factory=dict)
    sparsity: dict = field(default_factory=dict)
    failure: str | None = None
    # KGlasso box check after every Glasso subiteration: count and worst
    # excess of |inv(factor) - compressed| over the penalty
    dual_checks: int = 0
    dual_excess: float = -math.inf


def _run_estimators(cfg: ExperimentConfig, model: KroneckerModel, data, n: int,
                    plan: PenaltyPlan) -> TrialResult:
    s = sample_cov(data, cfg.p, cfg.f)
    gopts = GlassoOptions(gap_tol=cfg.gap_tol, penalize_diagonal=cfg.penalize_diagonal)
    out = TrialResult(n=n, trial=-1)
    ff = None

    def box_check(which, k, compressed, factor, res, lam):
        pen = penalty_matrix(factor.shape[0], lam, cfg.penalize_diagonal)
        out.dual_checks += 1
        out.dual_excess = max(out.dual_excess, float(np.max(np.abs(res.w - compressed) - pen)))

    def timed(fn):
        t0 = time.perf_counter()
        r = fn()
        return r, 1e3 * (time.perf_counter() - t0)

    # canonical order: ff-thres needs the kglasso sparsity of the same trial
    for name in (e for e in ESTIMATORS if e in cfg.estimators):
        if name == "kglasso":
            kg, ms = timed(lambda: kglasso(s, plan, eps=cfg.kg_eps, max_outer=cfg.max_outer,
                                           gopts=gopts, on_step=box_check))
            out.errors[name] = (*_factor_errors(kg.x_hat, kg.y_hat, model), ms)
            out.sparsity[name] = (sparsity(kg.x_hat), sparsity(kg.y_hat))
        elif name in ("ff", "ff-thres"):
            if ff is None:
                ff, ff_ms = timed(lambda: ff_estimate(s, cfg.ff_max_steps, eps=cfg.ff_eps))
            if name == "ff":
                out.errors[name] = (*_factor_errors(ff.x_hat, ff.y_hat, model), ff_ms)
            else:
                th, ms = timed(lambda: ff_thres(ff, *out.sparsity["kglasso"]))
                out.errors[name] = (*_factor_errors(th.x_hat, th.y_hat, model), ff_ms + ms)
        elif name == "glasso":
            lam = glasso_full_lambda(cfg.p, cfg.f, n, cfg.glasso_c)
            res, ms = timed(lambda: glasso_full(s, lam, gopts, cfg.glasso_max_dim))
            out.errors[name] = (*_dense_errors(res.theta, _inverse(res.theta), model), ms)
        elif name == "scm":
            t0 = time.perf_counter()
            sig = s.s
            try:
                theta = np.linalg.inv(sig) if n >= s.dim else None
            except np.linalg.LinAlgError:
                theta = None
            ms = 1e3 * (time.perf_counter() - t0)
            out.errors[name] = (*_dense_errors(theta, sig, model), ms)
    return out


def _trial_task(args) -> TrialResult:
    cfg, model, n, t, plan_c, data_key = args
    if cfg.per_trial_truth:
        model = _draw_model(cfg, seed_keys=(cfg.model_seed, n, t))
    data = sample_matrix_normal(model, n, derive_rng(*data_key, n, t))
    plan = PenaltyPlan(cfg.p, cfg.f, n, *plan_c)
    try:
        res = _run_estimators(cfg, model, data, n, plan)
    except (KroncovError, np.linalg.LinAlgError) as exc:
        res = TrialResult(n=n, trial=t, failure=f"{type(exc).__name__}: {exc}")
    res.trial = t
    return res


def _draw_model(cfg: ExperimentConfig, seed_keys=None) -> KroneckerModel:
    seed = cfg.model_seed
    if seed_keys is not None:
        seed = int(derive_rng(*seed_keys).integers(2 ** 62))
    return make_model(cfg.generator, cfg.p, cfg.f, seed, cfg.edge_prob, cfg.rho_floor)


def _map(tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [_trial_task(a) for a in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_trial_task, tasks, chunksize=1))


# --- reports ------------------------------------------------------------------------

@dataclass
class RmseRow:
    estimator: str
    n: int
    rmse_precision: float
    rmse_precision_sd: float
    rmse_covariance: float
    rmse_covariance_sd: float
    runtime_ms: float
    seed: int
    n_valid: int = 0


@dataclass
class RmseReport:
    rows: list[RmseRow]
    config: dict
    config_hash: str
    seed: int
    voided: list[tuple[int, int, str]] = field(default_factory=list)
    trials: list[TrialResult] = field(default_factory=list, repr=False)

    def get(self, estimator: str, n: int) -> RmseRow:
        for r in self.rows:
            if r.estimator == estimator and r.n == n:
                return r
        raise KeyError((estimator, n))

    def dual_summary(self) -> tuple[int, float]:
        """Number of KGlasso box checks over all trials and the worst excess."""
        done = [tr for tr in self.trials if tr.failure is None]
        return (sum(tr.dual_checks for tr in done),
                max((tr.dual_excess for tr in done), default=-math.inf))

    def reduction(self, ref: str, new: str, n: int, metric: str = "precision") -> float:
        attr = f"rmse_{metric}"
        return reduction(getattr(self.get(ref, n), attr), getattr(self.get(new, n), attr))


def _summarize(cfg: ExperimentConfig, trials: list[TrialResult]) -> list[RmseRow]:
    rows = []
    for name in sorted(cfg.estimators):
        for n in cfg.n_grid:
            vals = [tr.errors[name] for tr in trials if tr.n == n and tr.failure is None]
            if vals:
                arr = np.asarray(vals, dtype=float)
                prec, cov, ms = arr[:, 0], arr[:, 1], arr[:, 2]
                row = RmseRow(name, n, rmse_from_sq(prec), float(np.std(np.sqrt(prec))),
                              rmse_from_sq(cov), float(np.std(np.sqrt(cov))),
                              float(np.median(ms)), cfg.master_seed, len(vals))
            else:
                nan = float("nan")
                row = RmseRow(name, n, nan, nan, nan, nan, nan, cfg.master_seed, 0)
            rows.append(row)
    return rows


def run_example(cfg: ExperimentConfig, threads: int = 1, model: KroneckerModel | None = None,
                data_seed: tuple[int, ...] | None = None) -> RmseReport:
    """Run every estimator on ``n_mc`` paired trials for each n in the grid.

    Trial t at sample size n draws its data from ``derive_rng(master_seed, n, t)``;
    all estimators see the same sample covariance, and a failing trial is
    dropped for all of them.
    """
    cfg = cfg.resolved()
    model = model if model is not None else _draw_model(cfg)
    key = data_seed if data_seed is not None else (cfg.master_seed,)
    tasks = [(cfg, model, n, t, (cfg.c_x, cfg.c_y), key)
             for n in cfg.n_grid for t in range(cfg.n_mc)]
    trials = _map(tasks, threads)
    voided = [(tr.n, tr.trial, tr.failure) for tr in trials if tr.failure is not None]
    return RmseReport(_summarize(cfg, trials), cfg.to_dict(), cfg.config_hash(),
                      cfg.master_seed, voided, trials)


def tune_constants(cfg: ExperimentConfig, grid=((0.05, 0.05), (0.1, 0.1), (0.2, 0.2), (0.4, 0.4)),
                   n_grid: tuple[int, ...] | None = None, n_mc: int = 5,
                   threads: int = 1) -> tuple[tuple[float, float], dict]:
    """Pick ``(c_x, c_y)`` from ``grid`` on data independent of the evaluation draws.

    The score of a pair is the worst ratio of KGlasso RMSE to flip-flop RMSE
    over the tuning grid and both error types; the smallest score wins.
    Returns the winning pair and all scores.
    """
    cfg = cfg.resolved()
    model = _draw_model(cfg)
    n_grid = tuple(n_grid or cfg.n_grid)
    scores = {}
    ff_rows = None
    for cx, cy in grid:
        ests = ("kglasso",) if ff_rows is not None else ("kglasso", "ff")
        sub = replace(cfg, n_grid=n_grid, n_mc=n_mc, estimators=ests, c_x=cx, c_y=cy)
        rep = run_example(sub, threads, model=model, data_seed=(cfg.master_seed, TUNE_KEY))
        if ff_rows is None:
            ff_rows = {r.n: r for r in rep.rows if r.estimator == "ff"}
        ratios = []
        for r in rep.rows:
            if r.estimator == "kglasso":
                ratios += [r.rmse_precision / ff_rows[r.n].rmse_precision,
                           r.rmse_covariance / ff_rows[r.n].rmse_covariance]
        scores[(cx, cy)] = max(ratios)
    best = min(scores, key=lambda k: (scores[k], k))
    return best, scores


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_report(report: RmseReport, path) -> None:
    """CSV sorted by estimator then n; NaN (no valid trial) is written as an empty field."""
    rows = sorted(report.rows, key=lambda r: (r.estimator, r.n))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in REPORT_HEADER])


def read_report(path) -> list[RmseRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            num = {k: float(rec[k]) if rec[k] != "" else float("nan")
                   for k in REPORT_HEADER[2:7]}
            out.append(RmseRow(rec["estimator"], int(rec["n"]), **num, seed=int(rec["seed"])))
    return out


# --- rate curves --------------------------------------------------------------------

RATE_HEADER = ["estimator", "n", "p", "f", "mse_mean", "mse_median", "theory"]


@dataclass
class RateRow:
    estimator: str
    n: int
    p: int
    f: int
    mse_mean: float
    mse_median: float
    theory: float = float("nan")


def rate_dims(n: int, alpha: float, base: float = 8) -> int:
    return math.ceil(base * n ** alpha)


def theory_curve(estimator: str, p: int, f: int, n: int) -> float:
    """Unscaled MSE prediction: ``(p^2 + f^2) ln M / n`` for flip-flop,
    ``(p + f) ln M / n`` for KGlasso."""
    big_m = max(p, f, n)
    if estimator == "ff":
        return (p * p + f * f) * math.log(big_m) / n
    if estimator == "kglasso":
        return (p + f) * math.log(big_m) / n
    raise ValueError(f"no rate prediction for {estimator!r}")


def rate_experiment(alpha: float, n_grid, base: float = 8, estimators=("ff", "kglasso"),
                    seed: int = 7, n_mc: int = 10, c_x: float = 0.4, c_y: float = 0.4,
                    threads: int = 1) -> list[RateRow]:
    """Squared Frobenius precision error with ``p = f = ceil(base n^alpha)`` and identity truth.

    The theory column is rescaled so it meets the empirical mean at the
    largest n.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    n_grid = sorted(int(n) for n in n_grid)
    rows = []
    for n in n_grid:
        p = rate_dims(n, alpha, base)
        cfg = ExperimentConfig(example_id=None, p=p, f=p, generator="identity", n_grid=(n,),
                               n_mc=n_mc, master_seed=seed, estimators=tuple(estimators),
                               c_x=c_x, c_y=c_y).resolved()
        model = _draw_model(cfg)
        tasks = [(cfg, model, n, t, (c_x, c_y), (seed,)) for t in range(n_mc)]
        trials = [tr for tr in _map(tasks, threads) if tr.failure is None]
        norm = kron_frob_norm2(model.x0, model.y0)
        for name in estimators:
            sq = np.array([tr.errors[name][0] * norm for tr in trials])
            rows.append(RateRow(name, n, p, p, float(np.mean(sq)), float(np.median(sq))))
    for name in estimators:
        mine = [r for r in rows if r.estimator == name]
        last = mine[-1]
        try:
            scale = last.mse_mean / theory_curve(name, last.p, last.f, last.n)
        except ValueError:
            continue
        for r in mine:
            r.theory = scale * theory_curve(name, r.p, r.f, r.n)
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def write_rates(rows: list[RateRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RATE_HEADER)
        for r in sorted(rows, key=lambda r: (r.estimator, r.n)):
            w.writerow([_fmt(getattr(r, k)) for k in RATE_HEADER])


# --- concentration --------------------------------------------------------------------

CONC_HEADER = ["n", "p", "f", "stat_mean", "stat_sq_mean", "ratio"]


@dataclass
class ConcentrationRow:
    n: int
    p: int
    f: int
    stat_mean: float
    stat_sq_mean: float
    ratio: float


def concentration_experiment(p_grid, f: int, n_grid, n_mc: int = 100, seed: int = 7,
                             model_seed: int | None = None,
                             generator: str = "identity") -> list[ConcentrationRow]:
    """Sup-norm deviation of ``compress_B(S_n, I)`` from its target ``B* = (tr A0 / p) B0``.

    ``ratio`` divides the mean statistic by ``sqrt(ln max(f, n) / (n p))``.
    """
    rows = []
    for p in sorted(int(v) for v in p_grid):
        model = make_model(generator, p, f, seed if model_seed is None else model_seed)
        b_star = (np.trace(model.a0) / p) * model.b0
        x = np.eye(p)
        for n in sorted(int(v) for v in n_grid):
            stats = np.empty(n_mc)
            for t in range(n_mc):
                data = sample_matrix_normal(model, n, derive_rng(seed, n, p, t))
                stats[t] = np.max(np.abs(compress_B(sample_cov(data, p, f), x) - b_star))
            scale = math.sqrt(math.log(max(f, n)) / (n * p))
            ratio = float(stats.mean() / scale) if scale > 0 else float("nan")
            rows.append(ConcentrationRow(n, p, f, float(stats.mean()),
                                         float(np.mean(stats ** 2)), ratio))
    return rows


def write_concentration(rows: list[ConcentrationRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONC_HEADER)
        for r in rows:
            w.writerow([_fmt(getattr(r, k)) for k in CONC_HEADER])
