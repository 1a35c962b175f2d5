"""Command-line entry point: estimate, simulate, bench, rates, concentration.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure (the
exception name is printed). Settings are layered as built-in defaults, then
``--config <json>``, then explicit flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bench import (ExperimentConfig, concentration_experiment, default_threads, rate_experiment,
                    run_example, tune_constants, write_concentration, write_rates, write_report)
from .csvio import read_matrix, write_matrix, write_provenance
from .errors import KroncovError
from .estimators import (PenaltyPlan, ff_estimate, ff_thres, glasso_full, glasso_full_lambda,
                         kglasso, scm)
from .glasso import GlassoOptions
from .matkit import sparsity
from .sampler import EXAMPLE_DEFAULTS, derive_rng, make_model, sample_cov, sample_matrix_normal

log = logging.getLogger("kroncov")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _strs(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


DEFAULTS = {
    "estimate": {"method": "kglasso", "samples": None, "p": None, "f": None, "cx": 0.4,
                 "cy": 0.4, "k_steps": 3, "eps": 1e-3, "max_outer": 50, "gap_tol": 1e-3,
                 "glasso_c": 0.4, "lam": None, "target_sx": None, "target_sy": None,
                 "penalize_diagonal": True, "emit_product": False, "out": None},
    "simulate": {"example": None, "generator": None, "p": None, "f": None, "n": None,
                 "seed": 7, "edge_prob": None, "rho_floor": None, "out": None},
    "bench": {"example": None, "n_grid": None, "mc": 20, "seed": 7, "estimators": None,
              "cx": 0.4, "cy": 0.4, "glasso_c": 0.4, "tune": False, "threads": None,
              "out": None},
    "rates": {"alpha": None, "n_grid": [100, 200, 400, 800], "mc": 10, "seed": 7,
              "cx": 0.4, "cy": 0.4, "threads": None, "out": None},
    "concentration": {"p_grid": [10, 20], "f": 10, "n_grid": [20, 40], "mc": 100, "seed": 7,
                      "out": None},
}


def _add(sp, cmd, flag, shown=None, **kw):
    key = flag.lstrip("-").replace("-", "_")
    default = DEFAULTS[cmd][key] if shown is None else shown
    if kw.get("action") in ("store_true", "store_false"):
        kw["default"] = None
    else:
        kw.setdefault("default", None)
    kw["help"] = f"{kw.get('help', '')} (default: {default})".strip()
    sp.add_argument(flag, dest=key, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kroncov", description="Sparse Kronecker covariance estimation.")
    parser.add_argument("--version", action="version", version=f"kroncov {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    sp = sub.add_parser("estimate", help="fit an estimator to a sample CSV")
    sp.add_argument("--config", help="JSON file with settings for this command")
    _add(sp, "estimate", "--method", choices=["kglasso", "ff", "ff-thres", "glasso", "scm"])
    _add(sp, "estimate", "--samples", help="n x pf matrix CSV, one sample per row")
    _add(sp, "estimate", "--p", type=int, help="left factor dimension")
    _add(sp, "estimate", "--f", type=int, help="right factor dimension")
    _add(sp, "estimate", "--cx", type=float, help="KGlasso constant for the X penalty")
    _add(sp, "estimate", "--cy", type=float, help="KGlasso constant for the Y penalty")
    _add(sp, "estimate", "--k-steps", type=int, help="flip-flop compression steps")
    _add(sp, "estimate", "--eps", type=float, help="outer stopping tolerance")
    _add(sp, "estimate", "--max-outer", type=int, help="KGlasso outer iteration cap")
    _add(sp, "estimate", "--gap-tol", type=float, help="Glasso duality-gap tolerance")
    _add(sp, "estimate", "--glasso-c", type=float, help="full-Glasso penalty constant")
    _add(sp, "estimate", "--lam", type=float, help="explicit full-Glasso penalty")
    _add(sp, "estimate", "--target-sx", type=int,
         help="ff-thres off-diagonal nonzeros in X (KGlasso's when unset)")
    _add(sp, "estimate", "--target-sy", type=int,
         help="ff-thres off-diagonal nonzeros in Y (KGlasso's when unset)")
    sp.add_argument("--no-penalize-diagonal", dest="penalize_diagonal", action="store_false",
                    default=None, help="leave Glasso diagonals unpenalized (default: penalized)")
    _add(sp, "estimate", "--emit-product", action="store_true",
         help="also write the pf x pf precision")
    _add(sp, "estimate", "--out", help="output prefix")

    sp = sub.add_parser("simulate", help="draw a ground-truth model and samples")
    sp.add_argument("--config", help="JSON file with settings for this command")
    _add(sp, "simulate", "--example", type=int, choices=sorted(EXAMPLE_DEFAULTS),
         help="take p, f and the generator from an example")
    _add(sp, "simulate", "--generator", choices=["er", "ex4", "dense", "identity"],
         help="truth generator; er when neither this nor --example is given")
    _add(sp, "simulate", "--p", type=int, help="left factor dimension")
    _add(sp, "simulate", "--f", type=int, help="right factor dimension")
    _add(sp, "simulate", "--n", type=int, help="number of samples")
    _add(sp, "simulate", "--seed", type=int, help="seed for the truth and the data")
    _add(sp, "simulate", "--edge-prob", type=float, shown="0.1, or the example's",
         help="ER entry probability")
    _add(sp, "simulate", "--rho-floor", type=float, shown="0.05, or the example's",
         help="smallest eigenvalue of each precision factor")
    _add(sp, "simulate", "--out", help="output prefix")

    sp = sub.add_parser("bench", help="Monte Carlo RMSE study")
    sp.add_argument("--config", help="JSON file with ExperimentConfig fields")
    _add(sp, "bench", "--example", type=int, choices=sorted(EXAMPLE_DEFAULTS),
         help="example whose truth model and estimators to use; required without --config")
    _add(sp, "bench", "--n-grid", type=_ints, shown="10,20,...,100",
         help="comma-separated sample sizes")
    _add(sp, "bench", "--mc", type=int, help="trials per sample size")
    _add(sp, "bench", "--seed", type=int, help="master seed")
    _add(sp, "bench", "--estimators", type=_strs, shown="per example",
         help="comma-separated subset of kglasso,ff,ff-thres,glasso,scm")
    _add(sp, "bench", "--cx", type=float, help="KGlasso constant for the X penalty")
    _add(sp, "bench", "--cy", type=float, help="KGlasso constant for the Y penalty")
    _add(sp, "bench", "--glasso-c", type=float, help="full-Glasso penalty constant")
    _add(sp, "bench", "--tune", action="store_true",
         help="choose cx = cy from a grid on separate tuning draws first")
    _add(sp, "bench", "--threads", type=int, shown="available cores",
         help="worker processes (or KRONCOV_THREADS)")
    _add(sp, "bench", "--out", help="report CSV path")

    sp = sub.add_parser("rates", help="MSE against n with growing dimensions")
    sp.add_argument("--config", help="JSON file with settings for this command")
    _add(sp, "rates", "--alpha", help="0 < alpha < 1, or 'borderline' for p = f = ceil(n^0.6)")
    _add(sp, "rates", "--n-grid", type=_ints, shown="100,200,400,800",
         help="comma-separated sample sizes")
    _add(sp, "rates", "--mc", type=int, help="trials per sample size")
    _add(sp, "rates", "--seed", type=int, help="master seed")
    _add(sp, "rates", "--cx", type=float, help="KGlasso constant for the X penalty")
    _add(sp, "rates", "--cy", type=float, help="KGlasso constant for the Y penalty")
    _add(sp, "rates", "--threads", type=int, shown="available cores")
    _add(sp, "rates", "--out", help="CSV path")

    sp = sub.add_parser("concentration", help="sup-norm deviation of the compressed covariance")
    sp.add_argument("--config", help="JSON file with settings for this command")
    _add(sp, "concentration", "--p-grid", type=_ints, shown="10,20",
         help="comma-separated left dimensions")
    _add(sp, "concentration", "--f", type=int, help="right dimension")
    _add(sp, "concentration", "--n-grid", type=_ints, shown="20,40",
         help="comma-separated sample sizes")
    _add(sp, "concentration", "--mc", type=int, help="trials per (n, p)")
    _add(sp, "concentration", "--seed", type=int, help="master seed")
    _add(sp, "concentration", "--out", help="CSV path")
    return parser


def resolve(cmd: str, args: argparse.Namespace) -> dict:
    """Built-in defaults, overridden by the config file, overridden by flags."""
    cfg = dict(DEFAULTS[cmd])
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        file_cfg = _from_sidecar(cmd, file_cfg)
    if cmd != "bench":
        unknown = set(file_cfg) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
    cfg.update(file_cfg)
    for key, val in vars(args).items():
        if key in DEFAULTS[cmd] and val is not None:
            cfg[key] = val
    return cfg


def _from_sidecar(cmd: str, payload: dict) -> dict:
    """Settings stored in a provenance sidecar, so an output can be regenerated from it."""
    if payload.get("library") != "kroncov" or "config" not in payload:
        return payload
    stored = payload["config"]
    if cmd == "bench":
        return dict(stored.get("experiment", {}))
    # drop derived values such as n, lam or the duality gap
    return {k: v for k, v in stored.items() if k in DEFAULTS[cmd]}


def _need(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"missing required setting(s): {flags}")


def _write(path, matrix, cfg):
    write_matrix(path, matrix)
    write_provenance(path, cfg)


def _write_trace(path, values, cfg):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subiteration", "J_lambda"])
        for i, v in enumerate(values, 1):
            w.writerow([i, repr(float(v))])
    write_provenance(path, cfg)


def cmd_estimate(cfg: dict) -> None:
    _need(cfg, "samples", "p", "f", "out")
    data = read_matrix(cfg["samples"])
    p, f = cfg["p"], cfg["f"]
    if data.shape[1] != p * f:
        raise UsageError(f"samples have {data.shape[1]} columns, expected p*f = {p * f}")
    s = sample_cov(data, p, f)
    gopts = GlassoOptions(gap_tol=cfg["gap_tol"], penalize_diagonal=cfg["penalize_diagonal"])
    out = cfg["out"]
    method = cfg["method"]
    record = dict(cfg, n=s.n)

    if method in ("glasso", "scm"):
        if method == "glasso":
            lam = cfg["lam"]
            if lam is None:
                lam = glasso_full_lambda(p, f, s.n, cfg["glasso_c"])
            record["lam"] = lam
            res = glasso_full(s, lam, gopts)
            record["duality_gap"] = res.gap
            _write(f"{out}_theta.csv", res.theta, record)
        else:
            _write(f"{out}_sigma.csv", scm(s), record)
        return

    if method == "ff":
        res = ff_estimate(s, cfg["k_steps"], eps=0.0)
    else:
        plan = PenaltyPlan(p, f, s.n, cfg["cx"], cfg["cy"])
        res = kglasso(s, plan, eps=cfg["eps"], max_outer=cfg["max_outer"], gopts=gopts)
        if method == "ff-thres":
            sx = cfg["target_sx"] if cfg["target_sx"] is not None else sparsity(res.x_hat)
            sy = cfg["target_sy"] if cfg["target_sy"] is not None else sparsity(res.y_hat)
            record.update(target_sx=sx, target_sy=sy)
            res = ff_thres(ff_estimate(s, cfg["k_steps"], eps=0.0), sx, sy)
    x, y = res.normalized()
    _write(f"{out}_x.csv", x, record)
    _write(f"{out}_y.csv", y, record)
    if cfg["emit_product"]:
        _write(f"{out}_theta.csv", res.theta_hat, record)
    _write_trace(f"{out}_trace.csv", res.objective_trace, record)


def cmd_simulate(cfg: dict) -> None:
    # explicit settings win over the example, which wins over the ER fallback
    ex = EXAMPLE_DEFAULTS[cfg["example"]] if cfg["example"] is not None else {}
    fallback = {"generator": "er", "edge_prob": 0.1, "rho_floor": 0.05}
    for key in ("p", "f", "generator", "edge_prob", "rho_floor"):
        if cfg.get(key) is None:
            cfg[key] = ex.get(key, fallback.get(key))
    _need(cfg, "p", "f", "n", "out")
    model = make_model(cfg["generator"], cfg["p"], cfg["f"], cfg["seed"],
                       cfg["edge_prob"], cfg["rho_floor"])
    # data uses a stream distinct from the two factor streams
    data = sample_matrix_normal(model, cfg["n"], derive_rng(cfg["seed"], 2))
    record = {k: cfg[k] for k in ("p", "f", "n", "seed", "generator", "edge_prob", "rho_floor")}
    out = cfg["out"]
    _write(f"{out}_data.csv", data, record)
    _write(f"{out}_x0.csv", model.x0, record)
    _write(f"{out}_y0.csv", model.y0, record)


_BENCH_KEYS = {"example": "example_id", "n_grid": "n_grid", "mc": "n_mc", "seed": "master_seed",
               "estimators": "estimators", "cx": "c_x", "cy": "c_y", "glasso_c": "glasso_c"}


def cmd_bench(cfg: dict) -> None:
    _need(cfg, "out")
    fields = {}
    # config files may use either CLI names or ExperimentConfig names
    for key, val in cfg.items():
        if key in _BENCH_KEYS:
            if val is not None:
                fields[_BENCH_KEYS[key]] = val
        elif key in ExperimentConfig.__dataclass_fields__:
            fields[key] = val
        elif key not in DEFAULTS["bench"]:
            raise UsageError(f"unknown config key {key!r}")
    fields.setdefault("example_id", None)
    try:
        exp = ExperimentConfig(**fields).resolved()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    threads = cfg["threads"] or default_threads()
    tuned = None
    if cfg["tune"]:
        best, scores = tune_constants(exp, threads=threads)
        exp = replace(exp, c_x=best[0], c_y=best[1])
        tuned = {"selected": list(best), "scores": {f"{a},{b}": v for (a, b), v in scores.items()}}
    report = run_example(exp, threads=threads)
    write_report(report, cfg["out"])
    record = {"experiment": report.config, "config_hash": report.config_hash,
              "seed": report.seed, "voided_trials": report.voided, "tuning": tuned}
    write_provenance(cfg["out"], record, seed=report.seed)
    for n, t, why in report.voided:
        log.warning("trial n=%d t=%d voided: %s", n, t, why)


def cmd_rates(cfg: dict) -> None:
    _need(cfg, "alpha", "out")
    alpha = cfg["alpha"]
    if str(alpha) == "borderline":
        alpha, base = 0.6, 1
    else:
        try:
            alpha, base = float(alpha), 8
        except ValueError:
            raise UsageError(f"--alpha must be a number or 'borderline', got {alpha!r}") from None
    rows = rate_experiment(alpha, cfg["n_grid"], base=base, seed=cfg["seed"], n_mc=cfg["mc"],
                           c_x=cfg["cx"], c_y=cfg["cy"],
                           threads=cfg["threads"] or default_threads())
    write_rates(rows, cfg["out"])
    write_provenance(cfg["out"], dict(cfg, alpha_value=alpha, base=base))


def cmd_concentration(cfg: dict) -> None:
    _need(cfg, "out")
    rows = concentration_experiment(cfg["p_grid"], cfg["f"], cfg["n_grid"], cfg["mc"], cfg["seed"])
    write_concentration(rows, cfg["out"])
    write_provenance(cfg["out"], cfg)


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "bench": cmd_bench,
            "rates": cmd_rates, "concentration": cmd_concentration}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.command, args)
        COMMANDS[args.command](cfg)
    except KroncovError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (UsageError, OSError, ValueError) as exc:
        print(f"kroncov {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
