"""``varpro`` command line: select, simulate, benchmark, version."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .data import (CLASSIFICATION, REGRESSION, SURVIVAL, ParseError, Schema,
                   SchemaError, load_csv, rng_stream, write_csv)
from .engine import (DegenerateRunError, Fixed, OutOfSample, VarProConfig, default_threads,
                     run_varpro, run_varpro_external, run_varpro_multiclass, select_variables)
from .metrics import auc_pr, confusion, gmean, precision_accuracy
from .report import config_hash, write_benchmark, write_json, write_selection_outputs
from .survival import ColumnEstimate, SurvivalForestEstimator
from .synthetic import MODELS, REGRESSION_MODELS, generate_markov, generate_multiclass, \
    generate_regression, generate_survival, SimSpec, simulate

log = logging.getLogger("varpro")

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE = 0, 2, 3

SUITES = ("regression-e", "regression-e-corr", "multiclass", "survival", "markov")
SUITE_CUTOFF = {"regression-e": "oob", "regression-e-corr": "oob", "multiclass": "oob",
                "survival": "oob", "markov": "fixed:2"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything a command needs; embedded verbatim in its outputs."""

    subcommand: str
    data: str = ""
    family: str = REGRESSION
    response: Optional[str] = None
    time: Optional[str] = None
    event: Optional[str] = None
    categorical: list = field(default_factory=list)
    drop: list = field(default_factory=list)
    b: int = 500
    rules: int = 75
    alpha: float = 0.632
    cutoff: str = "fixed:2"
    tau: Optional[float] = None
    estimator: str = "rsf-rmst"
    nodesize: Optional[int] = None
    min_keep: Optional[int] = None
    mtry: Optional[int] = None
    seed: int = 0
    threads: int = 1
    out: str = "."
    figure: bool = True
    # simulate / benchmark
    model: str = ""
    n: Optional[int] = None
    p: Optional[int] = None
    rho: float = 0.0
    censor_rate: float = 0.5
    beta: float = 0.25
    suite: str = ""
    models: list = field(default_factory=list)
    reps: int = 10
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    def engine_config(self) -> VarProConfig:
        return VarProConfig(B=self.b, K=self.rules, alpha=self.alpha, seed=self.seed,
                            nodesize=self.nodesize, min_keep=self.min_keep, mtry=self.mtry,
                            threads=self.threads)


def parse_cutoff(text: str):
    if text == "oob":
        return OutOfSample()
    if text.startswith("fixed:"):
        try:
            return Fixed(float(text.split(":", 1)[1]))
        except ValueError:
            pass
    raise UsageError(f"bad --cutoff {text!r}; use fixed:<z> or oob")


def _csv_list(text: Optional[str]) -> list:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def _resolve_threads(flag: Optional[int]) -> int:
    if os.environ.get("VARPRO_THREADS"):
        return default_threads()
    return max(1, flag) if flag else default_threads()


# select ------------------------------------------------------------------------

def _estimator(cfg: RunConfig, d, psi_column):
    if psi_column is not None:
        return ColumnEstimate(psi_column)
    kind = {"rsf-rmst": "rmst", "rsf-chf": "chf"}.get(cfg.estimator)
    if kind is None:
        raise UsageError(f"unknown --estimator {cfg.estimator!r}")
    return SurvivalForestEstimator(tau=cfg.tau, kind=kind)


def cmd_select(cfg: RunConfig) -> int:
    policy = parse_cutoff(cfg.cutoff)
    if cfg.family not in (REGRESSION, CLASSIFICATION, SURVIVAL):
        raise UsageError(f"unknown --family {cfg.family!r}")
    if cfg.family == SURVIVAL and not (cfg.time and cfg.event):
        raise UsageError("--family survival needs --time and --event")
    if cfg.family != SURVIVAL and not cfg.response:
        raise UsageError(f"--family {cfg.family} needs --response")
    if cfg.tau is not None and cfg.tau <= 0:
        raise UsageError("--tau must be positive")
    psi_name = cfg.estimator.split(":", 1)[1] if cfg.estimator.startswith("column:") else None
    drop = list(cfg.drop) + ([psi_name] if psi_name else [])
    schema = Schema(cfg.family, cfg.response, cfg.time, cfg.event, tuple(cfg.categorical), (),
                    tuple(drop))
    d = load_csv(cfg.data, schema)
    psi = None
    if psi_name:
        psi = _read_column(cfg.data, psi_name)
    engine_cfg = cfg.engine_config().validate()
    extra = {}
    if cfg.family == SURVIVAL:
        rep = run_varpro_external(d, _estimator(cfg, d, psi), engine_cfg)
    elif cfg.family == CLASSIFICATION:
        per_class, rep = run_varpro_multiclass(d, engine_cfg)
        extra["per_class"] = {str(k): r.to_dict()["per_variable"] for k, r in per_class.items()}
    else:
        rep = run_varpro(d, config=engine_cfg)
    select_variables(rep, policy, d, seed=cfg.seed)
    paths = write_selection_outputs(rep, cfg.out, cfg.to_dict(), extra=extra, figure=cfg.figure)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


def _read_column(path, name) -> np.ndarray:
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header = [h.strip() for h in rows[0]]
    if name not in header:
        raise SchemaError(f"column {name!r} not found in header")
    j = header.index(name)
    try:
        vals = np.array([float(r[j]) for r in rows[1:] if r])
    except ValueError:
        raise ParseError(f"column {name!r} must be numeric") from None
    if not np.all(np.isfinite(vals)):
        raise ParseError(f"column {name!r} has non-finite values")
    return vals


# simulate ----------------------------------------------------------------------

def _simulate(cfg: RunConfig, seed: int):
    if cfg.model not in (*MODELS, "multiclass", "survival", "markov"):
        raise UsageError(f"unknown --model {cfg.model!r}")
    return simulate(cfg.model, cfg.n, cfg.p, rho=cfg.rho, seed=seed,
                    censor_rate=cfg.censor_rate, beta=cfg.beta)


def cmd_simulate(cfg: RunConfig) -> int:
    parts = _csv_list(cfg.out)
    if len(parts) != 2:
        raise UsageError("--out needs two paths: data.csv,truth.json")
    d, truth = _simulate(cfg, cfg.seed)
    data_path, truth_path = Path(parts[0]), Path(parts[1])
    for path in (data_path, truth_path):
        path.parent.mkdir(parents=True, exist_ok=True)
    write_csv(d, data_path, comments=[f"varpro {__version__}",
                                      "run_config " + json.dumps(cfg.to_dict(), sort_keys=True)])
    doc = {"version": __version__, "run_config": cfg.to_dict(), "n": d.n, "p": d.p,
           "family": d.family, **truth.to_dict(d.names)}
    write_json(truth_path, doc)
    print(f"data: {data_path}\ntruth: {truth_path}")
    return EXIT_OK


# benchmark ---------------------------------------------------------------------

def _suite_models(cfg: RunConfig) -> list:
    if cfg.suite in ("regression-e", "regression-e-corr"):
        models = cfg.models or list(REGRESSION_MODELS)
        bad = [m for m in models if m not in MODELS]
        if bad:
            raise UsageError(f"unknown model(s) {bad}")
        return models
    if cfg.models and cfg.models != [cfg.suite]:
        raise UsageError(f"suite {cfg.suite} has a single model")
    return [cfg.suite]


def _bench_data(cfg: RunConfig, model: str, seed: int):
    if cfg.suite == "regression-e":
        return generate_regression(SimSpec(model, cfg.n, cfg.p, "none", seed=seed))
    if cfg.suite == "regression-e-corr":
        return generate_regression(SimSpec(model, cfg.n, cfg.p, "copula", rho=cfg.rho or 0.9, seed=seed))
    if cfg.suite == "multiclass":
        return generate_multiclass(cfg.n or 2000, cfg.p or 20, rho=cfg.rho or 0.9, seed=seed)
    if cfg.suite == "survival":
        return generate_survival(cfg.n or 200, cfg.p or 500, cfg.censor_rate, seed=seed)
    return generate_markov(cfg.n or 1500, cfg.p or 150, cfg.beta, rho=cfg.rho or 0.4, seed=seed)


def benchmark_rep(cfg: RunConfig, model: str, rep: int, policy) -> tuple:
    """One generator -> VarPro -> metrics pass; returns (summary row, report)."""
    sim_seed = int(rng_stream(cfg.seed, rep, 1).integers(2**31 - 1))
    run_seed = int(rng_stream(cfg.seed, rep, 2).integers(2**31 - 1))
    d, truth = _bench_data(cfg, model, sim_seed)
    ecfg = cfg.engine_config()
    ecfg.seed = run_seed
    if cfg.suite == "survival":
        r = run_varpro_external(d, SurvivalForestEstimator(tau=cfg.tau), ecfg)
    elif cfg.suite == "multiclass":
        r = run_varpro_multiclass(d, ecfg)[1]
    else:
        r = run_varpro(d, config=ecfg)
    sel = select_variables(r, policy, d, seed=run_seed)
    c = confusion(sel, truth, d.p)
    prec, acc = precision_accuracy(c)
    row = {"model": model, "rep": rep, "auc_pr": auc_pr(r.standardized, truth),
           "gmean": gmean(c), "precision": prec, "accuracy": acc, "n_selected": len(sel),
           "status": "ok"}
    return row, r


def cmd_benchmark(cfg: RunConfig) -> int:
    if cfg.suite not in SUITES:
        raise UsageError(f"unknown --suite {cfg.suite!r}; choose from {', '.join(SUITES)}")
    if cfg.reps < 1:
        raise UsageError("--reps must be >= 1")
    policy = parse_cutoff(cfg.cutoff)
    models = _suite_models(cfg)
    cfg.engine_config().validate()
    chash = config_hash(cfg.to_dict())
    rows, freqs = [], {}
    for model in models:
        sel_count, i_sum, names, done = None, None, None, 0
        for rep in range(cfg.reps):
            try:
                row, r = benchmark_rep(cfg, model, rep, policy)
            except (DegenerateRunError, ValueError, FloatingPointError) as exc:
                log.warning("%s rep %d failed: %s", model, rep, exc)
                row = {"model": model, "rep": rep, "status": f"failed: {exc}"}
                rows.append({**row, "config_hash": chash})
                continue
            rows.append({**row, "config_hash": chash})
            sel = r.selected.astype(float)
            sel_count = sel if sel_count is None else sel_count + sel
            i_sum = r.standardized if i_sum is None else i_sum + r.standardized
            names, done = r.names, done + 1
            log.info("%s rep %d: gmean %.3f auc_pr %.3f", model, rep, row["gmean"], row["auc_pr"])
        if done:
            freqs[model] = (names, sel_count / done, i_sum / done)
    paths = write_benchmark(cfg.out, rows, cfg.to_dict(), frequencies=freqs)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


# parsing -----------------------------------------------------------------------

def _add_engine_flags(sp, b_default):
    sp.add_argument("--b", type=int, default=b_default, help="replicates B")
    sp.add_argument("--rules", type=int, default=75, help="rules per replicate K")
    sp.add_argument("--alpha", type=float, default=0.632, help="rule-generation fraction")
    sp.add_argument("--nodesize", type=int, default=None, help="guided-tree leaf size (default grows with n)")
    sp.add_argument("--min-keep", type=int, default=None, help="smallest importance-side rule count")
    sp.add_argument("--mtry", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: all cores; VARPRO_THREADS overrides)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varpro", description="Rule-based variable priority.")
    ap.add_argument("--verbose", action="store_true")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("select", help="score and select variables in a CSV file")
    sp.add_argument("--data", required=True)
    sp.add_argument("--family", choices=(REGRESSION, CLASSIFICATION, SURVIVAL), default=REGRESSION)
    sp.add_argument("--response")
    sp.add_argument("--time")
    sp.add_argument("--event")
    sp.add_argument("--categorical", default="", help="comma-separated categorical columns")
    sp.add_argument("--drop", default="", help="comma-separated columns to ignore")
    sp.add_argument("--cutoff", default="fixed:2", help="fixed:<z> or oob")
    sp.add_argument("--tau", type=float, default=None, help="RMST horizon (survival)")
    sp.add_argument("--estimator", default="rsf-rmst", help="rsf-rmst | rsf-chf | column:<name>")
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--no-figure", action="store_true", help="skip the PNG figure")
    _add_engine_flags(sp, 500)

    sp = sub.add_parser("simulate", help="write a synthetic dataset and its truth set")
    sp.add_argument("--model", required=True)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--rho", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--censor-rate", type=float, default=0.5)
    sp.add_argument("--beta", type=float, default=0.25)
    sp.add_argument("--out", required=True, help="data.csv,truth.json")

    sp = sub.add_parser("benchmark", help="repeat simulate + select and score against the truth")
    sp.add_argument("--suite", required=True)
    sp.add_argument("--models", default="", help="comma-separated models (regression suites)")
    sp.add_argument("--reps", type=int, default=10)
    sp.add_argument("--cutoff", default=None, help="fixed:<z> or oob (default depends on suite)")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--rho", type=float, default=0.0)
    sp.add_argument("--censor-rate", type=float, default=0.5)
    sp.add_argument("--beta", type=float, default=0.25)
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--out", default="benchmark")
    _add_engine_flags(sp, 100)

    sub.add_parser("version", help="print the library version")
    return ap


def config_from_args(args) -> RunConfig:
    cmd = args.subcommand
    cfg = RunConfig(subcommand=cmd)
    for key, value in vars(args).items():
        if key in ("subcommand", "verbose", "no_figure"):
            continue
        if key in ("categorical", "drop", "models"):
            value = _csv_list(value)
        if key == "threads":
            value = _resolve_threads(value)
        if hasattr(cfg, key):
            setattr(cfg, key, value)
    if cmd == "select":
        cfg.figure = not args.no_figure
    if cmd == "benchmark" and args.cutoff is None:
        cfg.cutoff = SUITE_CUTOFF.get(args.suite, "oob")
    return cfg


def run(cfg: RunConfig) -> int:
    if cfg.subcommand == "version":
        print(__version__)
        return EXIT_OK
    handler = {"select": cmd_select, "simulate": cmd_simulate, "benchmark": cmd_benchmark}
    return handler[cfg.subcommand](cfg)


def rerun(doc: dict) -> int:
    """Repeat a command from the ``run_config`` embedded in one of its outputs."""
    cfg = RunConfig(**{k: v for k, v in doc["run_config"].items() if k != "version"})
    return run(cfg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config_from_args(args)
    try:
        return run(cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"varpro: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, ParseError, FileNotFoundError) as exc:
        print(f"varpro: input error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateRunError as exc:
        print(f"varpro: degenerate run: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as exc:
        print(f"varpro: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
