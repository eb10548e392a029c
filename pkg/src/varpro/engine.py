"""Rule-based importance: local averages, released averages, and the replicate loop."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .data import (CLASSIFICATION, REGRESSION, SURVIVAL, ClassIndicator, Dataset, GTarget,
                   Identity, default_target, g_values, rng_stream, split_data)
from .rules import Interval, Rule, RuleMasks, region_mask, release
from .splitweight import compute_split_weights
from .trees import TreeParams, extract_branches, grow_forest, grow_guided_tree

log = logging.getLogger(__name__)

ZERO_VARIANCE_EPS = 1e-12


class DegenerateRunError(RuntimeError):
    """Too many replicates produced no usable rules."""


@dataclass(frozen=True)
class Fixed:
    z0: float = 2.0


@dataclass(frozen=True)
class OutOfSample:
    grid: tuple = tuple(np.round(np.arange(0, 5.0001, 0.25), 2).tolist())
    n_trees: int = 100


@dataclass
class VarProConfig:
    B: int = 500
    K: int = 75
    alpha: float = 0.632
    seed: int = 0
    min_keep: Optional[int] = None  # None: max(5, ceil(sqrt(n_vp)))
    nodesize: Optional[int] = None  # None: max(10, ceil(sqrt(n_rg) ln(n_rg) / 4))
    mtry: Optional[int] = None
    max_depth: Optional[int] = None
    folds: int = 10
    shallow_trees: int = 50
    shallow_depth: int = 3
    threads: int = 1
    trace: bool = False  # keep per-rule released counts in the diagnostics

    def validate(self):
        if self.B < 2:
            raise ValueError("B must be >= 2")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("min_keep", "nodesize"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1")
        return self

    def resolve_nodesize(self, n_rg: int) -> int:
        if self.nodesize is not None:
            return int(self.nodesize)
        # sqrt(n) log(n) / 4: small leaves for small samples, while leaf means
        # still tighten fast enough that noise importance shrinks as n grows
        return max(10, math.ceil(math.sqrt(n_rg) * math.log(max(n_rg, 2)) / 4.0))

    def resolve_min_keep(self, n_vp: int) -> int:
        if self.min_keep is not None:
            return int(self.min_keep)
        return max(5, math.ceil(math.sqrt(n_vp)))

    def tree_params(self, n_rg: int = 0) -> TreeParams:
        return TreeParams(mtry=self.mtry, nodesize=self.resolve_nodesize(n_rg),
                          max_depth=self.max_depth)


# estimators -----------------------------------------------------------------

def _values_for(d: Dataset, g) -> np.ndarray:
    """``g`` may be a GTarget or an array of precomputed per-row values."""
    if isinstance(g, np.ndarray):
        if g.shape != (d.n,):
            raise ValueError("value vector must have one entry per row")
        return g.astype(np.float64)
    return g_values(g, d)


def theta_hat(rule, d: Dataset, g) -> float:
    """Mean of g(Y) over the rows of ``d`` inside the rule's region."""
    region = rule.region if isinstance(rule, Rule) else rule
    mask = region_mask(region, d.X, d.kinds)
    if not mask.any():
        raise ValueError("empty region")
    return float(_values_for(d, g)[mask].mean())


def theta_released(rule, S, d: Dataset, g) -> float:
    """theta_hat over the region released along ``S``."""
    return theta_hat(release(rule, S, d.p), d, g)


def delta_importance(rules: Sequence, S, d: Dataset, g) -> float:
    """Sum_k W_k |theta(released_k) - theta_k| with W_k proportional to region counts."""
    if not rules:
        return 0.0
    vals = _values_for(d, g)
    m = np.empty(len(rules))
    diff = np.empty(len(rules))
    for k, r in enumerate(rules):
        region = r.region if isinstance(r, Rule) else r
        base = region_mask(region, d.X, d.kinds)
        rel = region_mask(release(region, S, d.p), d.X, d.kinds)
        if not base.any():
            raise ValueError("rule with empty region")
        m[k] = base.sum()
        diff[k] = abs(vals[rel].mean() - vals[base].mean())
    return float(np.dot(m / m.sum(), diff))


def permuted_theta_oracle(rule, S, d: Dataset, g) -> float:
    """Released average computed as an average over all n^2 recombined points.

    Point (i, j) takes its S-coordinates from row j and the others from row
    i, weighted by g(y_i). Only valid for products of per-feature constraints.
    """
    region = rule.region if isinstance(rule, Rule) else rule
    for c in region.constraints:
        if not isinstance(c, Interval):
            raise TypeError("oracle needs an interval-product rule")
    S = sorted({int(s) for s in S})
    vals = _values_for(d, g)
    X = d.X
    n = X.shape[0]
    num = 0.0
    den = 0
    for i in range(n):
        for j in range(n):
            z = X[i].copy()
            z[S] = X[j, S]
            inside = all(c.holds(z[c.feature]) for c in region.constraints)
            if inside:
                num += vals[i]
                den += 1
    if den == 0:
        raise ValueError("no recombined point falls in the region")
    return num / den


def _score_rules(rules, X_vp, vals, p, trace):
    """Per-variable Delta for one replicate plus per-rule diagnostics."""
    delta = np.zeros(p)
    if not rules:
        return delta, []
    masks = [RuleMasks.build(r, X_vp) for r in rules]
    m = np.array([mk.base().sum() for mk in masks], dtype=np.float64)
    W = m / m.sum()
    diag = []
    for k, mk in enumerate(masks):
        base = mk.base()
        theta = vals[base].mean()
        released = {}
        for c, s in enumerate(mk.features):
            rel = mk.released_single(c)
            mS = int(rel.sum())
            if mS > m[k]:
                delta[s] += W[k] * abs(vals[rel].mean() - theta)
            released[int(s)] = mS
        entry = {"m": int(m[k])}
        if trace:
            entry["released"] = released
        diag.append(entry)
    return delta, diag


# replicates -------------------------------------------------------------------

@dataclass
class ImportanceReplicate:
    b: int
    delta: np.ndarray
    n_rules: int
    rules: list = field(default_factory=list)


def _weight_target(d: Dataset, rg_values, rg_idx):
    if d.family == CLASSIFICATION and d.n_classes > 2:
        # one-vs-rest columns; split weights average their lasso coefficients
        return np.eye(d.n_classes)[d.y[rg_idx]]
    return rg_values


def run_replicate(d: Dataset, values, b: int, config: VarProConfig, estimator=None) -> ImportanceReplicate:
    rng = rng_stream(config.seed, b)
    rg, vp = split_data(d, config.alpha, rng)
    d_rg, d_vp = d.subset(rg), d.subset(vp)
    if estimator is not None:
        v_rg, v_vp = estimator.estimate(d, rg, vp, rng)
        v_rg = np.asarray(v_rg, dtype=np.float64)
        v_vp = np.asarray(v_vp, dtype=np.float64)
        if not (np.all(np.isfinite(v_rg)) and np.all(np.isfinite(v_vp))):
            raise ValueError("external estimate produced non-finite values")
        wt = v_rg
    else:
        v_rg, v_vp = values[rg], values[vp]
        wt = _weight_target(d, v_rg, rg)
    weights = compute_split_weights(d_rg, wt, rng, folds=min(config.folds, d_rg.n),
                                    n_trees=config.shallow_trees, max_depth=config.shallow_depth)
    params = config.tree_params(d_rg.n)
    if d_rg.n < 2 * params.nodesize:
        params = TreeParams(params.mtry, max(1, d_rg.n // 2), params.max_depth)
    tree = grow_guided_tree(d_rg, weights, v_rg, params, rng, stream=(b,))
    rules = extract_branches(tree, config.K, d_vp, config.resolve_min_keep(d_vp.n), rng)
    delta, diag = _score_rules(rules, d_vp.X, v_vp, d.p, config.trace)
    return ImportanceReplicate(b, delta, len(rules), diag)


# reports ----------------------------------------------------------------------

@dataclass
class ImportanceReport:
    names: list
    mean: np.ndarray
    variance: np.ndarray
    standardized: np.ndarray
    zero_variance: np.ndarray
    B: int
    config: dict
    target: str = ""
    selected: Optional[np.ndarray] = None
    cutoff: Optional[float] = None
    cutoff_policy: str = ""
    cutoff_errors: dict = field(default_factory=dict)
    replicates: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def p(self) -> int:
        return len(self.names)

    def selected_indices(self) -> list:
        return [] if self.selected is None else [int(i) for i in np.flatnonzero(self.selected)]

    def to_dict(self) -> dict:
        per_var = []
        for j, name in enumerate(self.names):
            per_var.append({
                "name": name,
                "mean": float(self.mean[j]),
                "variance": float(self.variance[j]),
                "standardized": float(self.standardized[j]),
                "zero_variance": bool(self.zero_variance[j]),
                "selected": None if self.selected is None else bool(self.selected[j]),
            })
        return {
            "version": __version__,
            "config": self.config,
            "target": self.target,
            "B": self.B,
            "cutoff": {"policy": self.cutoff_policy, "value": self.cutoff,
                       "oob_errors": {str(k): v for k, v in self.cutoff_errors.items()}},
            "per_variable": per_var,
            "replicate_diagnostics": [
                {"b": r.b, "n_rules": r.n_rules, "delta": [float(x) for x in r.delta],
                 "rules": r.rules} for r in self.replicates],
            "warnings": list(self.warnings),
        }


def standardize(deltas: np.ndarray) -> tuple:
    """Replicate mean, sample variance and mean/sd per variable.

    Zero variance gives 0 when the mean is 0, else mean/1e-12 (flagged).
    """
    mean = deltas.mean(axis=0)
    var = deltas.var(axis=0, ddof=1)
    zero = var <= 0
    sd = np.sqrt(np.where(zero, 1.0, var))
    std = np.where(zero, np.where(mean == 0, 0.0, mean / ZERO_VARIANCE_EPS), mean / sd)
    return mean, var, std, zero


def _target_label(g) -> str:
    if isinstance(g, np.ndarray):
        return "values"
    return repr(g)


def _run(d: Dataset, values, config: VarProConfig, estimator, target_label) -> ImportanceReport:
    config.validate()
    threads = max(1, int(config.threads))
    bs = range(config.B)
    if threads == 1:
        reps = [run_replicate(d, values, b, config, estimator) for b in bs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reps = list(pool.map(lambda b: run_replicate(d, values, b, config, estimator), bs))
    empty = [r.b for r in reps if r.n_rules == 0]
    warnings = []
    if empty:
        msg = f"{len(empty)} of {config.B} replicates produced no eligible rules"
        log.warning(msg)
        warnings.append(msg)
        if 2 * len(empty) >= config.B:
            raise DegenerateRunError(msg)
    deltas = np.vstack([r.delta for r in reps])
    mean, var, std, zero = standardize(deltas)
    cfg = {k: v for k, v in asdict(config).items() if k != "threads"}
    return ImportanceReport(list(d.names), mean, var, std, zero, config.B, cfg,
                            target=target_label, replicates=reps, warnings=warnings)


def run_varpro(d: Dataset, g: Optional[GTarget] = None, config: Optional[VarProConfig] = None) -> ImportanceReport:
    """Repeat split / guided tree / rule scoring B times and standardize.

    ``g`` defaults to the family's natural target. Survival data must go
    through :func:`run_varpro_external`.
    """
    config = config or VarProConfig()
    if d.family == SURVIVAL and not isinstance(g, np.ndarray):
        if g is None:
            raise ValueError("survival data needs an external estimate or explicit values")
    g = g if g is not None else default_target(d)
    values = _values_for(d, g)
    return _run(d, values, config, None, _target_label(g))


def run_varpro_external(d: Dataset, estimator, config: Optional[VarProConfig] = None) -> ImportanceReport:
    """Modified VarPro: average an external estimate instead of g(Y).

    ``estimator.estimate(d, rg, vp, rng)`` is refit each replicate on the
    rule-generation rows only and returns values for both parts.
    """
    config = config or VarProConfig()
    label = type(estimator).__name__
    kind = getattr(estimator, "kind", None)
    if kind:
        label += f"({kind}, tau={getattr(estimator, 'tau', None)})"
    return _run(d, None, config, estimator, label)


def run_varpro_multiclass(d: Dataset, config: Optional[VarProConfig] = None) -> tuple:
    """One report per class label (g = class indicator) and a max-over-classes summary."""
    if d.family != CLASSIFICATION:
        raise ValueError("multiclass run needs classification data")
    config = config or VarProConfig()
    per_class = {}
    for lab in range(d.n_classes):
        per_class[d.classes[lab]] = run_varpro(d, ClassIndicator(lab), config)
    stack = np.vstack([r.standardized for r in per_class.values()])
    best = np.argmax(stack, axis=0)
    reps = list(per_class.values())
    cols = np.arange(d.p)
    pick = lambda attr: np.vstack([getattr(r, attr) for r in reps])[best, cols]
    combined = ImportanceReport(list(d.names), pick("mean"), pick("variance"), stack.max(axis=0),
                                pick("zero_variance"), config.B, reps[0].config,
                                target="max over class indicators")
    return per_class, combined


# selection ----------------------------------------------------------------------

def _oob_error(d: Dataset, cols, n_trees, rng):
    sub = d.select_features(cols)
    if d.family == SURVIVAL:
        from .survival import survival_oob_error
        return survival_oob_error(sub, n_trees=n_trees, rng=rng)
    return grow_forest(sub, n_trees=n_trees, rng=rng).oob_error


def select_variables(rep: ImportanceReport, policy=Fixed(), d: Optional[Dataset] = None,
                     seed: int = 0) -> list:
    """Apply a cutoff policy; records the outcome on ``rep`` and returns selected indices.

    Fixed keeps variables with standardized importance above z0. OutOfSample
    fits a forest on the variables above each grid cutoff and keeps the
    cutoff with the smallest OOB error (ties go to the larger cutoff).
    """
    I = np.asarray(rep.standardized)
    if isinstance(policy, Fixed):
        sel = I > policy.z0
        rep.cutoff, rep.cutoff_policy = float(policy.z0), f"fixed:{policy.z0:g}"
        rep.selected = sel
        return [int(i) for i in np.flatnonzero(sel)]
    if not isinstance(policy, OutOfSample):
        raise TypeError(f"unknown policy {policy!r}")
    if d is None:
        raise ValueError("out-of-sample cutoff needs the data")
    cache = {}
    errors = {}
    for c in sorted(policy.grid):
        cols = tuple(int(j) for j in np.flatnonzero(I > c))
        if not cols:
            continue
        if cols not in cache:
            # common random numbers across candidate sets
            cache[cols] = _oob_error(d, list(cols), policy.n_trees, rng_stream(seed, 7_919))
        errors[float(c)] = cache[cols]
    rep.cutoff_policy = "oob"
    rep.cutoff_errors = errors
    finite = {c: e for c, e in errors.items() if not math.isnan(e)}
    if not finite:
        top = int(np.argmax(I))
        msg = "no grid cutoff selects any variable; keeping the top-ranked one"
        log.warning(msg)
        rep.warnings.append(msg)
        rep.selected = np.zeros(len(I), dtype=bool)
        rep.selected[top] = True
        rep.cutoff = None
        return [top]
    best = min(finite.values())
    cut = max(c for c, e in finite.items() if e == best)
    rep.cutoff = cut
    rep.selected = I > cut
    return [int(i) for i in np.flatnonzero(rep.selected)]


def default_threads() -> int:
    env = os.environ.get("VARPRO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
