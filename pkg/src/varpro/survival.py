"""Right-censored survival: Kaplan-Meier, IPCW, RMST, log-rank forests, Brier score."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .data import SURVIVAL, Dataset

log = logging.getLogger(__name__)

WEIGHT_CAP = 20.0


@dataclass(frozen=True)
class KaplanMeier:
    """Product-limit estimate; ``surv[j]`` is S on ``[times[j], times[j+1])``."""

    times: np.ndarray
    surv: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        j = np.searchsorted(self.times, t, side="right") - 1
        return self._lookup(j)

    def left_limit(self, t) -> np.ndarray:
        """S(t-), the value just before ``t``."""
        t = np.asarray(t, dtype=np.float64)
        j = np.searchsorted(self.times, t, side="left") - 1
        return self._lookup(j)

    def _lookup(self, j):
        if self.surv.size == 0:  # no events: S stays at 1
            return np.ones(np.shape(j))
        return np.where(j >= 0, self.surv[np.maximum(j, 0)], 1.0)


def km_fit(times, events) -> KaplanMeier:
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=np.int64)
    if times.size == 0:
        raise ValueError("empty input")
    if times.shape != events.shape:
        raise ValueError("times and events differ in length")
    if np.any(times < 0) or np.any((events != 0) & (events != 1)):
        raise ValueError("times must be >= 0 and events 0/1")
    uniq = np.unique(times[events == 1])
    d = np.array([np.sum((times == t) & (events == 1)) for t in uniq], dtype=np.float64)
    y = np.array([np.sum(times >= t) for t in uniq], dtype=np.float64)
    surv = np.cumprod(1.0 - d / y) if uniq.size else np.zeros(0)
    return KaplanMeier(uniq, surv, y, d)


def censoring_km(times, events) -> KaplanMeier:
    """Kaplan-Meier of the censoring distribution G(u) = P{C > u}."""
    return km_fit(times, 1 - np.asarray(events, dtype=np.int64))


def _capped_inverse(g: np.ndarray, what: str) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    small = g < 1.0 / WEIGHT_CAP
    if np.any(small):
        log.warning("%d censoring weights for %s capped at %g", int(small.sum()), what, WEIGHT_CAP)
    return np.where(small, WEIGHT_CAP, 1.0 / np.maximum(g, 1e-300))


def ipcw_rmst_values(d, tau: float, time=None, event=None) -> np.ndarray:
    """Per-row IPCW values whose mean estimates E[min(T, tau)].

    A row counts as observed when it is an event or already reached ``tau``;
    its weight is 1/G(min(T, tau)-).
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    if d is not None:
        time, event = d.time, d.event
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event, dtype=np.int64)
    trunc = np.minimum(time, tau)
    observed = (event == 1) | (time >= tau)
    G = censoring_km(time, event)
    w = _capped_inverse(G.left_limit(trunc), "rmst")
    return np.where(observed, trunc * w, 0.0)


@dataclass(frozen=True)
class SurvivalCurves:
    """Step survival curves on a shared grid: row i is S_i on ``[times[j], times[j+1])``."""

    times: np.ndarray
    surv: np.ndarray  # (n, T)

    def at(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        if j < 0:
            return np.ones(self.surv.shape[0])
        return self.surv[:, j]


def rmst_from_survival(curve, tau: float):
    """Exact integral over [0, tau] of a right-continuous step survival curve.

    ``curve`` is a KaplanMeier, SurvivalCurves (returns one value per row),
    or a ``(times, values)`` pair; the curve equals 1 before its first time.
    """
    if not tau > 0:
        raise ValueError("tau must be > 0")
    if isinstance(curve, KaplanMeier):
        times, vals = curve.times, curve.surv
    elif isinstance(curve, SurvivalCurves):
        times, vals = curve.times, curve.surv
    else:
        times, vals = (np.asarray(a, dtype=np.float64) for a in curve)
    vals = np.asarray(vals, dtype=np.float64)
    single = vals.ndim == 1
    S = vals[None, :] if single else vals
    knots = np.concatenate([[0.0], np.minimum(times, tau), [tau]])
    widths = np.diff(knots)  # piece k spans knots[k]..knots[k+1]
    level = np.hstack([np.ones((S.shape[0], 1)), S])
    area = level @ widths
    return float(area[0]) if single else area


def integrated_chf(curves: SurvivalCurves) -> np.ndarray:
    """Integral of -log S (the cumulative hazard) from 0 to the last grid time."""
    H = -np.log(np.clip(curves.surv, 1e-300, 1.0))
    widths = np.diff(curves.times)
    return H[:, :-1] @ widths if widths.size else np.zeros(H.shape[0])


def brier_score(curves: SurvivalCurves, time, event, t: float, G: Optional[KaplanMeier] = None) -> float:
    """IPCW (Graf) Brier score at a single time."""
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event, dtype=np.int64)
    G = G or censoring_km(time, event)
    S = curves.at(t)
    died = (time <= t) & (event == 1)
    alive = time > t
    w_died = _capped_inverse(G.left_limit(time[died]), "brier")
    w_alive = _capped_inverse(G(np.array([t])), "brier")[0]
    total = np.sum(S[died] ** 2 * w_died) + np.sum((1.0 - S[alive]) ** 2) * w_alive
    return float(total / time.size)


def integrated_brier(curves: SurvivalCurves, d, grid, time=None, event=None) -> float:
    """Brier score averaged over ``grid`` by the trapezoid rule in time."""
    if d is not None:
        time, event = d.time, d.event
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("grid must be nonempty and positive")
    G = censoring_km(time, event)
    scores = np.array([brier_score(curves, time, event, t, G) for t in grid])
    if grid.size == 1:
        return float(scores[0])
    return float(np.trapezoid(scores, grid) / (grid[-1] - grid[0]))


def concordance_index(time, event, risk) -> float:
    """Harrell's C: higher ``risk`` should mean earlier failure."""
    time = np.asarray(time, dtype=np.float64)
    event = np.asarray(event, dtype=np.int64)
    risk = np.asarray(risk, dtype=np.float64)
    num = 0.0
    den = 0
    for i in np.flatnonzero(event == 1):
        later = time > time[i]
        den += int(later.sum())
        num += np.sum(risk[i] > risk[later]) + 0.5 * np.sum(risk[i] == risk[later])
    return num / den if den else math.nan


# forests ------------------------------------------------------------------

@dataclass(frozen=True)
class SurvParams:
    mtry: Optional[int] = None  # default ceil(sqrt(p))
    nodesize: int = 15  # smallest node considered for a split
    min_leaf: int = 5


@dataclass(frozen=True, eq=False)
class SurvivalTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    order: np.ndarray
    chf: np.ndarray  # (n_nodes, T); leaf rows hold Nelson-Aalen estimates

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        cat = np.zeros(self.feature.shape[0], dtype=np.bool_)
        return _kernels.apply_tree(X, self.feature, self.threshold, cat, self.left, self.right)


@dataclass(frozen=True, eq=False)
class SurvivalEnsemble:
    times: np.ndarray  # distinct training event times
    trees: list
    bootstraps: list = field(default_factory=list)
    oob_chf: Optional[np.ndarray] = None  # (n_train, T), NaN rows if never OOB

    def chf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        acc = np.zeros((X.shape[0], self.times.size))
        for t in self.trees:
            acc += t.chf[t.apply(X)]
        return acc / len(self.trees)

    def curves(self, X) -> SurvivalCurves:
        return SurvivalCurves(self.times, np.exp(-self.chf(X)))

    def oob_curves(self) -> SurvivalCurves:
        return SurvivalCurves(self.times, np.exp(-self.oob_chf))


def _time_ranks(grid, time):
    return np.searchsorted(grid, time, side="right").astype(np.int64)


def grow_survival_forest(d: Dataset, n_trees: int = 250, params: SurvParams = SurvParams(),
                         rng: np.random.Generator = None, bootstrap: bool = True) -> SurvivalEnsemble:
    """Bagged log-rank trees; ensemble survival is exp(-mean Nelson-Aalen CHF)."""
    if d.family != SURVIVAL:
        raise ValueError("survival forest needs survival data")
    if not np.any(d.event == 1):
        raise ValueError("need at least one observed event")
    rng = rng if rng is not None else np.random.default_rng(0)
    n, p = d.X.shape
    grid = np.unique(d.time[d.event == 1])
    ranks = _time_ranks(grid, d.time)
    event = np.ascontiguousarray(d.event, dtype=np.int64)
    mtry = max(1, min(p, params.mtry or math.ceil(math.sqrt(p))))
    trees, boots = [], []
    oob_sum = np.zeros((n, grid.size))
    hits = np.zeros(n)
    for _ in range(n_trees):
        boot = rng.integers(0, n, n) if bootstrap else np.arange(n)
        seed = int(rng.integers(2**31 - 1))
        feature, thr, left, right, start, end, order = _kernels.build_logrank_tree(
            d.X, ranks, event, grid.size, boot.astype(np.int64), mtry, params.nodesize,
            params.min_leaf, seed)
        chf = _kernels.nelson_aalen_leaves(feature, start, end, order, ranks, event, grid.size)
        tree = SurvivalTree(feature, thr, left, right, start, end, order, chf)
        if bootstrap:
            inbag = np.zeros(n, dtype=np.bool_)
            inbag[boot] = True
            oob = np.flatnonzero(~inbag)
            if oob.size:
                oob_sum[oob] += chf[tree.apply(d.X[oob])]
                hits[oob] += 1
        trees.append(tree)
        boots.append(boot)
    with np.errstate(invalid="ignore", divide="ignore"):
        oob_chf = oob_sum / hits[:, None]
    oob_chf[hits == 0] = np.nan
    return SurvivalEnsemble(grid, trees, boots, oob_chf)


def default_brier_grid(time, event, upper_quantile: float = 0.9) -> np.ndarray:
    times = np.unique(np.asarray(time)[np.asarray(event) == 1])
    cut = np.quantile(time, upper_quantile)
    grid = times[times <= cut]
    return grid if grid.size else times[:1]


def survival_oob_error(d: Dataset, n_trees: int = 100, params: SurvParams = SurvParams(),
                       rng=None) -> float:
    """OOB integrated Brier score of a survival forest (rows never OOB dropped)."""
    ens = grow_survival_forest(d, n_trees, params, rng)
    seen = ~np.isnan(ens.oob_chf[:, 0]) if ens.times.size else np.zeros(d.n, bool)
    if not seen.any():
        return math.nan
    curves = SurvivalCurves(ens.times, np.exp(-ens.oob_chf[seen]))
    grid = default_brier_grid(d.time, d.event)
    return integrated_brier(curves, None, grid, time=d.time[seen], event=d.event[seen])


@dataclass
class SurvivalForestEstimator:
    """External estimate for survival VarPro.

    Fits a survival forest on the rule-generation rows, then reports RMST at
    ``tau`` (``kind="rmst"``) or the integrated CHF (``kind="chf"``). The
    rule-generation rows get out-of-bag values; importance rows get the
    full ensemble.
    """

    tau: Optional[float] = None
    kind: str = "rmst"
    n_trees: int = 250
    params: SurvParams = field(default_factory=SurvParams)

    def __post_init__(self):
        if self.kind not in ("rmst", "chf"):
            raise ValueError("kind must be 'rmst' or 'chf'")

    def _psi(self, curves: SurvivalCurves, tau: float) -> np.ndarray:
        if self.kind == "rmst":
            return rmst_from_survival(curves, tau)
        return integrated_chf(curves)

    def estimate(self, d: Dataset, rg, vp, rng) -> tuple:
        train = d.subset(rg)
        tau = self.tau if self.tau is not None else float(np.quantile(d.time, 0.75))
        ens = grow_survival_forest(train, self.n_trees, self.params, rng)
        oob = ens.oob_chf.copy()
        missing = np.isnan(oob[:, 0]) if oob.shape[1] else np.zeros(train.n, bool)
        if missing.any():
            oob[missing] = ens.chf(train.X[missing])
        psi_rg = self._psi(SurvivalCurves(ens.times, np.exp(-oob)), tau)
        psi_vp = self._psi(ens.curves(d.X[np.asarray(vp)]), tau)
        return psi_rg, psi_vp


@dataclass
class ColumnEstimate:
    """User-supplied per-row values standing in for the built-in estimator."""

    values: np.ndarray

    def estimate(self, d, rg, vp, rng) -> tuple:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (d.n,):
            raise ValueError("external estimate needs one value per row")
        return v[np.asarray(rg)], v[np.asarray(vp)]
