"""Simulation designs with known signal variables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .data import (CATEGORICAL, CLASSIFICATION, REGRESSION, SURVIVAL, Dataset, FeatureKind,
                   rng_stream)


@dataclass(frozen=True)
class TruthSet:
    """0-based indices of signal variables (optionally per class)."""

    signal: tuple
    per_class: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.signal:
            raise ValueError("a simulation must have at least one signal variable")

    def mask(self, p: int) -> np.ndarray:
        m = np.zeros(p, dtype=bool)
        m[list(self.signal)] = True
        return m

    def to_dict(self, names=None) -> dict:
        out = {"signal_indices": [i + 1 for i in self.signal]}
        if names is not None:
            out["signal_names"] = [names[i] for i in self.signal]
        if self.per_class:
            out["per_class_emphasis"] = {k: [i + 1 for i in v] for k, v in self.per_class.items()}
        return out


@dataclass(frozen=True)
class SimSpec:
    model: str
    n: Optional[int] = None
    p: Optional[int] = None
    correlation: str = "none"  # none | copula | block
    rho: float = 0.9
    seed: int = 0


# feature laws and response functions -------------------------------------------------

def _unif(a, b):
    return stats.uniform(loc=a, scale=b - a)


_NORMAL = stats.norm()


def _cobra2(x):
    return x[:, 0] * x[:, 1] + x[:, 2] ** 2 - x[:, 3] * x[:, 6] + x[:, 7] * x[:, 9] - x[:, 5] ** 2


def _friedman1(x):
    return (10 * np.sin(np.pi * x[:, 0] * x[:, 1]) + 20 * (x[:, 2] - 0.5) ** 2
            + 10 * x[:, 3] + 5 * x[:, 4])


def _friedman3(x):
    return np.arctan((x[:, 1] * x[:, 2] - 1 / (x[:, 1] * x[:, 3])) / x[:, 0])


def _inx1(x):
    return x[:, 0] * x[:, 1] ** 2 * np.sqrt(np.abs(x[:, 2])) + np.floor(x[:, 3] - x[:, 4] * x[:, 5])


def _inx2(x):
    den = np.abs(x[:, 3]) + np.abs(x[:, 4]) + np.abs(x[:, 5])
    return x[:, 2] * (x[:, 0] + 1) ** np.abs(x[:, 1]) - np.sqrt(x[:, 4] ** 2 / den)


def _inx3(x):
    return (np.cos(x[:, 0] - x[:, 1]) + np.arcsin(x[:, 0] * x[:, 2])
            - np.arctan(x[:, 1] - x[:, 2] ** 2))


def _lm(x):
    return x[:, :15].sum(axis=1)


def _lmi1(x):
    f1 = x[:, :10].sum(axis=1)
    f2 = x[:, 10:20].sum(axis=1)
    return 0.05 * f1 + np.exp(0.02 * f1 * f2)


def _lmi2(x):
    return 3 * x[:, :15].sum(axis=1) ** 2


def _sup(x):
    return 10 * x[:, 0] * x[:, 1] + 0.25 / (x[:, 2] * x[:, 3] + 10 * x[:, 4] * x[:, 5])


def _sup2(x):
    return (np.pi ** (x[:, 0] * x[:, 1]) * np.sqrt(2 * x[:, 2]) - np.arcsin(x[:, 3])
            + np.log(x[:, 2] + x[:, 4]) - x[:, 8] / x[:, 9] * np.sqrt(x[:, 6] / x[:, 7])
            - x[:, 1] * x[:, 6])


@dataclass(frozen=True)
class _Model:
    fn: Callable
    signal: tuple  # 1-based, as written in the model formula
    noise_sd: float
    marginal: Callable  # column index -> frozen scipy distribution
    n: int = 2000
    p: int = 40
    min_p: int = 1
    blocks: tuple = ()  # block correlation groups (0-based) when correlated
    threshold: Optional[float] = None  # indicator response I{psi + eps > threshold}


REGRESSION_MODELS = {
    "cobra2": _Model(_cobra2, (1, 2, 3, 4, 6, 7, 8, 10), 0.1, lambda j: _unif(-1, 1), min_p=10),
    "cobra8": _Model(lambda x: x[:, 0] + x[:, 3] ** 3 + x[:, 8] + np.sin(x[:, 1] * x[:, 7]),
                     (1, 2, 4, 8, 9), 0.1, lambda j: _unif(-0.25, 1), min_p=9, threshold=0.38),
    "friedman1": _Model(_friedman1, (1, 2, 3, 4, 5), 1.0, lambda j: _unif(0, 1), min_p=5),
    "friedman3": _Model(_friedman3, (1, 2, 3, 4), 1.0,
                        lambda j: {0: _unif(0, 100), 1: _unif(40 * np.pi, 560 * np.pi)}.get(j, _unif(0, 1)),
                        min_p=4),
    "inx1": _Model(_inx1, (1, 2, 3, 4, 5, 6), 0.1, lambda j: _unif(-1, 1), min_p=6),
    "inx2": _Model(_inx2, (1, 2, 3, 4, 5, 6), 0.1, lambda j: _unif(-1, 1), min_p=6),
    "inx3": _Model(_inx3, (1, 2, 3), 0.1, lambda j: _unif(-1, 1), min_p=3),
    "lm": _Model(_lm, tuple(range(1, 16)), 15.0, lambda j: _NORMAL, min_p=15,
                 blocks=(tuple(range(0, 5)), tuple(range(5, 10)), tuple(range(10, 15)))),
    "lmi1": _Model(_lmi1, tuple(range(1, 21)), 0.1, lambda j: _unif(0, 1), min_p=20),
    "lmi2": _Model(_lmi2, tuple(range(1, 16)), 15.0, lambda j: _NORMAL, min_p=15,
                   blocks=(tuple(range(0, 5)), tuple(range(5, 10)), tuple(range(10, 15)))),
    "sup": _Model(_sup, (1, 2, 3, 4, 5, 6), 0.5, lambda j: _unif(0.05, 1), min_p=6),
    "sup2": _Model(_sup2, (1, 2, 3, 4, 5, 7, 8, 9, 10), 0.5, lambda j: _unif(0.5, 1), min_p=10),
    "supX": _Model(_sup, (1, 2, 3, 4, 5, 6), 0.5, lambda j: _unif(0.05, 1), n=500, p=200, min_p=6),
    "supX2": _Model(_sup2, (1, 2, 3, 4, 5, 7, 8, 9, 10), 0.5, lambda j: _unif(0.5, 1),
                    n=500, p=200, min_p=10),
}

COREL_MODELS = {
    # name: (n, extra noise columns, a1/a2 informative, x1/x2 informative)
    "corelearn1": (300, 0, False, False),
    "corelearn2": (200, 0, False, False),
    "corelearn3": (100, 0, True, False),
    "corelearn4": (100, 0, True, True),
    "corelearn5": (100, 50, True, True),
    "corelearn6": (100, 200, True, True),
}

MODELS = tuple(REGRESSION_MODELS) + tuple(COREL_MODELS)


def equicorrelated_normal(rng, n, p, rho):
    """Standard normal columns with common pairwise correlation ``rho``."""
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    z = rng.standard_normal((n, p))
    if rho > 0:
        z = math.sqrt(1 - rho) * z + math.sqrt(rho) * rng.standard_normal((n, 1))
    return z


def _latent(rng, n, p, spec_corr, rho, blocks):
    z = rng.standard_normal((n, p))
    if spec_corr == "copula" and rho > 0:
        z = math.sqrt(1 - rho) * z + math.sqrt(rho) * rng.standard_normal((n, 1))
    elif spec_corr == "block" and rho > 0:
        for blk in blocks:
            blk = [j for j in blk if j < p]
            z[:, blk] = math.sqrt(1 - rho) * z[:, blk] + math.sqrt(rho) * rng.standard_normal((n, 1))
    elif spec_corr not in ("none", "copula", "block"):
        raise ValueError(f"unknown correlation mode {spec_corr!r}")
    return z


def apply_copula(d, rho: float, rng: np.random.Generator = None):
    """Impose an equicorrelated Gaussian copula while keeping each column's marginal.

    Each column's own values are re-assigned to rows in the rank order of a
    correlated Gaussian draw, i.e. pushed through the column's empirical
    inverse CDF at Phi(Z). Accepts a Dataset or a bare matrix.
    """
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    X = d.X if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)
    n, p = X.shape
    z = equicorrelated_normal(rng, n, p, rho)
    ranks = np.argsort(np.argsort(z, axis=0, kind="stable"), axis=0, kind="stable")
    out = np.take_along_axis(np.sort(X, axis=0), ranks, axis=0)
    if isinstance(d, Dataset):
        return Dataset(out, d.kinds, d.family, y=d.y, time=d.time, event=d.event,
                       classes=d.classes, names=d.names)
    return out


def _spec_defaults(spec: SimSpec, model: _Model):
    n = spec.n or model.n
    p = spec.p or model.p
    if p < model.min_p:
        raise ValueError(f"{spec.model} needs p >= {model.min_p}")
    return n, p


def generate_regression(spec: SimSpec) -> tuple:
    """Draw one dataset from a named benchmark model; returns (Dataset, TruthSet)."""
    if spec.model in COREL_MODELS:
        return _generate_corelearn(spec)
    if spec.model not in REGRESSION_MODELS:
        raise ValueError(f"unknown model {spec.model!r}")
    model = REGRESSION_MODELS[spec.model]
    n, p = _spec_defaults(spec, model)
    rng = rng_stream(spec.seed, 1)
    corr = spec.correlation
    if corr == "copula" and model.blocks:
        corr = "block"  # lm / lmi2 correlate only within blocks of the signal
    z = _latent(rng, n, p, corr, spec.rho, model.blocks)
    u = stats.norm.cdf(z)
    X = np.empty((n, p))
    for j in range(p):
        X[:, j] = model.marginal(j).ppf(u[:, j])
    eps = rng.normal(0.0, model.noise_sd, n)
    if model.threshold is not None:
        y = (model.fn(X) + eps > model.threshold).astype(np.float64)
    else:
        y = model.fn(X) + eps
    d = Dataset(X, (), REGRESSION, y=y)
    return d, TruthSet(tuple(j - 1 for j in model.signal))


def _generate_corelearn(spec: SimSpec) -> tuple:
    n0, extra, a_info, x_info = COREL_MODELS[spec.model]
    n = spec.n or n0
    rng = rng_stream(spec.seed, 1)
    q = rng.uniform(size=n)  # latent switch probability
    switch = rng.uniform(size=n) < q
    x = rng.uniform(size=(n, 6))
    if x_info:
        x[:, 0] = np.clip(q + rng.normal(0, 0.05, n), 0, 1)
        x[:, 1] = np.clip(q + rng.normal(0, 0.05, n), 0, 1)
    quart = np.minimum((q * 4).astype(int), 3)
    a = rng.integers(0, 4, size=(n, 4)).astype(np.float64)
    if a_info:
        a[:, 0] = quart
        a[:, 1] = quart
    noise = rng.uniform(size=(n, extra))
    lin = x[:, 3] - 2 * x[:, 4] + 3 * x[:, 5]
    nonlin = np.cos(4 * np.pi * x[:, 3]) * (2 * x[:, 4] - 3 * x[:, 5])
    y = np.where(switch, lin, nonlin) + rng.normal(0, 0.1, n)
    X = np.hstack([x, a, noise])
    p_total = X.shape[1]
    if spec.p and spec.p > p_total:
        X = np.hstack([X, rng.uniform(size=(n, spec.p - p_total))])
    levels = tuple(str(k) for k in range(4))
    kinds = tuple([FeatureKind()] * 6 + [FeatureKind(CATEGORICAL, levels)] * 4
                  + [FeatureKind()] * (X.shape[1] - 10))
    names = tuple([f"x{j + 1}" for j in range(6)] + [f"a{j + 1}" for j in range(4)]
                  + [f"noise{j + 1}" for j in range(X.shape[1] - 10)])
    signal = [3, 4, 5]
    if a_info:
        signal += [6, 7]
    if x_info:
        signal += [0, 1]
    return Dataset(X, kinds, REGRESSION, y=y, names=names), TruthSet(tuple(sorted(signal)))


def multiclass_probabilities(X: np.ndarray) -> np.ndarray:
    """Softmax class probabilities for the three-class design (columns 1-3, 4-6, 7-9)."""
    beta = np.zeros((X.shape[1], 3))
    for l in range(3):
        beta[3 * l:3 * l + 3, l] = 1.0
    eta = X @ beta
    eta -= eta.max(axis=1, keepdims=True)
    phi = np.exp(eta)
    return phi / phi.sum(axis=1, keepdims=True)


def generate_multiclass(n: int = 2000, p: int = 20, rho_pairs=((3, 10), (6, 15), (9, 20)),
                        rho: float = 0.9, seed: int = 0) -> tuple:
    """Three-class softmax model; y is the most probable class (ties to the lowest label)."""
    if p < 9:
        raise ValueError("multiclass design needs p >= 9")
    rng = rng_stream(seed, 2)
    X = rng.standard_normal((n, p))
    for a, b in rho_pairs:
        if b <= p:
            X[:, b - 1] = rho * X[:, a - 1] + math.sqrt(1 - rho ** 2) * X[:, b - 1]
    y = np.argmax(multiclass_probabilities(X), axis=1)
    d = Dataset(X, (), CLASSIFICATION, y=y, classes=("1", "2", "3"))
    emphasis = {"1": (0, 1, 2), "2": (3, 4, 5), "3": (6, 7, 8)}
    return d, TruthSet(tuple(range(9)), per_class=emphasis)


V_RATES = (0.5, 1.0, 1.5, 3.0)
V_WEIGHTS = (0.4, 0.1, 0.2, 0.3)


def draw_v(rng, n):
    comp = rng.choice(4, size=n, p=V_WEIGHTS)
    return rng.exponential(1.0, n) / np.asarray(V_RATES)[comp]


def calibrate_censoring(t_true: np.ndarray, e_std: np.ndarray, target: float, tol: float = 1e-12) -> float:
    """Exponential censoring rate whose realised censoring fraction is closest to ``target``.

    Censoring times are ``e_std / rate``; the censored fraction grows with rate.
    """
    frac = lambda rate: float(np.mean(e_std / rate < t_true))
    lo, hi = 1e-8, 1.0
    while frac(hi) < target and hi < 1e12:
        hi *= 2.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi / lo - 1 < tol:
            break
    return hi if abs(frac(hi) - target) <= abs(frac(lo) - target) else lo


def generate_survival(n: int = 200, p: int = 500, censor_rate: float = 0.5, seed: int = 0,
                      p0: int = 10, rho: float = 3 / 7) -> tuple:
    """Exponential-mixture survival model with signal in the squared first ``p0`` features."""
    if p < p0:
        raise ValueError("p must be >= p0")
    if not 0 <= censor_rate < 1:
        raise ValueError("censor_rate must lie in [0, 1)")
    rng = rng_stream(seed, 3)
    z = rng.standard_normal((n, p))
    z[:, :p0] = math.sqrt(1 - rho) * z[:, :p0] + math.sqrt(rho) * rng.standard_normal((n, 1))
    X = stats.norm.cdf(z)
    beta = 0.5 * math.log(1 + math.sqrt(p / p0))
    v = draw_v(rng, n)
    t_true = np.log1p(v * np.exp(beta * (X[:, :p0] ** 2).sum(axis=1)))
    e_std = rng.exponential(1.0, n)
    if censor_rate > 0:
        rate = calibrate_censoring(t_true, e_std, censor_rate)
        cens = e_std / rate
    else:
        cens = np.full(n, np.inf)
    time = np.minimum(t_true, cens)
    event = (t_true <= cens).astype(np.int64)
    d = Dataset(X, (), SURVIVAL, time=time, event=event)
    return d, TruthSet(tuple(range(p0)))


def generate_markov(n: int = 1500, p: int = 150, beta: float = 0.25, rho: float = 0.4,
                    seed: int = 0) -> tuple:
    """y = x1 + x2 + eps with x3, x4 exact mixtures of x1 and x2."""
    if p < 4:
        raise ValueError("markov design needs p >= 4")
    rng = rng_stream(seed, 4)
    X = equicorrelated_normal(rng, n, p, rho)
    X[:, 2] = beta * X[:, 0] + (1 - beta) * X[:, 1]
    X[:, 3] = (1 - beta) * X[:, 0] + beta * X[:, 1]
    y = X[:, 0] + X[:, 1] + rng.standard_normal(n)
    return Dataset(X, (), REGRESSION, y=y), TruthSet((0, 1, 2, 3))


def simulate(model: str, n=None, p=None, rho: float = 0.0, seed: int = 0, **kw) -> tuple:
    """Dispatch by model name, as the CLI does."""
    if model in REGRESSION_MODELS or model in COREL_MODELS:
        corr = "copula" if rho > 0 else "none"
        return generate_regression(SimSpec(model, n, p, corr, rho or 0.9, seed))
    if model == "multiclass":
        return generate_multiclass(n or 2000, p or 20, rho=rho or 0.9, seed=seed)
    if model == "survival":
        return generate_survival(n or 200, p or 500, kw.get("censor_rate", 0.5), seed=seed)
    if model == "markov":
        return generate_markov(n or 1500, p or 150, kw.get("beta", 0.25), rho=rho or 0.4, seed=seed)
    raise ValueError(f"unknown model {model!r}")
