"""Split-weights for guided trees: lasso coefficients plus shallow-forest split counts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Dataset

TOL = 1e-7
MAX_SWEEPS = 10_000
GRAM_LIMIT = 4000  # above this many features the p x p Gram matrix is skipped


@dataclass(frozen=True)
class LassoFit:
    coef: np.ndarray  # standardised scale
    intercept: float
    lam: float
    mean: np.ndarray
    sd: np.ndarray

    def predict(self, X):
        Z = _standardize(np.asarray(X, dtype=np.float64), self.mean, self.sd)
        return self.intercept + Z @ self.coef


@dataclass(frozen=True)
class SplitWeights:
    weights: np.ndarray
    floor: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("split weights must be nonnegative and sum to 1")

    def __len__(self):
        return len(self.weights)


def _as_matrix(d):
    return d.X if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)


def _standardize(X, mean, sd):
    safe = np.where(sd > 0, sd, 1.0)
    Z = (X - mean) / safe
    Z[:, sd <= 0] = 0.0
    return Z


def _stats(X):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    # columns constant up to rounding are treated as constant
    sd[sd <= 1e-12 * (np.abs(mean) + 1.0)] = 0.0
    return mean, sd


def _path(Z, yc, lambdas):
    n, p = Z.shape
    beta0 = np.zeros(p)
    if p <= GRAM_LIMIT:
        G = Z.T @ Z / n
        c = Z.T @ yc / n
        path, _ = _kernels.lasso_cd_gram(G, c, lambdas, beta0, TOL, MAX_SWEEPS)
    else:
        path, _ = _kernels.lasso_cd_naive(np.ascontiguousarray(Z), yc, lambdas, beta0, TOL, MAX_SWEEPS)
    return path


def lambda_max(d, target) -> float:
    X = _as_matrix(d)
    y = np.asarray(target, dtype=np.float64)
    mean, sd = _stats(X)
    Z = _standardize(X, mean, sd)
    return float(np.max(np.abs(Z.T @ (y - y.mean()))) / X.shape[0])


def lambda_path(lmax: float, n_lambda: int = 50, ratio: float = 1e-3) -> np.ndarray:
    if lmax <= 0:
        return np.zeros(1)
    return np.geomspace(lmax, lmax * ratio, n_lambda)


def _check_target(X, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ValueError("target length must equal n")
    if not np.all(np.isfinite(y)):
        raise ValueError("target must be finite")
    if X.shape[0] < 2:
        raise ValueError("lasso needs n >= 2")
    return y


def lasso_fit(d, target, lam: float) -> LassoFit:
    """Squared-error lasso on standardised features.

    Minimises ``(1/2n)|y - b0 - Zb|^2 + lam |b|_1`` by cyclic coordinate
    descent, warm-started down a path ending at ``lam``. Categorical
    columns enter through their level codes.
    """
    X = _as_matrix(d)
    y = _check_target(X, target)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    mean, sd = _stats(X)
    Z = _standardize(X, mean, sd)
    yc = y - y.mean()
    lmax = float(np.max(np.abs(Z.T @ yc)) / X.shape[0])
    if lam >= lmax:
        lambdas = np.array([lam])
    else:
        head = lambda_path(lmax, 50)
        lambdas = np.append(head[head > lam], lam)
    coef = _path(Z, yc, lambdas)[-1]
    return LassoFit(coef, float(y.mean()), float(lam), mean, sd)


def select_lambda_cv(d, target, folds: int = 10, rng: np.random.Generator = None,
                     n_lambda: int = 50) -> float:
    """Penalty minimising mean held-out squared error over a log-spaced path."""
    X = _as_matrix(d)
    y = _check_target(X, target)
    n = X.shape[0]
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if n < folds:
        raise ValueError("fewer rows than folds")
    lambdas = lambda_path(lambda_max(X, y), n_lambda)
    if lambdas[0] == 0.0:
        return 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    fold_of = rng.permutation(np.arange(n) % folds)
    err = np.zeros(lambdas.size)
    for f in range(folds):
        test = fold_of == f
        Xtr, ytr = X[~test], y[~test]
        mean, sd = _stats(Xtr)
        path = _path(_standardize(Xtr, mean, sd), ytr - ytr.mean(), lambdas)
        pred = ytr.mean() + _standardize(X[test], mean, sd) @ path.T
        err += ((pred - y[test, None]) ** 2).sum(axis=0)
    err /= n
    # first minimum along the path favours the larger penalty on exact ties
    return float(lambdas[int(np.argmin(err))])


def lasso_cv_fit(d, target, folds: int = 10, rng=None) -> LassoFit:
    lam = select_lambda_cv(d, target, folds=folds, rng=rng)
    return lasso_fit(d, target, lam)


def shallow_forest_frequency(d, target, rng: np.random.Generator, n_trees: int = 50,
                             max_depth: int = 3, mtry: int | None = None,
                             min_leaf: int = 5) -> np.ndarray:
    """Normalised per-feature count of internal splits over a bagged forest of shallow trees.

    ``target`` is a length-n vector (variance splits) or an (n, L) one-hot
    matrix (Gini splits).
    """
    X = _as_matrix(d)
    n, p = X.shape
    if n < 2:
        raise ValueError("need n >= 2")
    Y = np.asarray(target, dtype=np.float64)
    Y = Y.reshape(n, -1)
    if isinstance(d, Dataset):
        is_cat, n_levels = d.categorical_mask, d.n_levels
    else:
        is_cat, n_levels = np.zeros(p, np.bool_), np.zeros(p, np.int64)
    mtry = mtry or max(1, math.ceil(math.sqrt(p)))
    uniform = np.ones(p)
    counts = np.zeros(p)
    leaf = max(1, min(min_leaf, n // 2))
    for _ in range(n_trees):
        boot = rng.integers(0, n, n)
        seed = int(rng.integers(2**31 - 1))
        feat = _kernels.build_tree(X, is_cat, n_levels, Y, boot, uniform, mtry, leaf,
                                   max_depth, seed)[0]
        np.add.at(counts, feat[feat >= 0], 1.0)
    total = counts.sum()
    return counts / total if total > 0 else counts


def combine_weights(fit, freq) -> SplitWeights:
    """``|beta|/sum|beta|`` (uniform if all zero) plus split frequency, floored at 1e-3/p.

    ``fit`` may be a LassoFit or a raw coefficient vector.
    """
    beta = np.abs(np.asarray(fit.coef if isinstance(fit, LassoFit) else fit, dtype=np.float64))
    f = np.asarray(freq, dtype=np.float64)
    if beta.shape != f.shape:
        raise ValueError("coefficient and frequency vectors differ in length")
    p = beta.size
    lasso_part = beta / beta.sum() if beta.sum() > 0 else np.full(p, 1.0 / p)
    w = lasso_part + f
    w = w / w.sum()
    eps = 1e-3 / p
    low = w < eps
    while True:
        rest = w[~low].sum()
        out = np.where(low, eps, w * (1.0 - eps * low.sum()) / rest)
        newlow = low | (out < eps)
        if newlow.sum() == low.sum():
            break
        low = newlow
    out = out / out.sum()
    return SplitWeights(out, eps)


def compute_split_weights(d, target, rng: np.random.Generator, folds: int = 10,
                          n_trees: int = 50, max_depth: int = 3) -> SplitWeights:
    """Full split-weight pipeline on one rule-generation sample.

    A 2-d ``target`` (one column per class) gets one lasso per column and the
    mean absolute coefficient; the shallow forest then splits on Gini.
    """
    X = _as_matrix(d)
    T = np.asarray(target, dtype=np.float64)
    cols = T.reshape(X.shape[0], -1)
    coefs = []
    for j in range(cols.shape[1]):
        y = cols[:, j]
        if np.ptp(y) == 0:
            coefs.append(np.zeros(X.shape[1]))
            continue
        k = min(folds, X.shape[0])
        coefs.append(np.abs(lasso_cv_fit(X, y, folds=k, rng=rng).coef))
    beta = np.mean(coefs, axis=0)
    freq = shallow_forest_frequency(d, cols if cols.shape[1] > 1 else cols[:, 0], rng,
                                    n_trees=n_trees, max_depth=max_depth)
    return combine_weights(beta, freq)
