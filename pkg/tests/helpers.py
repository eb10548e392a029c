"""Independent oracles shared by the module tests and the acceptance suite."""

import numpy as np

from varpro.splitweight import _standardize, lasso_fit


def kkt_residual(X, y, fit) -> float:
    """Largest violation of the lasso optimality conditions for ``fit``."""
    X = np.asarray(X, dtype=float)
    Z = _standardize(X, fit.mean, fit.sd)
    r = (y - y.mean()) - Z @ fit.coef
    grad = Z.T @ r / X.shape[0]
    worst = 0.0
    for j in range(X.shape[1]):
        if fit.sd[j] == 0:
            continue
        if fit.coef[j] == 0:
            worst = max(worst, abs(grad[j]) - fit.lam)
        else:
            worst = max(worst, abs(grad[j] - fit.lam * np.sign(fit.coef[j])))
    return worst


def random_lasso_problem(rng):
    n = int(rng.integers(10, 120))
    p = int(rng.integers(1, 60))
    X = rng.standard_normal((n, p))
    if p > 1 and rng.random() < 0.5:
        X[:, 1:] += rng.uniform(0, 3) * X[:, :1]  # correlated columns
    beta = rng.standard_normal(p) * (rng.random(p) < 0.3)
    y = X @ beta + rng.standard_normal(n)
    lmax = np.max(np.abs(((X - X.mean(0)) / np.where(X.std(0) > 0, X.std(0), 1)).T
                        @ (y - y.mean()))) / n
    lam = float(lmax * rng.choice([1e-3, 1e-2, 0.1, 0.5, 0.9]))
    return X, y, lam


def soft_threshold(z, lam):
    return np.sign(z) * max(abs(z) - lam, 0.0)


def single_feature_check(rng):
    n = int(rng.integers(5, 200))
    x = rng.standard_normal(n) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
    y = 2.0 * x + rng.standard_normal(n) * rng.uniform(0.1, 5)
    z = (x - x.mean()) / x.std()
    rho = float(z @ (y - y.mean()) / n)
    lam = abs(rho) * float(rng.uniform(0, 1.5))
    fit = lasso_fit(x[:, None], y, lam)
    return abs(fit.coef[0] - soft_threshold(rho, lam))


def straight_delta(rules, S, X, vals):
    """Weighted mean absolute change of the region mean, recomputed row by row."""
    S = set(S)
    total_m, acc = 0, 0.0
    for rule in rules:
        base = [i for i in range(X.shape[0]) if all(c.holds(X[i, c.feature]) for c in rule.region.constraints)]
        rel = [i for i in range(X.shape[0]) if all(c.holds(X[i, c.feature])
                                                   for c in rule.region.constraints if c.feature not in S)]
        m = len(base)
        total_m += m
        acc += m * abs(sum(vals[i] for i in rel) / len(rel) - sum(vals[i] for i in base) / m)
    return acc / total_m if total_m else 0.0
