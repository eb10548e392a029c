"""Guided CART trees, branch extraction, and a bagged forest with OOB error."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .data import CLASSIFICATION, REGRESSION, SURVIVAL, Dataset
from .rules import Interval, LevelSet, Region, Rule

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TreeParams:
    mtry: Optional[int] = None  # default ceil(sqrt(p))
    nodesize: int = 10  # smallest admissible leaf
    max_depth: Optional[int] = None

    def resolve_mtry(self, p: int) -> int:
        return max(1, min(p, self.mtry if self.mtry else math.ceil(math.sqrt(p))))


@dataclass(frozen=True, eq=False)
class Tree:
    """Array-backed binary tree.

    Leaves have ``feature == -1``. ``order[start[v]:end[v]]`` lists the
    training rows (with bootstrap repeats) that reached node ``v``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    catsplit: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    end: np.ndarray
    depth: np.ndarray
    sse: np.ndarray
    order: np.ndarray
    value: np.ndarray  # (n_nodes, n_targets) mean target per node
    n_levels: np.ndarray
    params: TreeParams = field(default_factory=TreeParams)
    stream: tuple = ()

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def leaf_rows(self, node: int) -> np.ndarray:
        return self.order[self.start[node]:self.end[node]]

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.apply_tree(X, self.feature, self.threshold, self.catsplit,
                                   self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def split_counts(self, p: int) -> np.ndarray:
        f = self.feature[self.feature >= 0]
        return np.bincount(f, minlength=p)

    def branches(self) -> dict:
        """Leaf node id -> Region of its root-to-leaf path."""
        out = {}
        stack = [(0, Region())]
        while stack:
            node, reg = stack.pop()
            f = int(self.feature[node])
            if f < 0:
                out[node] = reg
                continue
            thr = float(self.threshold[node])
            if self.catsplit[node]:
                lv = int(thr)
                others = frozenset(range(int(self.n_levels[f]))) - {lv}
                lcon, rcon = LevelSet(f, frozenset({lv})), LevelSet(f, others)
            else:
                lcon, rcon = Interval(f, upper=thr), Interval(f, lower=thr, open_lower=True)
            stack.append((int(self.right[node]), reg.restrict(rcon)))
            stack.append((int(self.left[node]), reg.restrict(lcon)))
        return out

    def dump(self, names=None) -> str:
        lines = []

        def walk(node, indent):
            f = int(self.feature[node])
            pad = "  " * indent
            if f < 0:
                lines.append(f"{pad}leaf {node}: n={self.end[node] - self.start[node]} "
                             f"value={np.round(self.value[node], 6).tolist()}")
                return
            name = names[f] if names else f"x{f + 1}"
            op = "==" if self.catsplit[node] else "<="
            lines.append(f"{pad}node {node}: {name} {op} {self.threshold[node]!r}")
            walk(int(self.left[node]), indent + 1)
            walk(int(self.right[node]), indent + 1)

        walk(0, 0)
        return "\n".join(lines)


def _target_matrix(target, n):
    Y = np.asarray(target, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != n or not np.all(np.isfinite(Y)):
        raise ValueError("target must be finite with one row per observation")
    return np.ascontiguousarray(Y)


def _node_values(out_order, start, end, Y):
    n_nodes = start.shape[0]
    cs = np.vstack([np.zeros((1, Y.shape[1])), np.cumsum(Y[out_order], axis=0)])
    sizes = np.maximum(end - start, 1)[:, None]
    return (cs[end] - cs[start]) / sizes if n_nodes else np.zeros((0, Y.shape[1]))


def build(d, target, weights, params: TreeParams, rng: np.random.Generator,
          rows=None, stream=()) -> Tree:
    X = d.X
    n, p = X.shape
    Y = _target_matrix(target, n)
    rows = np.arange(n, dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (p,):
        raise ValueError("one weight per feature required")
    seed = int(rng.integers(2**31 - 1))
    max_depth = -1 if params.max_depth is None else int(params.max_depth)
    feature, thr, cat, left, right, start, end, depth, sse, order = _kernels.build_tree(
        X, d.categorical_mask, d.n_levels, Y, rows, w, params.resolve_mtry(p),
        int(params.nodesize), max_depth, seed)
    value = _node_values(order, start, end, Y)
    return Tree(feature, thr, cat, left, right, start, end, depth, sse, order, value,
                d.n_levels, params, tuple(stream))


def grow_guided_tree(d: Dataset, weights, target, params: TreeParams = TreeParams(),
                     rng: np.random.Generator = None, stream=()) -> Tree:
    """CART on ``target`` with features drawn with probability proportional to ``weights``.

    ``target`` holds g-values (or external estimates) for every row of ``d``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    w = getattr(weights, "weights", weights)
    if d.n < 2 * params.nodesize:
        raise ValueError("need n >= 2 * nodesize")
    return build(d, target, w, params, rng, stream=stream)


def extract_branches(tree: Tree, K: int, d_vp: Dataset, min_keep: int = 5,
                     rng: np.random.Generator = None) -> list:
    """Sample up to ``K`` leaf branches holding at least ``min_keep`` importance rows."""
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    leaf_of = tree.apply(d_vp.X)
    counts = np.bincount(leaf_of, minlength=tree.n_nodes)
    leaves = tree.leaves
    eligible = leaves[counts[leaves] >= min_keep]
    if eligible.size == 0:
        return []
    if eligible.size > K:
        eligible = np.sort(rng.choice(eligible, size=K, replace=False))
    regions = tree.branches()
    tid = tree.stream[-1] if tree.stream else -1
    return [Rule(regions[int(v)], tree=tid, branch=int(v), count=int(counts[v])) for v in eligible]


@dataclass(frozen=True, eq=False)
class Forest:
    trees: list
    bootstraps: list
    oob_error: float
    task: str
    oob_prediction: np.ndarray
    n_oob_rows: int

    def predict(self, X) -> np.ndarray:
        return np.mean([t.predict(X) for t in self.trees], axis=0)


def forest_params(task: str, p: int) -> TreeParams:
    if task == REGRESSION:
        return TreeParams(mtry=max(1, math.ceil(p / 3)), nodesize=5)
    return TreeParams(mtry=max(1, math.ceil(math.sqrt(p))), nodesize=1)


def grow_forest(d: Dataset, task: Optional[str] = None, n_trees: int = 100,
                params: Optional[TreeParams] = None, rng: np.random.Generator = None,
                target=None) -> Forest:
    """Bagged CART forest with uniform feature sampling and out-of-bag error.

    Regression error is OOB MSE; classification is OOB misclassification
    rate. Survival forests live in :mod:`varpro.survival`.
    """
    task = task or d.family
    if task == SURVIVAL:
        raise ValueError("use survival.grow_survival_forest for survival data")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    n, p = d.X.shape
    params = params or forest_params(task, p)
    if task == CLASSIFICATION:
        labels = np.asarray(d.y if target is None else target, dtype=np.int64)
        L = max(d.n_classes, int(labels.max()) + 1)
        Y = np.eye(L)[labels]
    else:
        y = np.asarray(d.y if target is None else target, dtype=np.float64)
        Y = y[:, None]
    uniform = np.ones(p)
    trees, boots = [], []
    sums = np.zeros((n, Y.shape[1]))
    hits = np.zeros(n)
    for t in range(n_trees):
        boot = rng.integers(0, n, n)
        tree = build(d, Y, uniform, params, rng, rows=boot, stream=(t,))
        inbag = np.zeros(n, dtype=np.bool_)
        inbag[boot] = True
        oob = np.flatnonzero(~inbag)
        if oob.size:
            pr = tree.predict(d.X[oob])
            if task == CLASSIFICATION:
                sums[oob, np.argmax(pr, axis=1)] += 1.0
            else:
                sums[oob] += pr
            hits[oob] += 1
        trees.append(tree)
        boots.append(boot)
    seen = hits > 0
    if not seen.all():
        log.warning("%d rows were in-bag for every tree; excluded from OOB error", int((~seen).sum()))
    pred = np.full_like(sums, np.nan)
    pred[seen] = sums[seen] / hits[seen, None]
    if not seen.any():
        err = math.nan
    elif task == CLASSIFICATION:
        # ties in the vote go to the lowest label
        err = float(np.mean(np.argmax(pred[seen], axis=1) != labels[seen]))
    else:
        err = float(np.mean((pred[seen, 0] - Y[seen, 0]) ** 2))
    return Forest(trees, boots, err, task, pred, int(seen.sum()))
