"""Regions built from per-feature constraints, and their release."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lower, upper]``; ``open_lower`` excludes ``lower``.

    Trees send ``x <= c`` left and ``x > c`` right, so a right child is
    ``Interval(c, inf, open_lower=True)``.
    """

    feature: int
    lower: float = -math.inf
    upper: float = math.inf
    open_lower: bool = False

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("interval needs lower <= upper")

    def mask(self, col: np.ndarray) -> np.ndarray:
        lo = col > self.lower if self.open_lower else col >= self.lower
        return lo & (col <= self.upper)

    def holds(self, v: float) -> bool:
        lo = v > self.lower if self.open_lower else v >= self.lower
        return bool(lo and v <= self.upper)

    def intersect(self, other: "Interval") -> "Interval":
        lower, open_lower = self.lower, self.open_lower
        if other.lower > lower or (other.lower == lower and other.open_lower):
            lower, open_lower = other.lower, other.open_lower
        upper = min(self.upper, other.upper)
        if upper < lower:
            upper = lower  # empty region; stays representable
        return Interval(self.feature, lower, upper, open_lower)

    def to_record(self) -> dict:
        return {"feature": self.feature, "kind": "interval", "lower": _num(self.lower),
                "upper": _num(self.upper), "open_lower": self.open_lower}


@dataclass(frozen=True)
class LevelSet:
    feature: int
    levels: frozenset

    def __post_init__(self):
        if not self.levels:
            raise ValueError("level set must be nonempty")
        object.__setattr__(self, "levels", frozenset(int(v) for v in self.levels))

    def mask(self, col: np.ndarray) -> np.ndarray:
        return np.isin(col, np.fromiter(self.levels, dtype=np.float64))

    def holds(self, v: float) -> bool:
        return int(v) in self.levels

    def intersect(self, other: "LevelSet") -> "LevelSet":
        both = self.levels & other.levels
        if not both:
            raise ValueError("empty level-set intersection")
        return LevelSet(self.feature, both)

    def to_record(self) -> dict:
        return {"feature": self.feature, "kind": "levels", "levels": sorted(self.levels)}


def _num(v):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


Constraint = Interval | LevelSet


@dataclass(frozen=True)
class Region:
    """Conjunction of constraints, at most one per feature."""

    constraints: tuple = ()

    def __post_init__(self):
        cons = tuple(sorted(self.constraints, key=lambda c: c.feature))
        feats = [c.feature for c in cons]
        if len(set(feats)) != len(feats):
            raise ValueError("duplicate feature in region")
        if any(f < 0 for f in feats):
            raise ValueError("negative feature index")
        object.__setattr__(self, "constraints", cons)

    @property
    def features(self) -> tuple:
        return tuple(c.feature for c in self.constraints)

    def constraint(self, feature: int):
        for c in self.constraints:
            if c.feature == feature:
                return c
        return None

    def restrict(self, c) -> "Region":
        """Add ``c``, intersecting with any existing constraint on its feature."""
        old = self.constraint(c.feature)
        if old is not None:
            if type(old) is not type(c):
                raise TypeError("mixed constraint kinds on one feature")
            c = old.intersect(c)
        rest = tuple(x for x in self.constraints if x.feature != c.feature)
        return Region(rest + (c,))

    def to_records(self) -> list:
        return [c.to_record() for c in self.constraints]


def _check_kind(c, kinds):
    if kinds is None:
        return
    if c.feature >= len(kinds):
        raise IndexError(f"feature {c.feature} out of range")
    cat = kinds[c.feature].is_categorical
    if cat and isinstance(c, Interval):
        raise TypeError(f"interval constraint on categorical feature {c.feature}")
    if not cat and isinstance(c, LevelSet):
        raise TypeError(f"level-set constraint on ordered feature {c.feature}")


def contains(r: Region, x, kinds=None) -> bool:
    """True iff the point ``x`` satisfies every constraint of ``r``."""
    x = np.asarray(x, dtype=np.float64)
    for c in r.constraints:
        _check_kind(c, kinds)
        if c.feature >= x.shape[0]:
            raise IndexError(f"feature {c.feature} out of range")
        if not c.holds(x[c.feature]):
            return False
    return True


def region_mask(r: Region, X: np.ndarray, kinds=None) -> np.ndarray:
    mask = np.ones(X.shape[0], dtype=np.bool_)
    for c in r.constraints:
        _check_kind(c, kinds)
        mask &= c.mask(X[:, c.feature])
    return mask


def membership_count(r, d) -> tuple:
    """``(count, ascending row indices)`` of rows of ``d`` inside the region."""
    region = r.region if isinstance(r, Rule) else r
    X, kinds = (d.X, d.kinds) if hasattr(d, "X") else (np.asarray(d), None)
    idx = np.flatnonzero(region_mask(region, X, kinds))
    return idx.size, idx


@dataclass(frozen=True)
class Rule:
    region: Region
    tree: int = -1
    branch: int = -1
    count: int = -1  # membership over the importance data, -1 if unattached

    def attach(self, d) -> "Rule":
        return replace(self, count=membership_count(self.region, d)[0])

    def to_record(self) -> dict:
        return {"tree": self.tree, "branch": self.branch, "count": self.count,
                "constraints": self.region.to_records()}


def release(r, S: Iterable[int], p: int | None = None):
    """Drop every constraint on a feature in ``S``.

    Accepts a Rule or a bare Region and returns the same type. The
    released rule's cached count is cleared.
    """
    S = {int(s) for s in S}
    if any(s < 0 or (p is not None and s >= p) for s in S):
        raise IndexError("release index out of range")
    region = r.region if isinstance(r, Rule) else r
    kept = Region(tuple(c for c in region.constraints if c.feature not in S))
    if isinstance(r, Rule):
        if len(kept.constraints) == len(region.constraints):
            return r
        return replace(r, region=kept, count=-1)
    return kept


def complement_release(r, S: Iterable[int]):
    """Keep only the constraints on ``S`` (release everything else)."""
    S = {int(s) for s in S}
    region = r.region if isinstance(r, Rule) else r
    kept = Region(tuple(c for c in region.constraints if c.feature in S))
    return replace(r, region=kept, count=-1) if isinstance(r, Rule) else kept


@dataclass
class RuleMasks:
    """Per-constraint membership over one dataset, for fast repeated release.

    ``fails`` counts, per row, how many constraints the row violates, so the
    rows of the rule released along a single feature ``s`` are those with
    zero failures or exactly one failure located on ``s``.
    """

    rule: Rule
    features: np.ndarray
    ok: np.ndarray  # (n_constraints, n) bool
    fails: np.ndarray = field(init=False)

    def __post_init__(self):
        self.fails = (~self.ok).sum(axis=0)

    @classmethod
    def build(cls, rule: Rule, X: np.ndarray) -> "RuleMasks":
        cons = rule.region.constraints
        ok = np.empty((len(cons), X.shape[0]), dtype=np.bool_)
        for k, c in enumerate(cons):
            ok[k] = c.mask(X[:, c.feature])
        return cls(rule, np.array([c.feature for c in cons], dtype=np.int64), ok)

    def base(self) -> np.ndarray:
        return self.fails == 0

    def released_single(self, k: int) -> np.ndarray:
        """Rows of the rule released along its ``k``-th constrained feature."""
        return (self.fails == 0) | ((self.fails == 1) & ~self.ok[k])
