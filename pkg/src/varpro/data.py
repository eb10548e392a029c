"""Datasets, response families, g-targets and seeded splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

ORDERED = "ordered"
CATEGORICAL = "categorical"

REGRESSION = "regression"
CLASSIFICATION = "classification"
SURVIVAL = "survival"
FAMILIES = (REGRESSION, CLASSIFICATION, SURVIVAL)


class SchemaError(ValueError):
    """A column named by the schema is missing or the schema is inconsistent."""


class ParseError(ValueError):
    """A cell could not be parsed into its column's kind."""


@dataclass(frozen=True)
class FeatureKind:
    kind: str = ORDERED
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in (ORDERED, CATEGORICAL):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if self.kind == CATEGORICAL and len(self.levels) < 2:
            raise ValueError("categorical feature needs at least 2 levels")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def n_levels(self) -> int:
        return len(self.levels)


# Per-row response values, mostly used by g_value and tests.
@dataclass(frozen=True)
class RealResponse:
    value: float


@dataclass(frozen=True)
class ClassResponse:
    label: int
    n_classes: int

    def __post_init__(self):
        if not 0 <= self.label < self.n_classes:
            raise ValueError("class label index out of range")


@dataclass(frozen=True)
class SurvivalResponse:
    time: float
    event: int

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time >= 0):
            raise ValueError("survival time must be finite and >= 0")
        if self.event not in (0, 1):
            raise ValueError("event indicator must be 0 or 1")


# g-targets ---------------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class ClassIndicator:
    label: int


@dataclass(frozen=True)
class SurvIndicator:
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")


@dataclass(frozen=True)
class TruncatedTime:
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")


GTarget = Identity | ClassIndicator | SurvIndicator | TruncatedTime


def g_value(g: GTarget, r) -> float:
    """Evaluate the target function ``g`` on a single response."""
    if isinstance(g, Identity):
        if not isinstance(r, RealResponse):
            raise TypeError("Identity target needs a real response")
        return float(r.value)
    if isinstance(g, ClassIndicator):
        if not isinstance(r, ClassResponse):
            raise TypeError("ClassIndicator target needs a class response")
        if not 0 <= g.label < r.n_classes:
            raise ValueError("target label not in label set")
        return 1.0 if r.label == g.label else 0.0
    if isinstance(g, SurvIndicator):
        if not isinstance(r, SurvivalResponse):
            raise TypeError("SurvIndicator target needs a survival response")
        return 1.0 if r.time > g.horizon else 0.0
    if isinstance(g, TruncatedTime):
        if not isinstance(r, SurvivalResponse):
            raise TypeError("TruncatedTime target needs a survival response")
        return min(r.time, g.tau)
    raise TypeError(f"unknown target {g!r}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-typed feature matrix plus a response.

    Categorical columns hold integer level indices stored as floats.
    ``y`` holds reals (regression) or label indices (classification);
    survival data uses ``time`` and ``event`` instead.
    """

    X: np.ndarray
    kinds: tuple
    family: str
    y: Optional[np.ndarray] = None
    time: Optional[np.ndarray] = None
    event: Optional[np.ndarray] = None
    classes: tuple = ()
    names: tuple = ()

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("X must be a 2-d array with n >= 1 and p >= 1")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        n, p = X.shape
        kinds = tuple(self.kinds) if self.kinds else tuple(FeatureKind() for _ in range(p))
        if len(kinds) != p:
            raise ValueError("one FeatureKind per column required")
        object.__setattr__(self, "kinds", kinds)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{j + 1}" for j in range(p)))
        elif len(self.names) != p:
            raise ValueError("one name per column required")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == SURVIVAL:
            t = _frozen(self.time, np.float64, n, "time")
            e = _frozen(self.event, np.int64, n, "event")
            if np.any(t < 0):
                raise ValueError("survival times must be >= 0")
            if np.any((e != 0) & (e != 1)):
                raise ValueError("event must be 0/1")
            object.__setattr__(self, "time", t)
            object.__setattr__(self, "event", e)
        elif self.family == CLASSIFICATION:
            y = _frozen(self.y, np.int64, n, "y")
            n_classes = len(self.classes) if self.classes else int(y.max()) + 1
            if not self.classes:
                object.__setattr__(self, "classes", tuple(str(c) for c in range(n_classes)))
            if np.any(y < 0) or np.any(y >= n_classes):
                raise ValueError("class label index out of range")
            object.__setattr__(self, "y", y)
        else:
            object.__setattr__(self, "y", _frozen(self.y, np.float64, n, "y"))
        for j, k in enumerate(kinds):
            if k.is_categorical:
                col = X[:, j]
                if np.any(col != np.round(col)) or np.any(col < 0) or np.any(col >= k.n_levels):
                    raise ValueError(f"column {j} holds invalid level indices")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([k.is_categorical for k in self.kinds], dtype=np.bool_)

    @property
    def n_levels(self) -> np.ndarray:
        return np.array([k.n_levels for k in self.kinds], dtype=np.int64)

    def response(self, i: int):
        if self.family == SURVIVAL:
            return SurvivalResponse(float(self.time[i]), int(self.event[i]))
        if self.family == CLASSIFICATION:
            return ClassResponse(int(self.y[i]), self.n_classes)
        return RealResponse(float(self.y[i]))

    def subset(self, idx) -> "Dataset":
        """Row subset, in the order given by ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]
        return Dataset(self.X[idx], self.kinds, self.family, y=pick(self.y),
                       time=pick(self.time), event=pick(self.event),
                       classes=self.classes, names=self.names)

    def select_features(self, cols) -> "Dataset":
        cols = [int(c) for c in cols]
        return Dataset(self.X[:, cols], tuple(self.kinds[c] for c in cols), self.family,
                       y=self.y, time=self.time, event=self.event, classes=self.classes,
                       names=tuple(self.names[c] for c in cols))


def _frozen(a, dtype, n, name):
    if a is None:
        raise ValueError(f"{name} is required for this family")
    a = np.array(a, dtype=dtype)
    if a.shape != (n,):
        raise ValueError(f"{name} must have length n={n}")
    if dtype is np.float64 and not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    a.setflags(write=False)
    return a


def g_values(g: GTarget, d: Dataset) -> np.ndarray:
    """Vectorised ``g_value`` over every row of ``d``."""
    if isinstance(g, Identity):
        if d.family != REGRESSION:
            raise TypeError("Identity target needs a regression dataset")
        return np.asarray(d.y, dtype=np.float64)
    if isinstance(g, ClassIndicator):
        if d.family != CLASSIFICATION:
            raise TypeError("ClassIndicator target needs a classification dataset")
        if not 0 <= g.label < d.n_classes:
            raise ValueError("target label not in label set")
        return (d.y == g.label).astype(np.float64)
    if isinstance(g, SurvIndicator):
        if d.family != SURVIVAL:
            raise TypeError("SurvIndicator target needs a survival dataset")
        return (d.time > g.horizon).astype(np.float64)
    if isinstance(g, TruncatedTime):
        if d.family != SURVIVAL:
            raise TypeError("TruncatedTime target needs a survival dataset")
        return np.minimum(d.time, g.tau)
    raise TypeError(f"unknown target {g!r}")


def default_target(d: Dataset, tau: Optional[float] = None) -> GTarget:
    if d.family == REGRESSION:
        return Identity()
    if d.family == CLASSIFICATION:
        return ClassIndicator(d.n_classes - 1)
    return TruncatedTime(tau if tau is not None else float(np.quantile(d.time, 0.75)))


# random streams -------------------------------------------------------------

def rng_stream(seed: int, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, index...)``.

    The same key always yields the same draws, whatever thread runs it.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.PCG64(ss))


def split_data(d: Dataset, alpha: float = 0.632, rng: np.random.Generator = None):
    """Randomly partition rows into (rule-generation, importance) index sets.

    Returns two sorted index arrays of sizes ``round(alpha*N)`` and the rest.
    """
    n = d.n if isinstance(d, Dataset) else int(d)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if n < 2:
        raise ValueError("cannot split fewer than 2 rows")
    if rng is None:
        rng = rng_stream(0)
    n_rg = min(max(int(round(alpha * n)), 1), n - 1)
    perm = rng.permutation(n)
    return np.sort(perm[:n_rg]), np.sort(perm[n_rg:])


# CSV ---------------------------------------------------------------------

@dataclass
class Schema:
    family: str = REGRESSION
    response: Optional[str] = None
    time: Optional[str] = None
    event: Optional[str] = None
    categorical: Sequence[str] = field(default_factory=tuple)
    ordered: Sequence[str] = field(default_factory=tuple)
    drop: Sequence[str] = field(default_factory=tuple)

    def response_columns(self) -> list:
        if self.family == SURVIVAL:
            if not self.time or not self.event:
                raise SchemaError("survival schema needs time and event columns")
            return [self.time, self.event]
        if not self.response:
            raise SchemaError(f"{self.family} schema needs a response column")
        return [self.response]


def _parse_float(cell, row, col):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"row {row}, column {col!r}: cannot parse {cell!r} as a number") from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}, column {col!r}: non-finite value {cell!r}")
    return v


def _looks_numeric(values) -> bool:
    try:
        for v in values:
            float(v)
    except ValueError:
        return False
    return True


def load_csv(path, schema: Schema) -> Dataset:
    """Read a headered CSV into a Dataset.

    Columns listed in ``schema.categorical`` (or holding non-numeric text)
    become categorical with levels in first-appearance order. Empty cells,
    NaN and infinities are rejected.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    resp_cols = schema.response_columns()
    for c in [*resp_cols, *schema.categorical, *schema.ordered, *schema.drop]:
        if c not in header:
            raise SchemaError(f"column {c!r} not found in header")
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise ParseError(f"row {i}: expected {len(header)} fields, got {len(r)}")
    if not rows:
        raise SchemaError("no data rows")
    cols = {h: [r[j].strip() for r in rows] for j, h in enumerate(header)}
    for h, vals in cols.items():
        for i, v in enumerate(vals, start=2):
            if v == "" or v.lower() in ("na", "nan"):
                raise ParseError(f"row {i}, column {h!r}: missing value")

    feat_names = [h for h in header if h not in resp_cols and h not in schema.drop]
    if not feat_names:
        raise SchemaError("no feature columns")
    X = np.empty((len(rows), len(feat_names)))
    kinds = []
    for j, h in enumerate(feat_names):
        vals = cols[h]
        categorical = h in schema.categorical or (h not in schema.ordered and not _looks_numeric(vals))
        if categorical:
            levels = list(dict.fromkeys(vals))
            if len(levels) < 2:
                levels.append(f"{levels[0]}__unused")
            lookup = {lv: k for k, lv in enumerate(levels)}
            X[:, j] = [lookup[v] for v in vals]
            kinds.append(FeatureKind(CATEGORICAL, tuple(levels)))
        else:
            X[:, j] = [_parse_float(v, i, h) for i, v in enumerate(vals, start=2)]
            kinds.append(FeatureKind())

    if schema.family == SURVIVAL:
        t = np.array([_parse_float(v, i, schema.time) for i, v in enumerate(cols[schema.time], start=2)])
        e = np.array([_parse_float(v, i, schema.event) for i, v in enumerate(cols[schema.event], start=2)])
        if np.any(t < 0):
            raise ParseError(f"column {schema.time!r}: negative survival time")
        if np.any((e != 0) & (e != 1)):
            raise ParseError(f"column {schema.event!r}: event must be 0 or 1")
        return Dataset(X, tuple(kinds), SURVIVAL, time=t, event=e.astype(np.int64), names=tuple(feat_names))
    raw = cols[schema.response]
    if schema.family == CLASSIFICATION:
        classes = list(dict.fromkeys(raw))
        lookup = {c: k for k, c in enumerate(classes)}
        return Dataset(X, tuple(kinds), CLASSIFICATION, y=np.array([lookup[v] for v in raw]),
                       classes=tuple(classes), names=tuple(feat_names))
    y = np.array([_parse_float(v, i, schema.response) for i, v in enumerate(raw, start=2)])
    return Dataset(X, tuple(kinds), REGRESSION, y=y, names=tuple(feat_names))


def write_csv(d: Dataset, path, response: str = "y", time: str = "time", event: str = "status",
              comments: Sequence[str] = ()):
    """Write ``d`` with a header; floats use ``repr`` so reloading is exact.

    ``comments`` become leading ``#`` lines, which :func:`load_csv` skips.
    """
    header = list(d.names)
    if d.family == SURVIVAL:
        header += [time, event]
    else:
        header.append(response)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(d.n):
            row = []
            for j, k in enumerate(d.kinds):
                v = d.X[i, j]
                row.append(k.levels[int(v)] if k.is_categorical else repr(float(v)))
            if d.family == SURVIVAL:
                row += [repr(float(d.time[i])), int(d.event[i])]
            elif d.family == CLASSIFICATION:
                row.append(d.classes[int(d.y[i])])
            else:
                row.append(repr(float(d.y[i])))
            w.writerow(row)
