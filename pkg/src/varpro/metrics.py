"""Selection accuracy against a known signal set."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def p(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _signal_set(truth):
    return set(int(i) for i in getattr(truth, "signal", truth))


def confusion(selected, truth, p: int) -> ConfusionCounts:
    sel = set(int(i) for i in selected)
    sig = _signal_set(truth)
    if any(i < 0 or i >= p for i in sel | sig):
        raise ValueError("index out of range")
    tp = len(sel & sig)
    fp = len(sel - sig)
    fn = len(sig - sel)
    return ConfusionCounts(tp, fp, p - tp - fp - fn, fn)


def _rate(a, b):
    return a / (a + b) if a + b else 0.0


def gmean(c: ConfusionCounts) -> float:
    """sqrt(TPR * TNR), with 0/0 rates taken as 0."""
    return math.sqrt(_rate(c.tp, c.fn) * _rate(c.tn, c.fp))


def precision_accuracy(c: ConfusionCounts) -> tuple:
    precision = _rate(c.tp, c.fp)
    accuracy = (c.tp + c.tn) / c.p if c.p else 0.0
    return precision, accuracy


def pr_curve(scores, truth) -> list:
    """(recall, precision) after each distinct threshold, highest score first.

    Tied scores enter together.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    sig = _signal_set(truth)
    is_sig = np.zeros(scores.size, dtype=bool)
    is_sig[list(sig)] = True
    n_sig = int(is_sig.sum())
    if n_sig == 0:
        raise ValueError("truth has no signal variables")
    points = []
    for thr in np.unique(scores)[::-1]:
        chosen = scores >= thr
        tp = int((chosen & is_sig).sum())
        points.append((tp / n_sig, tp / int(chosen.sum())))
    return points


def auc_pr(scores, truth) -> float:
    """Step-interpolated area under the precision-recall curve."""
    area = 0.0
    prev = 0.0
    for recall, precision in pr_curve(scores, truth):
        area += (recall - prev) * precision
        prev = recall
    return area
