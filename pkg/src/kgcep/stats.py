"""Pearson and Spearman correlation between metric series."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UndefinedCorrelation(ValueError):
    """Correlation is undefined, e.g. one series is constant."""


@dataclass(frozen=True)
class MetricSeries:
    name: str
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"series {self.name!r} has non-finite values")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


def _values(x):
    if isinstance(x, MetricSeries):
        x = x.values
    return np.asarray(x, dtype=np.float64).ravel()


def pearson(x, y) -> float:
    """Sample Pearson coefficient, centring both series before accumulating."""
    x, y = _values(x), _values(y)
    if x.shape != y.shape:
        raise ValueError("series lengths differ")
    if x.size < 2:
        raise ValueError("need at least two observations")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("series must be finite")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelation("correlation undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def rankdata(x) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    x = _values(x)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    xs = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of the fractional ranks."""
    x, y = _values(x), _values(y)
    if x.shape != y.shape:
        raise ValueError("series lengths differ")
    return pearson(rankdata(x), rankdata(y))


def correlate(x, y) -> tuple:
    """``(pearson, spearman)``; an undefined coefficient is returned as ``None``."""
    out = []
    for fn in (pearson, spearman):
        try:
            out.append(fn(x, y))
        except UndefinedCorrelation:
            out.append(None)
    return tuple(out)
