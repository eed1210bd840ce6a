"""Exploratory checks of preferential attachment.

* Smoothed averages: mean increment against prior in-degree on geometric
  degree bins, with a free log-log slope and a reference line of slope 1.
* Survival: empirical ``P(D >= k)`` of in-degrees with a least-squares
  power-law fit over the body of the distribution.
* Correlation between in- and out-degrees.

Everything is returned as plain tables; writing them as CSV is left to
:func:`write_table`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from prefattach.evolution import CATEGORIES, IncrementPanel


class UndefinedCorrelationError(ValueError):
    pass


@dataclass
class BinTable:
    """Per-bin averages. ``zero_mean`` marks bins that cannot go on a log axis."""

    center: np.ndarray
    mean: np.ndarray
    count: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def zero_mean(self) -> np.ndarray:
        return self.mean == 0

    def __len__(self) -> int:
        return len(self.center)

    def rows(self):
        for row in zip(self.lower, self.upper, self.center, self.mean, self.count, self.zero_mean):
            yield (float(row[0]), float(row[1]), float(row[2]), float(row[3]), int(row[4]),
                   bool(row[5]))

    header = ("bin_lower", "bin_upper", "center", "mean_increment", "n", "zero_mean")


def _pairs(panel: IncrementPanel, category: str, t) -> tuple[np.ndarray, np.ndarray]:
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}")
    if isinstance(t, int):
        lo, hi = t, t
    else:
        lo, hi = t
    if not 1 <= lo <= hi <= panel.T:
        raise ValueError(f"time range {t} outside 1..{panel.T}")
    ks, incs = [], []
    for step in panel.iter_steps():
        if step.t > hi:
            break
        if step.t >= lo:
            ks.append(step.k_prev)
            incs.append(step.increment(category))
    k = np.concatenate(ks) if ks else np.zeros(0, dtype=np.int64)
    y = np.concatenate(incs) if incs else np.zeros(0, dtype=np.int64)
    if k.size == 0:
        raise ValueError("no existing vertices in the requested time range")
    return k, y


def bin_averages(k, y, ratio: float = 1.5) -> BinTable:
    """Average ``y`` over geometric bins ``[ratio**i, ratio**(i+1))`` of positive ``k``.

    The bin centre is the mean degree of its members; empty bins are dropped.
    """
    if not ratio > 1:
        raise ValueError("ratio must exceed 1")
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = k > 0
    k, y = k[pos], y[pos]
    if k.size == 0:
        empty = np.zeros(0)
        return BinTable(empty, empty, np.zeros(0, dtype=np.int64), empty, empty)
    # small epsilon keeps exact powers of the ratio in their own bin
    idx = np.floor(np.log(k) / math.log(ratio) + 1e-9).astype(np.int64)
    idx -= idx.min()
    count = np.bincount(idx)
    used = np.flatnonzero(count)
    base = math.floor(math.log(k.min()) / math.log(ratio) + 1e-9)
    center = np.bincount(idx, weights=k)[used] / count[used]
    mean = np.bincount(idx, weights=y)[used] / count[used]
    lower = ratio ** (used + base)
    return BinTable(center, mean, count[used], lower, lower * ratio)


def smoothed_averages(panel: IncrementPanel, category: str, t, ratio: float = 1.5) -> BinTable:
    """Binned mean increment against prior in-degree.

    Parameters
    ----------
    panel : IncrementPanel
    category : {"external", "internal", "deletion"}
    t : int or (int, int)
        A time point, or an inclusive range whose (degree, increment) pairs
        are pooled.
    ratio : float
        Geometric bin ratio.
    """
    k, y = _pairs(panel, category, t)
    return bin_averages(k, y, ratio)


def _usable(table: BinTable) -> np.ndarray:
    return (table.mean > 0) & (table.center > 0)


def fit_slope(table: BinTable, weighted: bool = True) -> tuple[float, float]:
    """Least-squares ``log mean = a + b log k`` over bins with positive mean.

    With ``weighted`` each bin counts in proportion to its total increment
    ``n * mean``, the inverse of the approximate variance of a log Poisson
    mean. Returns ``(b, a)``.
    """
    ok = _usable(table)
    if ok.sum() < 2:
        raise ValueError("need at least two bins with a positive mean")
    w = np.sqrt(table.count[ok] * table.mean[ok]) if weighted else None
    b, a = np.polyfit(np.log(table.center[ok]), np.log(table.mean[ok]), 1, w=w)
    return float(b), float(a)


def slope1_intercept(table: BinTable) -> float:
    """Intercept of the slope-1 line ``log mean = c + log k`` (least squares)."""
    ok = _usable(table)
    if not ok.any():
        raise ValueError("no bin with a positive mean")
    return float(np.mean(np.log(table.mean[ok]) - np.log(table.center[ok])))


def residual_summary(table: BinTable) -> dict:
    """Free slope plus residuals around the slope-1 line."""
    ok = _usable(table)
    c = slope1_intercept(table)
    resid = np.log(table.mean[ok]) - np.log(table.center[ok]) - c
    out = {"bins": int(len(table)), "bins_used": int(ok.sum()),
           "zero_mean_bins": int(table.zero_mean.sum()),
           "slope1_intercept": c,
           "slope1_residual_mean": float(resid.mean()),
           "slope1_residual_sd": float(resid.std(ddof=1)) if resid.size > 1 else 0.0}
    if ok.sum() >= 2:
        out["free_slope"], out["free_intercept"] = fit_slope(table)
    return out


@dataclass
class SurvivalFit:
    """Empirical survival of positive degrees and its power-law fit.

    ``slope``/``intercept`` describe ``log P(D >= k) = intercept + slope log k``
    fitted for ``k <= body_max``; they are NaN when ``degenerate``.
    ``tail_above`` is true when the degrees beyond the body lie above the
    line on average.
    """

    k: np.ndarray
    survival: np.ndarray
    slope: float
    intercept: float
    body_max: float
    degenerate: bool
    tail_above: bool | None
    notes: list = field(default_factory=list)

    def fitted(self, k) -> np.ndarray:
        return np.exp(self.intercept + self.slope * np.log(np.asarray(k, dtype=float)))

    header = ("k", "survival", "fitted", "in_body")

    def rows(self):
        fit = self.fitted(self.k) if not self.degenerate else np.full(self.k.size, np.nan)
        for k, s, f in zip(self.k, self.survival, fit):
            yield int(k), float(s), float(f), bool(k <= self.body_max)


def survival_plot_data(degrees, body_quantile: float = 0.95, min_count: int = 10) -> SurvivalFit:
    """Survival function ``P(D >= k)`` at each distinct positive degree, with fit.

    Raises ``ValueError`` with fewer than ``min_count`` positive degrees.
    """
    d = np.asarray(degrees)
    d = d[d > 0]
    if d.size < min_count:
        raise ValueError(f"need at least {min_count} positive degrees, got {d.size}")
    k, counts = np.unique(d, return_counts=True)
    # P(D >= k): mass at or above each distinct value
    surv = np.cumsum(counts[::-1])[::-1] / d.size
    body_max = float(np.quantile(d, body_quantile))
    body = k <= body_max
    notes = []
    if body.sum() < 2:
        notes.append("fewer than two distinct degrees in the body; fit rejected")
        return SurvivalFit(k, surv, math.nan, math.nan, body_max, True, None, notes)
    slope, intercept = np.polyfit(np.log(k[body]), np.log(surv[body]), 1)
    tail = ~body
    tail_above = None
    if tail.any():
        resid = np.log(surv[tail]) - (intercept + slope * np.log(k[tail]))
        tail_above = bool(resid.mean() > 0)
    return SurvivalFit(k, surv, float(slope), float(intercept), body_max, False, tail_above, notes)


def degree_correlation(indeg, outdeg) -> float:
    """Pearson correlation between in- and out-degrees."""
    a = np.asarray(indeg, dtype=float)
    b = np.asarray(outdeg, dtype=float)
    if a.shape != b.shape:
        raise ValueError("degree vectors differ in length")
    if a.size < 2:
        raise ValueError("need at least two vertices")
    a = a - a.mean()
    b = b - b.mean()
    sa, sb = math.sqrt(float(a @ a)), math.sqrt(float(b @ b))
    if sa == 0 or sb == 0:
        raise UndefinedCorrelationError("a degree vector has zero variance")
    return float(a @ b) / (sa * sb)


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
