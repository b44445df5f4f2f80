"""Robust estimators used across the pipeline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sst

# Normal-consistency factor turning a MAD into a standard-deviation estimate.
MAD_TO_STD = 1.4826


@dataclass(frozen=True)
class RobustSummary:
    median: float
    mad: float
    robust_std: float
    n: int


def _as_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("empty input")
    return arr


def mad(values) -> float:
    """Median absolute deviation from the median (unscaled)."""
    arr = _as_array(values)
    return float(np.median(np.abs(arr - np.median(arr))))


def robust_std(values) -> float:
    return MAD_TO_STD * mad(values)


def robust_summary(values) -> RobustSummary:
    arr = _as_array(values)
    m = mad(arr)
    return RobustSummary(float(np.median(arr)), m, MAD_TO_STD * m, arr.size)


def theil_sen(xs, ys) -> float:
    """Median of all pairwise slopes, skipping pairs with equal x."""
    x = _as_array(xs)
    y = _as_array(ys)
    if x.size != y.size:
        raise ValueError("xs and ys must have the same length")
    if x.size < 2:
        raise ValueError("theil_sen needs at least two points")
    i, j = np.triu_indices(x.size, k=1)
    dx = x[j] - x[i]
    keep = dx != 0
    if not np.any(keep):
        raise ValueError("all x values are equal")
    return float(np.median((y[j] - y[i])[keep] / dx[keep]))


def trimmed_mean(values, fraction: float) -> float:
    """Mean after dropping ``floor(fraction * n)`` values from each tail."""
    if not 0 <= fraction < 0.5:
        raise ValueError("fraction must lie in [0, 0.5)")
    arr = np.sort(_as_array(values))
    cut = int(np.floor(fraction * arr.size))
    kept = arr[cut:arr.size - cut]
    if kept.size == 0:
        raise ValueError("nothing left after trimming")
    return float(np.mean(kept))


def spearman(xs, ys) -> float:
    """Pearson correlation of average-ranked data; NaN when a side has no rank spread."""
    x = _as_array(xs)
    y = _as_array(ys)
    if x.size != y.size:
        raise ValueError("xs and ys must have the same length")
    if x.size < 2:
        raise ValueError("spearman needs at least two points")
    rx = sst.rankdata(x) - (x.size + 1) / 2
    ry = sst.rankdata(y) - (y.size + 1) / 2
    denom = np.sqrt(np.dot(rx, rx) * np.dot(ry, ry))
    if denom == 0:
        return float("nan")
    return float(np.clip(np.dot(rx, ry) / denom, -1.0, 1.0))


def linfit_r2(xs, ys) -> tuple[float, float, float]:
    """Ordinary least squares line with its coefficient of determination.

    A constant ``ys`` has no variance to explain and reports ``r2 = 0``.
    """
    x = _as_array(xs)
    y = _as_array(ys)
    if x.size != y.size:
        raise ValueError("xs and ys must have the same length")
    if x.size < 3:
        raise ValueError("linfit_r2 needs at least three points")
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx == 0:
        raise ValueError("zero variance in x")
    slope = float(np.dot(xc, y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return slope, intercept, 0.0
    return slope, intercept, 1.0 - float(np.dot(resid, resid)) / ss_tot


def mean_ci95(values, method: str = "t") -> tuple[float, float, float]:
    """Mean and two-sided 95% interval (Student-t by default, or ``"normal"``)."""
    arr = _as_array(values)
    if arr.size < 2:
        raise ValueError("mean_ci95 needs at least two values")
    mean = float(arr.mean())
    sem = float(arr.std(ddof=1)) / np.sqrt(arr.size)
    if method == "t":
        crit = float(sst.t.ppf(0.975, arr.size - 1))
    elif method == "normal":
        crit = float(sst.norm.ppf(0.975))
    else:
        raise ValueError(f"unknown interval method {method!r}")
    return mean, mean - crit * sem, mean + crit * sem
