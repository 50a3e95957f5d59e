from __future__ import annotations

"""Regression, tail-index and goodness-of-fit helpers."""

import math
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from ..models import SlopeFit


# ============================================================================
# Regression
# ============================================================================

def loglog_fit(x: np.ndarray, y: np.ndarray, lo: float = -math.inf, hi: float = math.inf, floor: float = 0.0) -> Optional[SlopeFit]:
    """Least-squares slope of log|y| against log x over lo <= x <= hi.

    Points with |y| <= floor are dropped. Returns None with fewer than
    three usable points.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.abs(np.asarray(y, dtype=np.float64))
    mask = (x >= lo) & (x <= hi) & (x > 0) & (y > floor) & np.isfinite(y)
    if np.count_nonzero(mask) < 3:
        return None
    fit = stats.linregress(np.log(x[mask]), np.log(y[mask]))
    return SlopeFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        lo=float(x[mask].min()),
        hi=float(x[mask].max()),
        r_value=float(fit.rvalue),
        n_points=int(np.count_nonzero(mask)),
    )


def slope_window(n_max: float) -> tuple[float, float]:
    """The last decade [n_max/10, n_max], where decay slopes are read off."""
    return max(1.0, n_max / 10.0), float(n_max)


def loglinear_fit(t: np.ndarray, y: np.ndarray, floor: float = 0.0) -> Optional[SlopeFit]:
    """Least-squares slope of log y against t (exponential decay rate)."""
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mask = (y > floor) & np.isfinite(y)
    if np.count_nonzero(mask) < 3:
        return None
    fit = stats.linregress(t[mask], np.log(y[mask]))
    return SlopeFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        lo=float(t[mask].min()),
        hi=float(t[mask].max()),
        r_value=float(fit.rvalue),
        n_points=int(np.count_nonzero(mask)),
    )


# ============================================================================
# Survival curves
# ============================================================================

def integer_grid(n_max: int, points: int = 60) -> np.ndarray:
    """Roughly log-spaced distinct integers 0, 1, ..., n_max."""
    if n_max < 1:
        return np.zeros(1, dtype=np.int64)
    grid = np.unique(np.round(np.geomspace(1, n_max, points)).astype(np.int64))
    return np.concatenate([[0], grid])


def survival_counts(samples: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """#{samples > t} for each t in grid.

    Censored samples enter at their cap, so they count as survivors for
    every threshold below the cap and drop out above it.
    """
    ordered = np.sort(np.asarray(samples, dtype=np.float64))
    return len(ordered) - np.searchsorted(ordered, grid, side="right")


# ============================================================================
# Hill estimator
# ============================================================================

def hill_estimates(samples: np.ndarray, ks: Sequence[int]) -> np.ndarray:
    """Hill tail index 1/H(k) for each k.

    H(k) = (1/k) sum_{i<k} log X_(i) - log X_(k), descending order statistics.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64))[::-1]
    x = x[x > 0]
    n = len(x)
    logs = np.log(x)
    cumulative = np.cumsum(logs)
    out = np.full(len(ks), np.nan)
    for j, k in enumerate(ks):
        k = int(k)
        if k < 1 or k >= n:
            continue
        h = cumulative[k - 1] / k - logs[k]
        if h > 0:
            out[j] = 1.0 / h
    return out


def default_hill_k(n: int, exponent: float = 0.6) -> int:
    """k = n^0.6 top order statistics."""
    return max(2, min(n - 1, int(round(n ** exponent))))


def hill_index(samples: np.ndarray, k: Optional[int] = None) -> tuple[float, int]:
    """Hill index at k (default n^0.6) and the k used."""
    n = len(samples)
    k = default_hill_k(n) if k is None else k
    return float(hill_estimates(samples, [k])[0]), k


def hill_bootstrap(
    samples: np.ndarray,
    k: int,
    resamples: int = 500,
    rng: Optional[np.random.Generator] = None,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the Hill index at fixed k."""
    rng = rng if rng is not None else np.random.default_rng(0)
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    values = np.empty(resamples)
    for r in range(resamples):
        values[r] = hill_estimates(samples[rng.integers(0, n, size=n)], [k])[0]
    values = values[np.isfinite(values)]
    if len(values) == 0:
        return math.nan, math.nan
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(values, [tail, 1.0 - tail])
    return float(lo), float(hi)


def hill_ks(n: int, count: int = 40) -> np.ndarray:
    """k values for a Hill plot: log-spaced from 10 to n/2."""
    upper = max(11, n // 2)
    return np.unique(np.round(np.geomspace(10, upper, count)).astype(np.int64))


def plateau_median(values: np.ndarray, ks: np.ndarray, lo_frac: float = 0.25, hi_frac: float = 0.75) -> float:
    """Median Hill estimate over the middle of the k range (log scale)."""
    finite = np.isfinite(values)
    if not finite.any():
        return math.nan
    log_k = np.log(ks[finite])
    lo = log_k.min() + lo_frac * (log_k.max() - log_k.min())
    hi = log_k.min() + hi_frac * (log_k.max() - log_k.min())
    window = values[finite][(log_k >= lo) & (log_k <= hi)]
    if len(window) == 0:
        window = values[finite]
    return float(np.median(window))


def tail_constant(samples: np.ndarray, k: int, index: float) -> float:
    """c_L with P(X > t) ~ c_L t^(-index), anchored at the k-th largest value."""
    x = np.sort(np.asarray(samples, dtype=np.float64))[::-1]
    threshold = x[k]
    return float((k / len(x)) * threshold ** index)


# ============================================================================
# Kolmogorov-Smirnov
# ============================================================================

def ks_normal(samples: np.ndarray) -> float:
    """KS distance to the normal law with the sample's mean and std."""
    samples = np.asarray(samples, dtype=np.float64)
    scale = samples.std(ddof=1)
    if not scale > 0:
        return 1.0
    return float(stats.kstest(samples, "norm", args=(samples.mean(), scale)).statistic)


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    return float(stats.ks_2samp(a, b).statistic)


def robust_standardize(samples: np.ndarray) -> np.ndarray:
    """(x - median) / IQR."""
    samples = np.asarray(samples, dtype=np.float64)
    q25, q50, q75 = np.quantile(samples, [0.25, 0.5, 0.75])
    iqr = q75 - q25
    if not iqr > 0:
        return samples - q50
    return (samples - q50) / iqr


def ks_shape(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample KS after a robust affine fit of each sample."""
    return ks_two_sample(robust_standardize(a), robust_standardize(b))
