from __future__ import annotations

"""Partitions of [0, 1] and per-cell quadrature."""

import math
from functools import lru_cache

import numpy as np
from scipy import optimize


def refined_edges(cells: int) -> np.ndarray:
    """Edges quadratic in the index on [0, 1/2], uniform on [1/2, 1].

    The left half gets cells/2 cells with x_j = (1/2)(j/(cells/2))^2.
    """
    if cells < 2 or cells % 2:
        raise ValueError(f"cells must be a positive even number, got {cells}")
    half = cells // 2
    j = np.arange(half + 1, dtype=np.float64)
    left = 0.5 * (j / half) ** 2
    right = 0.5 + 0.5 * j[1:] / half
    return np.concatenate([left, right])


def graded_edges(cells: int, floor: float = 1e-12) -> np.ndarray:
    """Edges geometric down to ``floor`` near 0, quadratic above, uniform on [1/2, 1].

    The left half gets cells/2 cells: [0, floor], a geometric run from floor
    to a switch point x_s, then x = (1/2) t^2 for equally spaced t up to 1.
    x_s is chosen so the geometric ratio matches the relative width of the
    first quadratic cell.
    """
    if cells < 8 or cells % 2:
        raise ValueError(f"cells must be an even number of at least 8, got {cells}")
    if not 0.0 < floor < 1e-4:
        raise ValueError(f"floor must lie in (0, 1e-4), got {floor}")
    half = cells // 2
    n_geo = max(2, half // 4)
    n_quad = half - n_geo

    def mismatch(t: float) -> float:
        return 2.0 * (1.0 - t) / (n_quad * t) - math.log(0.5 * t * t / floor) / (n_geo - 1)

    t_s = optimize.brentq(mismatch, 2.0 * math.sqrt(2.0 * floor), 1.0 - 1e-12, xtol=1e-14)
    x_s = 0.5 * t_s * t_s
    geometric = np.geomspace(floor, x_s, n_geo)
    quadratic = 0.5 * np.linspace(t_s, 1.0, n_quad + 1)[1:] ** 2
    quadratic[-1] = 0.5
    right = 0.5 + 0.5 * np.arange(1, half + 1, dtype=np.float64) / half
    return np.concatenate([[0.0], geometric, quadratic, right])


def uniform_edges(cells: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, cells + 1)


def midpoints(edges: np.ndarray) -> np.ndarray:
    return 0.5 * (edges[:-1] + edges[1:])


def cell_index(edges: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Cell containing each x; x = 1 goes to the last cell."""
    idx = np.searchsorted(edges, x, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


@lru_cache(maxsize=16)
def _leggauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def gauss_nodes(lo: np.ndarray, hi: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on each [lo_i, hi_i].

    Returns arrays of shape (len(lo), order); weights sum to hi_i - lo_i.
    """
    nodes, weights = _leggauss(order)
    lo = np.asarray(lo, dtype=np.float64)[:, None]
    hi = np.asarray(hi, dtype=np.float64)[:, None]
    half = 0.5 * (hi - lo)
    return lo + half * (nodes[None, :] + 1.0), half * weights[None, :]


def cell_integrals(func, edges: np.ndarray, order: int = 16) -> np.ndarray:
    """Integral of func over each cell."""
    x, w = gauss_nodes(edges[:-1], edges[1:], order)
    return (np.asarray(func(x)) * w).sum(axis=1)


def decade_bins(lo: float = 1e-4, hi: float = 1.0, per_decade: int = 1) -> np.ndarray:
    """Edges 10^k between lo and hi; used to compare densities cell by cell."""
    count = int(round(np.log10(hi / lo) * per_decade)) + 1
    return np.geomspace(lo, hi, count)


def coarsen(edges: np.ndarray, masses: np.ndarray, bins: np.ndarray) -> np.ndarray:
    """Masses of a piecewise-constant density re-binned onto coarser bins."""
    density = masses / np.diff(edges)
    cumulative = np.concatenate([[0.0], np.cumsum(masses)])

    def mass_below(t: np.ndarray) -> np.ndarray:
        i = cell_index(edges, t)
        return cumulative[i] + density[i] * (t - edges[i])

    return np.diff(mass_below(np.asarray(bins, dtype=np.float64)))


def decade_agreement(
    edges: np.ndarray,
    masses: np.ndarray,
    counts: np.ndarray,
    lo: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Relative error of visit frequencies against a density on decade bins.

    Returns the bin edges, the density's masses, the empirical frequencies
    and |empirical / density - 1| per bin.
    """
    bins = decade_bins(lo, 1.0)
    expected = coarsen(edges, masses, bins)
    observed = coarsen(edges, np.asarray(counts, dtype=np.float64) / max(float(np.sum(counts)), 1.0), bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(observed / expected - 1.0)
    return bins, expected, observed, rel
