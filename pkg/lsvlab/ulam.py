from __future__ import annotations

"""Ulam discretization of the annealed transfer operator.

M[i, j] is the probability that a nu-random image of a uniform point of
cell i lands in cell j. Each branch is monotone, so the mass sent into a
target cell is the length of a branch preimage; the entries are exact in x
and use a quadrature only over the parameter.
"""

import json
import logging
import math
import warnings
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from numba import njit
from scipy import sparse

from . import __version__
from .errors import DomainError, QuadratureError, StatisticalNoiseWarning
from .maps import INVERSE_MAX_ITER, INVERSE_TOL, left_inverse, left_step
from .models import CorrelationSeries, InducedDiagnostic, LawKind, Observable, ParamLaw, SlopeFit, UlamModel
from .orbits import _bin_index, induced_endpoints, lagged_points, occupation_mean, uniform_entries
from .params import SeededStream, parameter_quadrature
from .utils.cache import OperatorCache, cached_build
from .utils.ensemble import run_tasks, stream_chunks, sum_arrays
from .utils.grids import cell_integrals, graded_edges
from .utils.io import write_json, write_table
from .utils.markov import check_row_stochastic, fixed_point_residual, push, stationary_vector
from .utils.stats import integer_grid, loglog_fit, slope_window

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-8
MIN_CELLS = 64
MC_SAMPLES_PER_STREAM = 256
DIAGNOSTIC_SAMPLES_PER_STREAM = 4096
GRID_FLOOR = 1e-12


# ============================================================================
# Matrix assembly
# ============================================================================

@njit(cache=True)
def _row_ranges(edges, g_min, g_max, jlo, jhi):
    """Target cell range of each row over the whole parameter window."""
    n = edges.shape[0] - 1
    for i in range(n):
        a = edges[i]
        b = edges[i + 1]
        if b <= 0.5:
            # larger exponents give smaller images on [0, 1/2]
            jlo[i] = _bin_index(edges, left_step(a, g_max))
            jhi[i] = _bin_index(edges, left_step(b, g_min))
        else:
            jlo[i] = _bin_index(edges, 2.0 * a - 1.0)
            jhi[i] = _bin_index(edges, 2.0 * b - 1.0)


@njit(cache=True)
def _ulam_rows_kernel(edges, nodes, weights, jlo, offsets, data):
    n = edges.shape[0] - 1
    for i in range(n):
        a = edges[i]
        b = edges[i + 1]
        width = b - a
        base = offsets[i] - jlo[i]
        if b > 0.5:
            ya = 2.0 * a - 1.0
            yb = 2.0 * b - 1.0
            j0 = _bin_index(edges, ya)
            j1 = _bin_index(edges, yb)
            prev = a
            for j in range(j0, j1 + 1):
                x_hi = b if j == j1 else 0.5 * (edges[j + 1] + 1.0)
                data[base + j] += (x_hi - prev) / width
                prev = x_hi
            continue
        for q in range(nodes.shape[0]):
            g = nodes[q]
            w = weights[q]
            ya = left_step(a, g)
            yb = left_step(b, g)
            j0 = _bin_index(edges, ya)
            j1 = _bin_index(edges, yb)
            prev = a
            for j in range(j0, j1 + 1):
                if j == j1:
                    x_hi = b
                else:
                    x_hi = left_inverse(edges[j + 1], g, INVERSE_TOL, INVERSE_MAX_ITER)
                data[base + j] += w * (x_hi - prev) / width
                prev = x_hi


def _assemble(edges: np.ndarray, nodes: np.ndarray, weights: np.ndarray) -> sparse.csr_matrix:
    n = len(edges) - 1
    jlo = np.empty(n, dtype=np.int64)
    jhi = np.empty(n, dtype=np.int64)
    _row_ranges(edges, float(nodes.min()), float(nodes.max()), jlo, jhi)
    widths = jhi - jlo + 1
    offsets = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(np.int64)
    data = np.zeros(int(widths.sum()))
    _ulam_rows_kernel(edges, nodes, weights, jlo, offsets, data)
    rows = np.repeat(np.arange(n), widths)
    cols = np.concatenate([np.arange(lo, hi + 1) for lo, hi in zip(jlo, jhi)])
    matrix = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    matrix.eliminate_zeros()
    return matrix


def build_ulam(
    law: ParamLaw,
    cells: int,
    quadrature: int = 16,
    cache: Optional[OperatorCache] = None,
) -> UlamModel:
    """Row-stochastic Ulam matrix of the averaged operator on a graded grid.

    Cells shrink geometrically down to GRID_FLOOR near the neutral fixed
    point, so slow returns from deep near 0 stay resolved.

    Raises:
        QuadratureError: a row sum misses 1 by more than 1e-8.
    """
    if cells < MIN_CELLS:
        raise ValueError(f"need at least {MIN_CELLS} cells, got {cells}")
    if law.kind == LawKind.POWERLAW:
        raise DomainError("power-law parameters have unbounded support; use the chain module")
    edges = graded_edges(cells, GRID_FLOOR)
    nodes, weights = parameter_quadrature(law, quadrature)

    key = OperatorCache.make_key("ulam", law.model_dump(mode="json"), "graded", cells, GRID_FLOOR, quadrature, __version__)
    matrix = cached_build(cache, key, lambda: _assemble(edges, nodes, weights))

    bad = check_row_stochastic(matrix, ROW_TOLERANCE)
    if len(bad):
        defect = float(np.abs(np.asarray(matrix.sum(axis=1)).ravel()[bad] - 1.0).max())
        raise QuadratureError(f"{len(bad)} rows lose mass (worst defect {defect:.2e}), first at cell {bad[0]}")
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    matrix = sparse.diags(1.0 / sums) @ matrix
    logger.info("built Ulam matrix: %d cells, %d nonzeros, law %s", cells, matrix.nnz, law.label)
    return UlamModel(
        edges=edges,
        matrix=matrix.tocsr(),
        meta={"cells": cells, "quadrature": quadrature, "law": law.label, "nnz": int(matrix.nnz)},
    )


def stationary_density(model: UlamModel, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Stationary probability vector (cell masses); stored on the model.

    Raises:
        NonConvergenceError: residual above tol after max_iter power steps.
    """
    v, residual, iterations = stationary_vector(model.matrix, tol=tol, max_iter=max_iter)
    model.stationary = v
    model.residual = residual
    model.meta["stationary_iterations"] = iterations
    return v


def _ensure_stationary(model: UlamModel) -> np.ndarray:
    if model.stationary is None:
        stationary_density(model)
    return model.stationary


def mass_on(model: UlamModel, lo: float, hi: float) -> float:
    """Stationary mass of [lo, hi], whose ends must be grid edges."""
    pi = _ensure_stationary(model)
    i = np.searchsorted(model.edges, lo)
    j = np.searchsorted(model.edges, hi)
    return float(pi[i:j].sum())


def density_slope(model: UlamModel, lo: float = 1e-3, hi: float = 1e-1) -> Optional[SlopeFit]:
    """Log-log slope of the stationary density against x on [lo, hi]."""
    _ensure_stationary(model)
    mids = 0.5 * (model.edges[:-1] + model.edges[1:])
    return loglog_fit(mids, model.density, lo=lo, hi=hi)


# ============================================================================
# Correlations
# ============================================================================

def correlation_curve_operator(
    model: UlamModel,
    phi: Observable,
    psi: Observable,
    n_max: int,
    measure: str = "lebesgue",
) -> CorrelationSeries:
    """C_n = int psi o F^n phi dP - int phi dm int psi dpi by pushing a signed measure.

    With measure="stationary" phi is integrated against pi instead of m.
    """
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1, got {n_max}")
    pi = _ensure_stationary(model)
    widths = model.widths
    psi_bar = cell_integrals(psi, model.edges) / widths
    if measure == "lebesgue":
        mu = cell_integrals(phi, model.edges)
    elif measure == "stationary":
        mu = pi * cell_integrals(phi, model.edges) / widths
    else:
        raise ValueError(f"measure must be 'lebesgue' or 'stationary', got {measure!r}")

    centering = float(mu.sum()) * float(pi @ psi_bar)
    initial_mass = float(np.abs(mu).sum())
    values = np.empty(n_max + 1)
    for n in range(n_max + 1):
        values[n] = float(mu @ psi_bar) - centering
        mu = push(mu, model.matrix)

    # below this the finite chain's own rounding dominates
    discretization = max(model.residual or 0.0, 1e-15) * initial_mass * float(np.abs(psi_bar).max())
    lags = np.arange(n_max + 1)
    lo, hi = slope_window(n_max)
    fit = loglog_fit(lags, values, lo=lo, hi=hi, floor=10.0 * discretization)
    return CorrelationSeries(n=lags, value=values, method="operator", slope_fit=fit, measure=measure)


def _mc_task(args) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    master_seed, law, phi, psi, lags, start, stop, total = args
    sums = np.zeros(len(lags))
    squares = np.zeros(len(lags))
    phi_sum = 0.0
    for index in range(start, stop):
        count = min(MC_SAMPLES_PER_STREAM, total - index * MC_SAMPLES_PER_STREAM)
        stream = SeededStream(master_seed, index, law)
        x0 = stream.spatial.random(count)
        points = lagged_points(stream, x0, lags)
        phi0 = phi(x0)
        products = phi0[:, None] * psi(points)
        sums += products.sum(axis=0)
        squares += (products ** 2).sum(axis=0)
        phi_sum += float(phi0.sum())
    return sums, squares, np.array([phi_sum])


def correlation_curve_mc(
    law: ParamLaw,
    phi: Observable,
    psi: Observable,
    n_max: int,
    n_samples: int,
    master_seed: int,
    psi_mean: Optional[float] = None,
    workers: int = 1,
    lags: Optional[np.ndarray] = None,
) -> CorrelationSeries:
    """Ensemble estimate of E[phi(x_0) psi(x_n)] - E[phi(x_0)] * psi_mean, x_0 ~ Lebesgue.

    psi_mean defaults to the long-run occupation mean of psi.
    """
    lags = integer_grid(n_max) if lags is None else np.asarray(lags, dtype=np.int64)
    if psi_mean is None:
        psi_mean = occupation_mean(law, psi, n_steps=10_000_000, master_seed=master_seed)
    n_streams = math.ceil(n_samples / MC_SAMPLES_PER_STREAM)
    tasks = [(master_seed, law, phi, psi, lags, start, stop, n_samples) for start, stop in stream_chunks(n_streams)]
    results = run_tasks(_mc_task, tasks, workers)
    sums = sum_arrays(r[0] for r in results)
    squares = sum_arrays(r[1] for r in results)
    phi_mean = float(sum_arrays(r[2] for r in results)[0]) / n_samples

    mean = sums / n_samples
    stderr = np.sqrt(np.maximum(squares / n_samples - mean ** 2, 0.0) / max(n_samples - 1, 1))
    values = mean - phi_mean * psi_mean
    lo, hi = slope_window(n_max)
    fit = loglog_fit(lags, values, lo=lo, hi=hi, floor=3.0 * float(stderr.max()))
    return CorrelationSeries(n=lags, value=values, method="monte_carlo", stderr=stderr, slope_fit=fit)


# ============================================================================
# Induced operator diagnostic
# ============================================================================

def _hat_values(x: np.ndarray, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices and weights of the two hats supporting each x in [1/2, 1]."""
    h = nodes[1] - nodes[0]
    t = np.clip((x - nodes[0]) / h, 0.0, len(nodes) - 1 - 1e-12)
    left = np.floor(t).astype(np.int64)
    frac = t - left
    return left, frac


def _diagnostic_task(args) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    master_seed, law, psi, nodes, k, cap, start, stop, total = args
    m = len(nodes)
    sums = np.zeros((k, m))
    squares = np.zeros((k, m))
    dropped = np.zeros(k)
    for index in range(start, stop):
        count = min(DIAGNOSTIC_SAMPLES_PER_STREAM, total - index * DIAGNOSTIC_SAMPLES_PER_STREAM)
        stream = SeededStream(master_seed, index, law)
        y = uniform_entries(stream, count)
        weight = psi(y)
        alive = np.ones(count, dtype=bool)
        x = y
        for step in range(k):
            # capped orbits restart from 1 to keep the stream aligned, then stay excluded
            x = induced_endpoints(stream, np.where(alive, x, 1.0), 1, cap)
            alive &= x >= 0.5
            dropped[step] += np.count_nonzero(~alive)
            left, frac = _hat_values(x[alive], nodes)
            w = weight[alive]
            np.add.at(sums[step], left, w * (1.0 - frac))
            np.add.at(sums[step], left + 1, w * frac)
            np.add.at(squares[step], left, (w * (1.0 - frac)) ** 2)
            np.add.at(squares[step], left + 1, (w * frac) ** 2)
    return sums, squares, dropped


def induced_operator_diagnostic(
    law: ParamLaw,
    cells: int,
    k: int,
    psi: Optional[Observable] = None,
    n_samples: int = 1_000_000,
    master_seed: int = 0,
    cap: int = 10_000_000,
    workers: int = 1,
) -> InducedDiagnostic:
    """Lipschitz seminorm of P_Y^j psi, j = 1..k, on a hat basis of `cells` intervals on Y.

    Densities are relative to normalized Lebesgue measure on Y. The
    seminorm sequence is fitted by c 2^{-j} + c'.
    """
    if not 1 <= k <= 10:
        raise ValueError(f"k must lie in [1, 10], got {k}")
    psi = psi or Observable.polynomial([0.0, 1.0])
    nodes = np.linspace(0.5, 1.0, cells + 1)
    spacing = nodes[1] - nodes[0]
    # integral of each hat against normalized Lebesgue on Y
    mass = np.full(cells + 1, spacing / 0.5)
    mass[[0, -1]] *= 0.5

    n_streams = math.ceil(n_samples / DIAGNOSTIC_SAMPLES_PER_STREAM)
    tasks = [(master_seed, law, psi, nodes, k, cap, s, e, n_samples) for s, e in stream_chunks(n_streams)]
    results = run_tasks(_diagnostic_task, tasks, workers)
    sums = sum_arrays(r[0] for r in results)
    squares = sum_arrays(r[1] for r in results)
    dropped = sum_arrays(r[2] for r in results)

    coeffs = sums / n_samples / mass
    noise = np.sqrt(np.maximum(squares / n_samples - (sums / n_samples) ** 2, 0.0) / n_samples) / mass
    seminorms = np.abs(np.diff(coeffs, axis=1)).max(axis=1) / spacing
    sup_norms = np.abs(coeffs).max(axis=1)
    mass_out = (coeffs * mass).sum(axis=1)
    mass_in = float(cell_integrals(psi, np.array([0.5, 1.0]))[0] / 0.5)
    noise_floor = float(2.0 * noise.max() / spacing)

    ks = np.arange(1, k + 1)
    design = np.column_stack([2.0 ** (-ks), np.ones(k)])
    (c_contract, c_bounded), *_ = np.linalg.lstsq(design, seminorms, rcond=None)
    noisy = bool(seminorms[-1] < 2.0 * noise_floor or dropped.sum() > 0.001 * n_samples)
    if noisy:
        warnings.warn(
            f"seminorm {seminorms[-1]:.3g} is within twice the noise floor {noise_floor:.3g}; "
            "use fewer cells or more samples",
            StatisticalNoiseWarning,
            stacklevel=2,
        )
    return InducedDiagnostic(
        ks=ks,
        seminorms=seminorms,
        sup_norms=sup_norms,
        mass_in=mass_in,
        mass_out=mass_out,
        noise_floor=noise_floor,
        c_contract=float(c_contract),
        c_bounded=float(c_bounded),
        noisy=noisy,
    )


# ============================================================================
# Persistence
# ============================================================================

def save_ulam(model: UlamModel, directory: Path, stem: str = "ulam") -> dict[str, str]:
    """CSV of (row, col, value) triplets plus a JSON header; returns checksums."""
    directory = Path(directory)
    coo = model.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    frame = pd.DataFrame({"row": coo.row[order], "col": coo.col[order], "value": coo.data[order]})
    checksums = {
        f"{stem}_matrix.csv": write_table(directory / f"{stem}_matrix.csv", frame, units={"value": "probability"}, provenance=model.meta),
    }
    header = {"edges": model.edges, "meta": model.meta, "residual": model.residual}
    if model.stationary is not None:
        header["stationary"] = model.stationary
    checksums[f"{stem}_header.json"] = write_json(directory / f"{stem}_header.json", header)
    return checksums


def load_ulam(directory: Path, stem: str = "ulam") -> UlamModel:
    directory = Path(directory)
    with open(directory / f"{stem}_header.json") as f:
        header = json.load(f)
    edges = np.asarray(header["edges"], dtype=np.float64)
    frame = pd.read_csv(directory / f"{stem}_matrix.csv")
    n = len(edges) - 1
    matrix = sparse.csr_matrix((frame["value"].to_numpy(), (frame["row"].to_numpy(), frame["col"].to_numpy())), shape=(n, n))
    stationary = np.asarray(header["stationary"]) if header.get("stationary") is not None else None
    return UlamModel(edges=edges, matrix=matrix, stationary=stationary, residual=header.get("residual"), meta=header["meta"])


def save_correlations(series: CorrelationSeries, path: Path, provenance: Optional[dict] = None) -> str:
    stderr = series.stderr if series.stderr is not None else np.zeros(len(series.n))
    frame = pd.DataFrame({"n": series.n, "C_n": series.value, "stderr": stderr})
    meta = {"method": series.method, "measure": series.measure, **(provenance or {})}
    if series.slope_fit is not None:
        meta["slope_fit"] = series.slope_fit.as_dict()
    return write_table(path, frame, units={"n": "steps", "C_n": "covariance", "stderr": "covariance"}, provenance=meta)


def stationary_table(model: UlamModel) -> pd.DataFrame:
    _ensure_stationary(model)
    return pd.DataFrame({"cell_lo": model.edges[:-1], "cell_hi": model.edges[1:], "density": model.density})


def fixed_point_check(model: UlamModel) -> float:
    """||pi M - pi||_1 for the stored stationary vector."""
    return fixed_point_residual(_ensure_stationary(model), model.matrix)
