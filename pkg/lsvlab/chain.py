from __future__ import annotations

"""The Markov chain on [0, 1] driven by power-law parameters.

For x in (0, 1/2) the next point y = f_gamma(x) has the closed-form law
P(y <= c) = (gamma_x(c)/alpha)^(-epsilon) on (x, f_alpha(x)], where
gamma_x(c) is the exponent sending x to c. Integrating this CDF over the
cells of a grid gives the transition matrix exactly in y, so the
singularity of the density at y = x never enters a quadrature.
"""

import logging
import math
from typing import Optional

import numpy as np
from numba import njit
from pydantic import ValidationError
from scipy import integrate, optimize

from . import __version__
from .errors import ConfigError, DomainError, GeometryError, MassDefectError, QuadratureError
from .inducing import tail_report_from_samples
from .maps import invert_left_branch, left_step
from .models import (
    ChainGeometry,
    CondRhoReport,
    DensityVector,
    Diagnostic,
    HitTarget,
    Interval,
    PowerLawKernel,
    TailReport,
    TVCurve,
)
from .orbits import CAPPED, DEFAULT_CAP, EXHAUSTED, _bin_index, _hit_kernel
from .params import SeededStream
from .utils.cache import OperatorCache, cached_build
from .utils.ensemble import run_tasks, stream_chunks
from .utils.grids import refined_edges
from .utils.markov import check_row_stochastic, stationary_vector, total_variation_distance
from .utils.stats import loglinear_fit, loglog_fit, slope_window

logger = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-8
MIN_STATIONARY_CELLS = 512
CELL_NODES = 64


# ============================================================================
# Kernel
# ============================================================================

def _check_x(x: float) -> None:
    if not 0.0 < x < 0.5:
        raise DomainError(f"x must lie in (0, 1/2), got {x}")


def gamma_of_target(x: float, y: float, alpha: Optional[float] = None) -> float:
    """The exponent gamma with f_gamma(x) = y: log(x/(y-x)) / log(1/(2x)).

    Decreasing in y. With alpha given, y must not exceed f_alpha(x).
    """
    _check_x(x)
    if not y > x:
        raise DomainError(f"target y={y} must exceed x={x}")
    if alpha is not None and y > left_step(x, alpha) * (1.0 + 1e-15):
        raise DomainError(f"target y={y} lies beyond f_alpha(x)={left_step(x, alpha)}")
    return math.log(x / (y - x)) / math.log(1.0 / (2.0 * x))


def _density_times_gap(kernel: PowerLawKernel, x: float, gap: float) -> float:
    """(y-x) p_x(y) written through the gap y - x."""
    eps, alpha = kernel.epsilon, kernel.alpha
    log_x = math.log(1.0 / (2.0 * x))
    return eps * alpha ** eps * log_x ** eps / math.log(x / gap) ** (1.0 + eps)


def transition_density(kernel: PowerLawKernel, x: float, y: float) -> float:
    """p_x(y) = eps alpha^eps log(1/(2x))^eps / (log(x/(y-x))^(1+eps) (y-x)), zero off (x, f_alpha(x)]."""
    _check_x(x)
    if y <= x or y > left_step(x, kernel.alpha):
        return 0.0
    return _density_times_gap(kernel, x, y - x) / (y - x)


def kernel_mass(kernel: PowerLawKernel, x: float) -> float:
    """Integral of p_x over its support, by quadrature in u = log(x/(y-x)).

    In u the singularity at y = x becomes the tail u -> inf of an
    integrand decaying like u^(-1-eps).
    """
    _check_x(x)
    u_min = kernel.alpha * math.log(1.0 / (2.0 * x))

    def integrand(u: float) -> float:
        return _density_times_gap(kernel, x, x * math.exp(-u))

    value, _ = integrate.quad(integrand, u_min, math.inf, epsabs=0.0, epsrel=1e-10, limit=500)
    return float(value)


@njit(cache=True)
def _cdf(x, c, alpha, eps, top):
    if c <= x:
        return 0.0
    if c >= top:
        return 1.0
    g = math.log(x / (c - x)) / math.log(1.0 / (2.0 * x))
    return (g / alpha) ** (-eps)


def transition_cdf(kernel: PowerLawKernel, x: float, c: float) -> float:
    """P(f_gamma(x) <= c) under gamma ~ nu_{alpha, eps}."""
    _check_x(x)
    return float(_cdf(x, c, kernel.alpha, kernel.epsilon, left_step(x, kernel.alpha)))


@njit(cache=True)
def _chain_matrix_kernel(edges, nodes, weights, alpha, eps, out):
    n = edges.shape[0] - 1
    for i in range(n):
        a = edges[i]
        b = edges[i + 1]
        width = b - a
        if b > 0.5:
            j0 = _bin_index(edges, 2.0 * a - 1.0)
            j1 = _bin_index(edges, 2.0 * b - 1.0)
            prev = a
            for j in range(j0, j1 + 1):
                x_hi = b if j == j1 else 0.5 * (edges[j + 1] + 1.0)
                out[i, j] += (x_hi - prev) / width
                prev = x_hi
            continue
        for q in range(nodes.shape[0]):
            x = a + 0.5 * width * (nodes[q] + 1.0)
            w = 0.5 * weights[q]
            top = left_step(x, alpha)
            j0 = _bin_index(edges, x)
            j1 = _bin_index(edges, top)
            prev = 0.0
            for j in range(j0, j1 + 1):
                cur = 1.0 if j == j1 else _cdf(x, edges[j + 1], alpha, eps, top)
                out[i, j] += w * (cur - prev)
                prev = cur


def chain_matrix(kernel: PowerLawKernel, edges: np.ndarray, cache: Optional[OperatorCache] = None) -> np.ndarray:
    """Dense row-stochastic matrix of the chain on the given cells.

    Raises:
        QuadratureError: a row loses more than 1e-8 of its mass.
    """
    edges = np.ascontiguousarray(edges, dtype=np.float64)
    if not np.any(np.isclose(edges, 0.5, rtol=0.0, atol=1e-15)):
        raise DomainError("chain grids need 1/2 as a cell edge")
    nodes, weights = np.polynomial.legendre.leggauss(CELL_NODES)

    def build() -> np.ndarray:
        out = np.zeros((len(edges) - 1, len(edges) - 1))
        _chain_matrix_kernel(edges, nodes, weights, kernel.alpha, kernel.epsilon, out)
        return out

    key = OperatorCache.make_key("chain", kernel.model_dump(), edges.tolist(), CELL_NODES, __version__)
    matrix = cached_build(cache, key, build)
    bad = check_row_stochastic(matrix, MASS_TOLERANCE)
    if len(bad):
        raise QuadratureError(f"{len(bad)} chain rows lose mass, first at cell {bad[0]}")
    return matrix


class ChainOperator:
    """Transition matrix of one kernel on one grid, built once and reused."""

    def __init__(self, kernel: PowerLawKernel, edges: Optional[np.ndarray] = None, cells: int = 1024,
                 cache: Optional[OperatorCache] = None):
        self.kernel = kernel
        self.edges = refined_edges(cells) if edges is None else np.asarray(edges, dtype=np.float64)
        self.matrix = chain_matrix(kernel, self.edges, cache)

    @property
    def cells(self) -> int:
        return len(self.edges) - 1

    def step(self, rho: DensityVector) -> DensityVector:
        return evolve_density(self, rho)


def _operator(kernel_or_op, rho: DensityVector) -> ChainOperator:
    if isinstance(kernel_or_op, ChainOperator):
        return kernel_or_op
    return ChainOperator(kernel_or_op, edges=rho.edges)


def _check_grid(op: ChainOperator, rho: DensityVector) -> None:
    if len(rho.edges) != len(op.edges) or not np.array_equal(rho.edges, op.edges):
        raise ConfigError([Diagnostic(field="grid", message="density and operator use different grids")])


def evolve_density(kernel, rho: DensityVector) -> DensityVector:
    """One chain step of a cell-averaged density.

    ``kernel`` is a PowerLawKernel or a prebuilt ChainOperator.

    Raises:
        MassDefectError: mass moves by more than 1e-8 or turns negative.
    """
    op = _operator(kernel, rho)
    _check_grid(op, rho)
    masses = rho.masses @ op.matrix
    if abs(masses.sum() - rho.mass) > MASS_TOLERANCE or masses.min() < -MASS_TOLERANCE:
        raise MassDefectError(f"mass {rho.mass:.12f} -> {masses.sum():.12f} (min cell {masses.min():.3e})")
    return DensityVector.from_masses(rho.edges, np.clip(masses, 0.0, None))


def chain_stationary(kernel, edges: Optional[np.ndarray] = None, tol: float = 1e-9,
                     max_iter: int = 100_000) -> DensityVector:
    """Fixed point of evolve_density to TV increment below tol.

    Raises:
        NonConvergenceError: with the last residual.
    """
    op = kernel if isinstance(kernel, ChainOperator) else ChainOperator(kernel, edges=edges)
    if op.cells < MIN_STATIONARY_CELLS:
        raise ValueError(f"stationary density needs at least {MIN_STATIONARY_CELLS} cells, got {op.cells}")
    # TV increment is half the L1 residual
    v, residual, iterations = stationary_vector(op.matrix, tol=2.0 * tol, max_iter=max_iter)
    logger.info("chain stationary: TV increment %.2e after %d power steps", residual / 2, iterations)
    return DensityVector.from_masses(op.edges, v)


def tv_distance(rho: DensityVector, pi: DensityVector) -> float:
    """(1/2) sum |rho_i - pi_i| width_i on matched grids."""
    if not np.array_equal(rho.edges, pi.edges):
        raise ConfigError([Diagnostic(field="grid", message="TV distance needs matching grids")])
    return total_variation_distance(rho.masses, pi.masses)


def tv_convergence_curve(kernel, initial: DensityVector, n_max: int,
                         stationary: Optional[DensityVector] = None) -> TVCurve:
    """TV(P^n initial, pi) for n = 0..n_max and the log-log slope over [n_max/10, n_max]."""
    op = _operator(kernel, initial)
    _check_grid(op, initial)
    pi = stationary if stationary is not None else chain_stationary(op)
    masses = initial.masses.copy()
    tv = np.empty(n_max + 1)
    for n in range(n_max + 1):
        tv[n] = total_variation_distance(masses, pi.masses)
        masses = masses @ op.matrix
    lags = np.arange(n_max + 1)
    lo, hi = slope_window(n_max)
    fit = loglog_fit(lags, tv, lo=lo, hi=hi, floor=1e-12)
    return TVCurve(n=lags, tv=tv, slope_fit=fit)


# ============================================================================
# Geometry
# ============================================================================

def make_geometry(alpha: float, b: Optional[float] = None) -> ChainGeometry:
    """Sets C = [f_a^{-1}(b), b], W = [b, (b+1)/2], H = [1/2, (b+1)/2].

    Without b, takes the midpoint of the valid range (b*, 1/2) where b* is
    the root of f_alpha(b) - (3+b)/4.

    Raises:
        GeometryError: f_alpha(b) <= (3+b)/4.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")

    def gap(t: float) -> float:
        return left_step(t, alpha) - (3.0 + t) / 4.0

    if b is None:
        lo, hi = 1e-12, 0.5 - 1e-12
        if not (gap(lo) < 0.0 < gap(hi)):
            raise GeometryError(f"no valid b for alpha={alpha}")
        b_star = optimize.brentq(gap, lo, hi, xtol=1e-15)
        b = 0.5 * (b_star + 0.5)
    if not 0.0 < b < 0.5:
        raise GeometryError(f"b must lie in (0, 1/2), got {b}")
    try:
        return ChainGeometry(
            alpha=alpha,
            b=b,
            C=Interval(lo=invert_left_branch(b, alpha), hi=b),
            W=Interval(lo=b, hi=(b + 1.0) / 2.0),
            H=Interval(lo=0.5, hi=(b + 1.0) / 2.0),
        )
    except ValidationError as exc:
        raise GeometryError(str(exc.errors()[0]["msg"])) from exc


# ============================================================================
# Hitting times
# ============================================================================

def _excluded_start(x: float) -> bool:
    """0 and the preimages 1 - 2^{-k} of 1/2 under the right branch are removed from the state space."""
    if x == 0.0:
        return True
    return any(x == 1.0 - 2.0 ** (-k) for k in range(1, 60))


def hitting_setup(geometry: ChainGeometry, which: HitTarget) -> tuple[float, Interval]:
    """Start point and target for each recorded hitting time.

    tau_C starts at b, the point of C farthest along the drift, where the
    hitting time from C is worst. tau_H also starts at b; tau_W starts at
    f_alpha^{-1}(b), the left end of C.
    """
    which = HitTarget(which)
    if which == HitTarget.TAU_C:
        return geometry.b, geometry.C
    if which == HitTarget.TAU_H:
        return geometry.b, geometry.H
    if which == HitTarget.TAU_W:
        return geometry.C.lo, geometry.W
    return 0.5 * (geometry.b + 0.5), geometry.H


def _hitting_task(args) -> tuple[np.ndarray, np.ndarray]:
    master_seed, law, x0, lo, hi, cap, start, stop = args
    steps = np.empty(stop - start, dtype=np.int64)
    censored = np.zeros(stop - start, dtype=bool)
    for i, index in enumerate(range(start, stop)):
        stream = SeededStream(master_seed, index, law, block_size=1024)
        state = np.array([x0, 0.0])
        while True:
            status, used = _hit_kernel(stream.block(), state, lo, hi, float(cap))
            stream.advance(used)
            if status != EXHAUSTED:
                break
        steps[i] = int(state[1])
        censored[i] = status == CAPPED
    return steps, censored


def hitting_statistics(
    kernel: PowerLawKernel,
    geometry: ChainGeometry,
    which: HitTarget,
    n_samples: int,
    master_seed: int = 0,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
    x0: Optional[float] = None,
    bootstrap: int = 500,
) -> TailReport:
    """Survival of a hitting time over independent chains.

    tau_C gets a Hill fit (polynomial tail); the others get a log-linear
    fit of the survival over the range where it exceeds 1e-3.
    """
    which = HitTarget(which)
    start, target = hitting_setup(geometry, which)
    x0 = start if x0 is None else x0
    if _excluded_start(x0):
        raise DomainError(f"start point {x0} lies on the removed set {{0}} U {{1 - 2^-k}}")
    law = kernel.as_law()
    tasks = [(master_seed, law, x0, target.lo, target.hi, cap, s, e) for s, e in stream_chunks(n_samples, 1024)]
    results = run_tasks(_hitting_task, tasks, workers)
    steps = np.concatenate([r[0] for r in results])
    censored = np.concatenate([r[1] for r in results])

    report = tail_report_from_samples(steps, censored, which.value, master_seed, bootstrap=bootstrap)
    mask = report.survival > 1e-3
    report.loglinear_fit = loglinear_fit(report.grid[mask], report.survival[mask])
    report.comparison.update({"x0": x0, "target": [target.lo, target.hi], **geometry.endpoints()})
    if which != HitTarget.TAU_C:
        report.hill_index = None
    return report


# ============================================================================
# Density class on (b, 1/2)
# ============================================================================

def _class_cell_integrals(geometry: ChainGeometry, epsilon: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Exact integrals of 1/((x-b) log(b/(x-b))^(1+eps)) over [lo, hi] inside (b, 2b)."""
    b = geometry.b

    def u_pow(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            u = np.log(b / np.maximum(x - b, 1e-300))
        return u ** (-epsilon)

    return (u_pow(hi) - u_pow(lo)) / epsilon


def _class_cells(edges: np.ndarray, geometry: ChainGeometry) -> np.ndarray:
    return np.nonzero((edges[:-1] >= geometry.b) & (edges[1:] <= 0.5))[0]


def class_density(geometry: ChainGeometry, edges: np.ndarray, epsilon: float) -> tuple[DensityVector, float]:
    """The class envelope itself, normalized to mass 1, and the K it attains."""
    cells = _class_cells(edges, geometry)
    masses = np.zeros(len(edges) - 1)
    masses[cells] = _class_cell_integrals(geometry, epsilon, edges[cells], edges[cells + 1])
    total = masses.sum()
    return DensityVector.from_masses(edges, masses / total), 1.0 / total


def condrho_class_check(
    kernel,
    geometry: ChainGeometry,
    rho: DensityVector,
    K: float,
    tolerance: float = 1e-9,
) -> CondRhoReport:
    """Check rho <= K/((x-b) log(b/(x-b))^(1+eps)) cellwise, evolve once, and measure the contraction.

    sigma is the smallest constant with the evolved density inside the
    class with sigma K on (b, 1/2); M bounds it on [1/2, (b+1)/2).
    """
    op = _operator(kernel, rho)
    eps = op.kernel.epsilon
    edges = rho.edges
    cells = _class_cells(edges, geometry)
    outside = np.setdiff1d(np.nonzero(rho.masses > tolerance)[0], cells)
    if len(outside):
        raise DomainError(f"density has mass outside (b, 1/2) in cells {outside[:5].tolist()}")

    envelope = _class_cell_integrals(geometry, eps, edges[cells], edges[cells + 1]) / rho.widths[cells]
    violations = cells[rho.values[cells] > K * envelope * (1.0 + tolerance)].tolist()

    evolved = evolve_density(op, rho)
    ratio = evolved.values[cells] / (K * envelope)
    sigma = float(ratio.max()) if len(ratio) else 0.0
    h_cells = np.nonzero((edges[:-1] >= 0.5) & (edges[1:] <= geometry.H.hi))[0]
    M = float(evolved.values[h_cells].max()) if len(h_cells) else 0.0
    if violations:
        logger.warning("density violates the class bound in %d cells", len(violations))
    return CondRhoReport(in_class=not violations, violations=violations, sigma=sigma, M=M, K=K, evolved=evolved)
