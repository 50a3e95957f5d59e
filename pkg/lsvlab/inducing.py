from __future__ import annotations

"""Return-time tails of the induced system on Y = [1/2, 1].

Two estimators of P_Y(tau_Y > n) are provided: direct simulation of
excursions, and the backward-preimage identity through x_n, the nested
left-branch preimage of 1/2. With P_Y the normalized restriction of
Lebesgue measure to Y the identity reads P_Y(tau_Y > n) = E[x_n]; the
unnormalized restriction gives (1/2) E[x_n]. Reports carry both.
"""

import logging
import math
import warnings
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy import integrate

from .errors import DivergenceWarning, DomainError, ExcessCensoringWarning
from .maps import INVERSE_MAX_ITER, INVERSE_TOL, left_inverse
from .models import EscapeProfile, Interval, Observable, ParamLaw, TailReport
from .orbits import DEFAULT_CAP, EXHAUSTED, _hit_kernel, simulate_excursions
from .params import SeededStream, derive_generator, mean_power
from .utils.ensemble import run_tasks, stream_chunks, sum_arrays
from .utils.stats import (
    default_hill_k,
    hill_bootstrap,
    hill_estimates,
    hill_ks,
    integer_grid,
    loglog_fit,
    plateau_median,
    survival_counts,
    tail_constant,
)

logger = logging.getLogger(__name__)

NORMALIZED = "normalized"
LEBESGUE = "lebesgue"

XN_SAMPLES_PER_STREAM = 1024
BOOTSTRAP_PURPOSE = 2
CENSORING_LIMIT = 0.01


# ============================================================================
# Backward preimages
# ============================================================================

@njit(cache=True)
def _xn_paths_kernel(omegas, out):
    """out[s, n-1] = z_n with z_1 = 1/2 and z_{n+1} = f^{-1}_{omega_n}(z_n).

    z_n has the law of x_n when the parameters are i.i.d.
    """
    for s in range(omegas.shape[0]):
        z = 0.5
        out[s, 0] = z
        for n in range(1, omegas.shape[1]):
            z = left_inverse(z, omegas[s, n], INVERSE_TOL, INVERSE_MAX_ITER)
            out[s, n] = z


def backward_preimage_xn(stream: SeededStream, n: int) -> float:
    """x_n = f^{-1}_{w1} o ... o f^{-1}_{w_{n-1}}(1/2) for the next n parameters w0..w_{n-1}.

    w0 is consumed but does not enter: it drives the right-branch step out of Y.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    omegas = stream.take(n)
    x = 0.5
    for omega in omegas[:0:-1]:
        x = left_inverse(x, omega, INVERSE_TOL, INVERSE_MAX_ITER)
    return float(x)


def _xn_task(args) -> tuple[np.ndarray, np.ndarray]:
    master_seed, law, n_max, start, stop, total = args
    sums = np.zeros(n_max)
    squares = np.zeros(n_max)
    for index in range(start, stop):
        count = min(XN_SAMPLES_PER_STREAM, total - index * XN_SAMPLES_PER_STREAM)
        stream = SeededStream(master_seed, index, law)
        omegas = stream.take(count * n_max).reshape(count, n_max)
        paths = np.empty((count, n_max))
        _xn_paths_kernel(omegas, paths)
        sums += paths.sum(axis=0)
        squares += (paths ** 2).sum(axis=0)
    return sums, squares


def tail_via_xn(
    law: ParamLaw,
    n_max: int,
    n_samples: int,
    master_seed: int,
    workers: int = 1,
) -> TailReport:
    """Survival of tau_Y through the backward-preimage identity, n = 0..n_max.

    ``survival`` uses the normalized convention E[x_n]; the Lebesgue
    convention is (1/2) E[x_n], half of it at every n.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be at least 2, got {n_max}")
    n_streams = math.ceil(n_samples / XN_SAMPLES_PER_STREAM)
    tasks = [(master_seed, law, n_max, start, stop, n_samples) for start, stop in stream_chunks(n_streams)]
    results = run_tasks(_xn_task, tasks, workers)
    sums = sum_arrays(r[0] for r in results)
    squares = sum_arrays(r[1] for r in results)

    mean = sums / n_samples
    var = np.maximum(squares / n_samples - mean ** 2, 0.0)
    stderr = np.sqrt(var / max(n_samples - 1, 1))

    grid = np.arange(n_max + 1)
    survival = np.concatenate([[1.0], mean])
    stderr = np.concatenate([[0.0], stderr])
    fit = loglog_fit(grid[1:], mean, lo=max(10.0, n_max / 100.0), hi=n_max)
    report = TailReport(
        grid=grid,
        survivors=survival * n_samples,
        total=n_samples,
        survival=survival,
        stderr=stderr,
        statistic="tau",
        normalization=NORMALIZED,
        slope_fit=fit,
        comparison={"estimator": "xn", "lebesgue_factor": 0.5},
    )
    if fit is not None:
        report.hill_index = -fit.slope
    logger.info("x_n estimator: %d samples, slope %s", n_samples, f"{fit.slope:.3f}" if fit else "n/a")
    return report


# ============================================================================
# Direct simulation
# ============================================================================

def hill_plot(samples: np.ndarray, ks: Optional[Sequence[int]] = None) -> tuple[np.ndarray, np.ndarray, float]:
    """Hill estimates over a range of k and their plateau median."""
    samples = np.asarray(samples, dtype=np.float64)
    ks = hill_ks(len(samples)) if ks is None else np.asarray(ks, dtype=np.int64)
    values = hill_estimates(samples, ks)
    return ks, values, plateau_median(values, ks)


def tail_report_from_samples(
    samples: np.ndarray,
    censored: np.ndarray,
    statistic: str,
    master_seed: int,
    bootstrap: int = 500,
    k: Optional[int] = None,
    censoring_limit: float = CENSORING_LIMIT,
) -> TailReport:
    """Empirical survival plus Hill fit of a positive sample.

    Censored observations enter at their cap value. They can only sit among
    the largest order statistics, which flattens the Hill slope and biases
    the index upward.
    """
    samples = np.asarray(samples, dtype=np.float64)
    total = len(samples)
    n_censored = int(np.count_nonzero(censored))
    if total and n_censored / total > censoring_limit:
        warnings.warn(
            f"{n_censored} of {total} samples censored ({n_censored / total:.2%})",
            ExcessCensoringWarning,
            stacklevel=2,
        )

    grid = integer_grid(int(np.ceil(samples.max())) if total else 1)
    survivors = survival_counts(samples, grid)
    survival = survivors / total
    stderr = np.sqrt(survival * (1.0 - survival) / total)

    positive = samples[samples > 0]
    k = default_hill_k(len(positive)) if k is None else k
    index = float(hill_estimates(positive, [k])[0])
    rng = derive_generator(master_seed, 0, BOOTSTRAP_PURPOSE)
    ci_lo, ci_hi = hill_bootstrap(positive, k, resamples=bootstrap, rng=rng)
    ks, values, plateau = hill_plot(positive)

    floor = 10.0 / total
    fit = loglog_fit(grid, survival, lo=10.0, floor=floor)
    return TailReport(
        grid=grid,
        survivors=survivors,
        total=total,
        survival=survival,
        censored=n_censored,
        stderr=stderr,
        statistic=statistic,
        normalization=NORMALIZED,
        hill_index=index,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        hill_k=k,
        hill_ks=ks,
        hill_values=values,
        plateau_median=plateau,
        tail_constant=tail_constant(positive, k, index) if math.isfinite(index) else None,
        slope_fit=fit,
        sample_mean=float(samples.mean()),
        sample_std=float(samples.std(ddof=1)) if total > 1 else 0.0,
        samples=samples,
    )


def tail_via_simulation(
    law: ParamLaw,
    phi: Observable,
    n_excursions: int,
    master_seed: int,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
    bootstrap: int = 500,
    censoring_limit: float = CENSORING_LIMIT,
) -> TailReport:
    """Tail of tau_Y (phi = 1) or phi_Y from excursions started uniform on Y.

    For phi(0) < 0 the sample is -phi_Y, whose right tail is the heavy one.
    """
    if n_excursions < 1000:
        raise ValueError(f"n_excursions must be at least 1000, got {n_excursions}")
    sample = simulate_excursions(law, phi, n_excursions, master_seed, cap, workers)
    values = sample.birkhoff
    statistic = "tau" if phi.is_polynomial and phi.coefficients == (1.0,) else "phi_Y"
    if phi.value_at_zero < 0:
        values = -values
    report = tail_report_from_samples(
        values, sample.censored, statistic, master_seed, bootstrap=bootstrap, censoring_limit=censoring_limit,
    )
    report.comparison["tau_mean"] = float(sample.tau.mean())
    logger.info(
        "simulated %d excursions: Hill index %.3f [%.3f, %.3f], %d censored",
        n_excursions, report.hill_index, report.ci_lo, report.ci_hi, report.censored,
    )
    return report


def compare_estimators(simulated: TailReport, via_xn: TailReport, lo: int = 10, hi: int = 1000) -> dict:
    """Pointwise agreement of the two survival estimates on n in [lo, hi].

    Uses the normalized convention for both; z = difference over the
    combined standard error.
    """
    if simulated.samples is None:
        raise ValueError("simulated report carries no raw sample")
    n = np.arange(lo, min(hi, via_xn.grid[-1]) + 1)
    sim = survival_counts(simulated.samples, n) / simulated.total
    sim_se = np.sqrt(sim * (1.0 - sim) / simulated.total)
    xn = via_xn.survival[n]
    xn_se = via_xn.stderr[n]
    se = np.sqrt(sim_se ** 2 + xn_se ** 2)
    z = np.abs(sim - xn) / np.where(se > 0, se, np.inf)
    return {
        "normalization": NORMALIZED,
        "n": n,
        "simulated": sim,
        "xn": xn,
        "z": z,
        "max_z": float(z.max()) if len(z) else 0.0,
        "within_3se": bool(np.all(z <= 3.0)),
    }


# ============================================================================
# Escape proxy and annulus concentration
# ============================================================================

def escape_proxy_q(x: float, law: ParamLaw, phi: Observable) -> float:
    """q(x) = int_x^{1/2} phi(t) / (t E_nu[(2t)^gamma]) dt.

    Integrated in s = -log t, where the integrand varies slowly.
    """
    if not 0.0 < x < 0.5:
        raise DomainError(f"x must lie in (0, 1/2), got {x}")
    if x < 1e-300:
        warnings.warn(f"x={x} is at the underflow threshold", DivergenceWarning, stacklevel=2)

    def integrand(s: float) -> float:
        t = math.exp(-s)
        return float(phi(np.array([t]))[0]) / mean_power(law, 2.0 * t)

    value, error = integrate.quad(integrand, math.log(2.0), -math.log(x), epsabs=0.0, epsrel=1e-10, limit=500)
    if not math.isfinite(value):
        warnings.warn(f"q({x}) diverged", DivergenceWarning, stacklevel=2)
    return float(value)


def annulus_step_count(n: int, law: ParamLaw) -> float:
    """N_n = (e^{-sqrt(n-1)} - e^{-sqrt n}) / (x E_nu[(2x)^gamma]) at x = e^{-sqrt n}."""
    if n < 1:
        raise ValueError(f"annulus index must be at least 1, got {n}")
    x = math.exp(-math.sqrt(n))
    return (math.exp(-math.sqrt(n - 1)) - x) / (x * mean_power(law, 2.0 * x))


def escape_profile(x: float, law: ParamLaw, phi: Observable, n_indices: Sequence[int]) -> EscapeProfile:
    n_indices = np.asarray(n_indices, dtype=np.int64)
    return EscapeProfile(
        x=x,
        q_of_x=escape_proxy_q(x, law, phi),
        n_indices=n_indices,
        N_n=np.array([annulus_step_count(int(n), law) for n in n_indices]),
    )


def _annulus_task(args) -> np.ndarray:
    master_seed, law, x0, bound, cap, start, stop = args
    steps = np.empty(stop - start, dtype=np.int64)
    for i, index in enumerate(range(start, stop)):
        stream = SeededStream(master_seed, index, law, block_size=1024)
        state = np.array([x0, 0.0])
        while True:
            status, used = _hit_kernel(stream.block(), state, bound, 1.0, float(cap))
            stream.advance(used)
            if status != EXHAUSTED:
                break
        steps[i] = int(state[1])
    return steps


def annulus_steps(
    n: int,
    law: ParamLaw,
    n_samples: int,
    master_seed: int = 0,
    workers: int = 1,
) -> tuple[np.ndarray, float]:
    """Steps needed to climb from e^{-sqrt n} past e^{-sqrt(n-1)}, one stream per run.

    Runs are capped at 100 N_n steps.
    """
    x0 = math.exp(-math.sqrt(n))
    if x0 < 1e-12:
        raise DomainError(f"annulus {n} starts below 1e-12")
    N_n = annulus_step_count(n, law)
    bound = math.exp(-math.sqrt(n - 1))
    cap = int(100 * N_n) + 100
    tasks = [(master_seed, law, x0, bound, cap, start, stop) for start, stop in stream_chunks(n_samples, 1024)]
    steps = np.concatenate(run_tasks(_annulus_task, tasks, workers))
    return steps, N_n


def annulus_concentration(
    n: int,
    law: ParamLaw,
    n_samples: int,
    eta: float,
    master_seed: int = 0,
    workers: int = 1,
) -> float:
    """Fraction of runs whose annulus escape time lies in [(1-eta)N_n, (1+eta)N_n]."""
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    steps, N_n = annulus_steps(n, law, n_samples, master_seed, workers)
    inside = (steps >= (1.0 - eta) * N_n) & (steps <= (1.0 + eta) * N_n)
    return float(np.count_nonzero(inside)) / n_samples


def escape_time_median(x: float, law: ParamLaw, n_samples: int, master_seed: int = 0, cap: int = DEFAULT_CAP) -> float:
    """Median of tau_Y over entry points mapping to x (time to reach Y from x, plus one)."""
    steps = np.empty(n_samples)
    target = Interval(lo=0.5, hi=1.0)
    for index in range(n_samples):
        stream = SeededStream(master_seed, index, law, block_size=4096)
        state = np.array([x, 0.0])
        while True:
            status, used = _hit_kernel(stream.block(), state, target.lo, target.hi, float(cap))
            stream.advance(used)
            if status != EXHAUSTED:
                break
        steps[index] = state[1] + 1.0
    return float(np.median(steps))
