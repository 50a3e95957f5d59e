from __future__ import annotations

"""Limit laws of induced Birkhoff sums.

For alpha < 1/2 the normalized sums (S^n phi_Y - A_n)/B_n are Gaussian;
for alpha > 1/2 they approach a one-sided stable law of index 1/alpha.
Scaling comes from a Hill fit of phi_Y, centering from its sample mean.
Shape checks use KS distances after an affine fit, since the fitted
constants only move location and scale.
"""

import logging
import math
import warnings
from typing import Optional

import numpy as np
from scipy import stats

from .errors import CapExceeded, DomainError, InsufficientBlocksWarning, MissingTailFitError
from .inducing import tail_report_from_samples
from .models import LawKind, LimitExperiment, NormalizationPlan, Observable, ParamLaw, Regime, TailReport, Thresholds
from .orbits import DEFAULT_CAP, birkhoff_sums_induced, simulate_excursions, uniform_entries
from .params import SeededStream, derive_generator
from .utils.ensemble import run_tasks, stream_chunks
from .utils.stats import ks_normal, ks_shape, survival_counts

logger = logging.getLogger(__name__)

MIN_BLOCKS = 1000
BLOCKS_PER_TASK = 16
# Block streams sit far above the pilot's excursion streams
BLOCK_STREAM_OFFSET = 1 << 32
ORACLE_PURPOSE = 3
DEFAULT_PILOT = 200_000


def _check_law(law: ParamLaw) -> float:
    if law.kind == LawKind.POWERLAW:
        raise DomainError("limit theorems are not considered for unbounded parameter laws")
    alpha = law.window.alpha
    if alpha == 0.5:
        raise DomainError("The case alpha=1/2 is not addressed")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"the law needs mass below 1, got minimum {alpha}")
    return alpha


# ============================================================================
# Tail of phi_Y
# ============================================================================

def phiY_tail_index(
    law: ParamLaw,
    phi: Observable,
    n_excursions: int,
    master_seed: int = 0,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
    bootstrap: int = 500,
    decade_lo: float = 10.0,
) -> TailReport:
    """Hill index of phi_Y, plus the check P(phi_Y > t) ~ P(tau_Y > t/phi(0)).

    The ratio of the two survivals is evaluated at t = phi(0)(m + 1/2) for
    integers m over one decade starting at decade_lo; with phi constant it
    is exactly 1.
    """
    phi0 = phi.value_at_zero
    if not phi0 > 0:
        raise DomainError(f"phi(0) must be positive, got {phi0}")
    sample = simulate_excursions(law, phi, n_excursions, master_seed, cap, workers)
    report = tail_report_from_samples(sample.birkhoff, sample.censored, "phi_Y", master_seed, bootstrap=bootstrap)

    m = np.unique(np.round(np.geomspace(decade_lo, 10.0 * decade_lo, 20)))
    t = phi0 * (m + 0.5)
    surv_phi = survival_counts(sample.birkhoff, t) / len(sample.birkhoff)
    surv_tau = survival_counts(sample.tau, t / phi0) / len(sample.tau)
    usable = surv_tau > 0
    ratios = surv_phi[usable] / surv_tau[usable]
    report.comparison.update({
        "phi0": phi0,
        "tau_mean": float(sample.tau.mean()),
        "ratio_t": t[usable].tolist(),
        "ratio": ratios.tolist(),
        "ratio_spread": float(ratios.max() / ratios.min()) if len(ratios) and ratios.min() > 0 else math.nan,
    })
    return report


# ============================================================================
# Normalization
# ============================================================================

def regime_for(alpha: float) -> Regime:
    """Gaussian below alpha = 1/2, stable above."""
    if alpha == 0.5:
        raise DomainError("The case alpha=1/2 is not addressed")
    return Regime.GAUSSIAN if alpha < 0.5 else Regime.STABLE


def plan_normalization(tail: TailReport, n: int, alpha: Optional[float] = None) -> NormalizationPlan:
    """B_n solving n c_L = B_n^p for a fitted tail c_L t^-p, or sqrt(n) std in the Gaussian regime.

    The regime follows the smallest parameter alpha of the law when given;
    the fitted p then only sets the stable scaling and is kept as a
    diagnostic (``fitted_regime``). Without alpha the regime falls back to
    p > 2.

    Raises:
        MissingTailFitError: the report carries no finite Hill index.
    """
    p = tail.hill_index
    if p is None or not math.isfinite(p) or p <= 0:
        raise MissingTailFitError("tail report has no fitted index")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    fitted = Regime.GAUSSIAN if p > 2.0 else Regime.STABLE
    regime = fitted if alpha is None else regime_for(alpha)
    if regime != fitted:
        logger.warning("fitted index p=%.3f points to the %s regime, alpha=%s gives %s",
                       p, fitted.value, alpha, regime.value)
    mean = float(tail.sample_mean)
    if regime == Regime.GAUSSIAN:
        std = float(tail.sample_std or 0.0)
        if not std > 0:
            raise MissingTailFitError("Gaussian scaling needs a positive sample std")
        return NormalizationPlan(
            alpha_eff=1.0 / p, p=p, regime=regime, n=n, B_n=math.sqrt(n) * std, A_n=n * mean,
            c=std, sample_mean=mean, provenance="sample std of phi_Y", fitted_regime=fitted,
        )
    c_L = tail.tail_constant
    if c_L is None or not c_L > 0:
        raise MissingTailFitError("tail report has no fitted tail constant")
    return NormalizationPlan(
        alpha_eff=1.0 / p, p=p, regime=regime, n=n, B_n=(c_L * n) ** (1.0 / p), A_n=n * mean,
        c=c_L, sample_mean=mean, provenance=f"Hill fit at k={tail.hill_k}", fitted_regime=fitted,
    )


# ============================================================================
# Stable oracle
# ============================================================================

def stable_oracle_samples(p: float, n_terms: int, n_samples: int, seed: int = 0, chunk: int = 64) -> np.ndarray:
    """(sum of n_terms Pareto(p) draws - n_terms p/(p-1)) / n_terms^(1/p).

    Pareto(p) has survival t^-p on [1, inf). These sums sit in the domain
    of attraction of the one-sided stable law of index p.
    """
    if not 1.0 < p < 2.0:
        raise DomainError(f"oracle index must lie in (1, 2), got {p}")
    rng = derive_generator(seed, 0, ORACLE_PURPOSE)
    law = stats.pareto(b=p)
    mean = p / (p - 1.0)
    out = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        rows = min(chunk, n_samples - start)
        draws = law.rvs(size=(rows, n_terms), random_state=rng)
        out[start:start + rows] = draws.sum(axis=1)
    return (out - n_terms * mean) / n_terms ** (1.0 / p)


# ============================================================================
# Block sums
# ============================================================================

def _block_task(args) -> tuple[np.ndarray, np.ndarray]:
    master_seed, law, phi, n, cap, start, stop = args
    sums = np.empty(stop - start)
    censored = np.zeros(stop - start, dtype=bool)
    for i, index in enumerate(range(start, stop)):
        stream = SeededStream(master_seed, BLOCK_STREAM_OFFSET + index, law)
        x0 = float(uniform_entries(stream, 1)[0])
        try:
            sums[i] = birkhoff_sums_induced(n, stream, phi, x0, cap)[-1]
        except CapExceeded:
            sums[i] = math.nan
            censored[i] = True
    return sums, censored


def block_sums(
    law: ParamLaw,
    phi: Observable,
    n: int,
    n_blocks: int,
    master_seed: int,
    first_block: int = 0,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
) -> tuple[np.ndarray, int]:
    """S^n phi_Y over independent chained orbits, one stream per block.

    Blocks that hit the step cap are dropped; returns the completed sums
    and the number dropped.
    """
    tasks = [
        (master_seed, law, phi, n, cap, first_block + s, first_block + e)
        for s, e in stream_chunks(n_blocks, BLOCKS_PER_TASK)
    ]
    results = run_tasks(_block_task, tasks, workers)
    sums = np.concatenate([r[0] for r in results])
    censored = np.concatenate([r[1] for r in results])
    dropped = int(np.count_nonzero(censored))
    if dropped:
        logger.warning("%d of %d blocks hit the step cap and are dropped", dropped, n_blocks)
    return sums[~censored], dropped


def diffusive_spread_growth(raw_n: np.ndarray, raw_2n: np.ndarray) -> float:
    """(IQR(S^2n) / IQR(S^n))^2 / 2: the spread ratio under sqrt(n) scaling.

    Near 1 when the sums are diffusive, 2^(2 alpha - 1) for stable sums of
    index 1/alpha. Quartile based, so it stays defined when the variance is not.
    """
    spread_n = float(stats.iqr(raw_n))
    if not spread_n > 0:
        return math.nan
    return (float(stats.iqr(raw_2n)) / spread_n) ** 2 / 2.0


def run_limit_experiment(
    law: ParamLaw,
    phi: Observable,
    n: int,
    n_blocks: int,
    master_seed: int = 0,
    tail: Optional[TailReport] = None,
    pilot: int = DEFAULT_PILOT,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
    thresholds: Optional[Thresholds] = None,
) -> LimitExperiment:
    """Normalized block sums at n and 2n excursions with their KS checks.

    Blocks at n use streams 0..n_blocks-1 and blocks at 2n the next
    n_blocks, both offset away from the pilot streams. Without ``tail``
    a pilot of ``pilot`` fresh excursions fits the phi_Y tail.
    """
    alpha = _check_law(law)
    if phi.value_at_zero == 0:
        raise DomainError("phi(0) = 0 is not covered")
    thresholds = thresholds or Thresholds()
    sign_flipped = phi.value_at_zero < 0
    if sign_flipped:
        phi = phi.negated()
        logger.info("phi(0) < 0: working with -phi")
    if n_blocks < MIN_BLOCKS:
        warnings.warn(f"only {n_blocks} blocks; KS distances below ~0.07 are noise", InsufficientBlocksWarning,
                      stacklevel=2)

    if tail is None:
        tail = phiY_tail_index(law, phi, pilot, master_seed, cap, workers)
    plan = plan_normalization(tail, n, alpha)
    logger.info("normalization: regime %s, p=%.3f, B_n=%.4g, A_n=%.4g", plan.regime.value, plan.p, plan.B_n, plan.A_n)

    raw_n, dropped_n = block_sums(law, phi, n, n_blocks, master_seed, 0, cap, workers)
    raw_2n, dropped_2n = block_sums(law, phi, 2 * n, n_blocks, master_seed, n_blocks, cap, workers)
    if len(raw_n) < 2 or len(raw_2n) < 2:
        raise CapExceeded(f"fewer than two blocks finished under the cap of {cap} steps", steps=cap)
    sums = (raw_n - plan.A_n) / plan.B_n
    sums_2n = (raw_2n - 2 * n * plan.sample_mean) / plan.scale_at(2 * n)

    ks_gaussian = ks_normal(sums)
    ks_selfsim = ks_shape(sums, sums_2n)
    var_n = float(np.var(sums, ddof=1))
    variance_ratio = float(np.var(sums_2n, ddof=1) / var_n) if var_n > 0 else math.nan
    spread_growth = diffusive_spread_growth(raw_n, raw_2n)

    ks_stable = None
    verdicts: dict[str, bool] = {}
    if plan.regime == Regime.GAUSSIAN:
        verdicts["gaussian"] = ks_gaussian < thresholds.ks_gaussian
        verdicts["variance_stable"] = thresholds.variance_low <= variance_ratio <= thresholds.variance_high
    else:
        p_theory = 1.0 / alpha
        if 1.0 < p_theory < 2.0:
            oracle = stable_oracle_samples(p_theory, n, n_blocks, seed=master_seed)
            ks_stable = ks_shape(sums, oracle)
            verdicts["stable"] = ks_stable < thresholds.ks_stable
        verdicts["gaussian_rejected"] = ks_gaussian > thresholds.ks_gaussian_reject
        verdicts["self_similar"] = ks_selfsim < thresholds.ks_selfsim
        verdicts["variance_grows"] = spread_growth > thresholds.variance_growth

    return LimitExperiment(
        law=law,
        phi=phi,
        n=n,
        n_blocks=n_blocks,
        plan=plan,
        raw_n=raw_n,
        raw_2n=raw_2n,
        sums=sums,
        sums_2n=sums_2n,
        ks_gaussian=ks_gaussian,
        ks_selfsim=ks_selfsim,
        ks_stable=ks_stable,
        variance_ratio=variance_ratio,
        spread_growth=spread_growth,
        sign_flipped=sign_flipped,
        verdicts=verdicts,
        censored=dropped_n + dropped_2n,
    )

