from __future__ import annotations

"""Power-law chain: stationary density, TV decay, hitting times and the density class."""

import logging
from typing import Any

import numpy as np
import pandas as pd

from ..chain import (
    ChainOperator,
    chain_stationary,
    class_density,
    condrho_class_check,
    hitting_statistics,
    kernel_mass,
    make_geometry,
    tv_convergence_curve,
)
from ..errors import DomainError
from ..models import DensityVector, ExperimentKind, HitTarget, PowerLawKernel
from ..orbits import occupation_histogram
from ..utils.grids import decade_agreement
from .base import BaseExperiment, register_experiment

logger = logging.getLogger(__name__)

NORMALIZATION_POINTS = 100
NORMALIZATION_TOLERANCE = 1e-8
OCCUPATION_STREAMS = 16
TAU_W_HORIZON = 50


@register_experiment(ExperimentKind.CHAIN)
class ChainExperiment(BaseExperiment):
    """Everything measured on the chain driven by powerlaw(alpha, epsilon)."""

    DESCRIPTION = "Power-law Markov chain"

    def execute(self) -> dict[str, Any]:
        config = self.config
        sizes = config.sizes
        kernel = PowerLawKernel(alpha=config.law.alpha, epsilon=config.law.epsilon)

        xs = np.linspace(0.005, 0.495, NORMALIZATION_POINTS)
        defects = np.abs(np.array([kernel_mass(kernel, float(x)) for x in xs]) - 1.0)
        if defects.max() > NORMALIZATION_TOLERANCE:
            worst = float(xs[int(np.argmax(defects))])
            raise DomainError(f"kernel mass misses 1 by {defects.max():.2e} at x={worst:.4f}")

        op = ChainOperator(kernel, cells=sizes.cells, cache=self.cache)
        pi = chain_stationary(op)
        self.table(
            "stationary.csv",
            pd.DataFrame({"cell_lo": op.edges[:-1], "cell_hi": op.edges[1:], "density": pi.values}),
            units={"density": "per unit length"},
        )

        curve = tv_convergence_curve(op, DensityVector.uniform(op.edges), sizes.n_max, pi)
        self.table("tv.csv", pd.DataFrame({"n": curve.n, "tv": curve.tv}), units={"n": "steps", "tv": "probability"})

        thresholds = config.thresholds
        p = 1.0 / kernel.alpha
        expected_tv_slope = 1.0 - p
        verdicts: dict[str, bool] = {
            "tv_nonincreasing": bool(np.all(np.diff(curve.tv) <= 1e-12)),
            "tv_slope": bool(curve.slope_fit and curve.slope_fit.slope <= expected_tv_slope + thresholds.tv_slope),
        }
        geometry = make_geometry(kernel.alpha, config.chain.b)
        summary: dict[str, Any] = {
            "kernel_mass_max_defect": float(defects.max()),
            "geometry": geometry.endpoints(),
            "tv_slope": curve.slope_fit.as_dict() if curve.slope_fit else None,
            "expected_tv_slope": expected_tv_slope,
            "tv_nonincreasing": verdicts["tv_nonincreasing"],
            "hitting": {},
        }

        for target in config.chain.targets:
            report = hitting_statistics(
                kernel, geometry, target, sizes.samples, self.seed,
                cap=sizes.cap, workers=self.workers, bootstrap=sizes.bootstrap,
            )
            self.flag_censoring(report.censored_fraction)
            self.table(
                f"hitting_{target.value}.csv",
                pd.DataFrame({"t": report.grid, "survivors": report.survivors, "survival": report.survival}),
                units={"t": "steps", "survival": "probability"},
                **geometry.endpoints(),
            )
            entry = report.summary()
            if report.loglinear_fit is not None:
                entry["loglinear_correlation"] = abs(report.loglinear_fit.r_value)
            if target == HitTarget.TAU_C:
                verdicts["tau_C_hill"] = bool(report.hill_index and report.hill_index >= p * (1.0 - thresholds.hill_slack))
            elif target == HitTarget.TAU_H:
                fit = report.loglinear_fit
                verdicts["tau_H_loglinear"] = bool(fit and fit.slope < 0 and abs(fit.r_value) > thresholds.loglinear_r)
            elif target == HitTarget.TAU_W:
                entry["survival_at_horizon"] = report.survival_at(TAU_W_HORIZON)
                verdicts["tau_W_geometric"] = entry["survival_at_horizon"] < thresholds.tau_w_survival
            summary["hitting"][target.value] = entry

        rho, tight_K = class_density(geometry, op.edges, kernel.epsilon)
        check = condrho_class_check(op, geometry, rho, tight_K * config.chain.condrho_scale)
        summary["condrho"] = {"K": check.K, "in_class": check.in_class, "sigma": check.sigma, "M": check.M}
        verdicts["condrho_contracts"] = bool(check.in_class and check.sigma < 1.0)

        if sizes.steps:
            counts = occupation_histogram(
                config.law, op.edges, sizes.steps, self.seed, n_streams=OCCUPATION_STREAMS, workers=self.workers,
            )
            bins, expected, observed, rel = decade_agreement(op.edges, pi.masses, counts)
            self.table(
                "occupation.csv",
                pd.DataFrame({"bin_lo": bins[:-1], "bin_hi": bins[1:], "stationary": expected, "occupation": observed, "rel_error": rel}),
                units={"stationary": "probability", "occupation": "probability"},
                steps=sizes.steps,
            )
            summary["occupation_max_rel_error"] = float(rel.max())
            verdicts["occupation"] = bool(rel.max() <= thresholds.occupation)

        for name, ok in verdicts.items():
            logger.info("%s: %s", name, "pass" if ok else "FAIL")
        summary["verdicts"] = verdicts
        summary["passed"] = all(verdicts.values())
        return summary
