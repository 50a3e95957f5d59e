from __future__ import annotations

"""Annealed correlation decay from the Ulam operator, with Monte Carlo and induced-operator checks."""

import logging
from typing import Any

import numpy as np
import pandas as pd

from ..models import ExperimentKind
from ..ulam import (
    build_ulam,
    correlation_curve_mc,
    correlation_curve_operator,
    induced_operator_diagnostic,
    save_correlations,
    stationary_density,
)
from .base import BaseExperiment, register_experiment

logger = logging.getLogger(__name__)

MEASURES = ("lebesgue", "stationary")
DIAGNOSTIC_CELLS = 32
INDUCED_MASS_TOLERANCE = 1e-3


@register_experiment(ExperimentKind.CORRELATIONS)
class CorrelationsExperiment(BaseExperiment):
    """C_n for n = 0..n_max and its log-log slope."""

    DESCRIPTION = "Annealed correlation decay"

    def execute(self) -> dict[str, Any]:
        config = self.config
        sizes = config.sizes
        phi = config.observable("phi")
        psi = config.observable("psi")
        model = build_ulam(config.law, sizes.cells, sizes.quadrature, self.cache)
        stationary_density(model)

        alpha = config.law.window.alpha
        expected = 1.0 - 1.0 / alpha
        summary: dict[str, Any] = {"expected_slope": expected, "curves": {}}
        verdicts: dict[str, bool] = {}
        for measure in MEASURES:
            series = correlation_curve_operator(model, phi, psi, sizes.n_max, measure=measure)
            name = f"correlations_{measure}.csv"
            self.outputs[name] = save_correlations(series, self.output_dir / name, self.provenance())
            summary["curves"][measure] = series.slope_fit.as_dict() if series.slope_fit else None
            if series.slope_fit:
                logger.info("%s correlations: slope %.3f", measure, series.slope_fit.slope)
            if measure == "lebesgue":
                verdicts["correlation_slope"] = bool(
                    series.slope_fit and abs(series.slope_fit.slope - expected) <= config.thresholds.correlation_slope
                )

        if sizes.samples:
            series = correlation_curve_mc(
                config.law, phi, psi, sizes.n_max, sizes.samples, self.seed, workers=self.workers,
            )
            self.outputs["correlations_mc.csv"] = save_correlations(
                series, self.output_dir / "correlations_mc.csv", self.provenance(samples=sizes.samples),
            )
            summary["curves"]["monte_carlo"] = series.slope_fit.as_dict() if series.slope_fit else None

        if sizes.k:
            diagnostic = induced_operator_diagnostic(
                config.law, DIAGNOSTIC_CELLS, sizes.k, psi=psi,
                n_samples=sizes.samples or 1_000_000, master_seed=self.seed, workers=self.workers,
            )
            self.table(
                "induced_diagnostic.csv",
                pd.DataFrame({
                    "k": diagnostic.ks,
                    "seminorm": diagnostic.seminorms,
                    "sup_norm": diagnostic.sup_norms,
                    "mass_out": diagnostic.mass_out,
                }),
                units={"seminorm": "per unit length"},
                cells=DIAGNOSTIC_CELLS,
            )
            summary["induced_diagnostic"] = {
                "mass_in": diagnostic.mass_in,
                "noise_floor": diagnostic.noise_floor,
                "c_contract": diagnostic.c_contract,
                "c_bounded": diagnostic.c_bounded,
                "noisy": diagnostic.noisy,
            }
            verdicts["induced_mass"] = bool(np.abs(diagnostic.mass_out - diagnostic.mass_in).max() <= INDUCED_MASS_TOLERANCE)

        for name, ok in verdicts.items():
            logger.info("%s: %s", name, "pass" if ok else "FAIL")
        summary["verdicts"] = verdicts
        summary["passed"] = all(verdicts.values())
        return summary
