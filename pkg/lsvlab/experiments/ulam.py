from __future__ import annotations

"""Ulam model of the averaged operator and its stationary density."""

import logging
from typing import Any

import pandas as pd

from ..models import ExperimentKind
from ..orbits import Y, occupation_histogram
from ..ulam import build_ulam, density_slope, fixed_point_check, mass_on, save_ulam, stationary_density, stationary_table
from ..utils.grids import decade_agreement
from .base import BaseExperiment, register_experiment

logger = logging.getLogger(__name__)

OCCUPATION_STREAMS = 16
FIXED_POINT_TOLERANCE = 1e-8


@register_experiment(ExperimentKind.ULAM)
class UlamExperiment(BaseExperiment):
    """Builds the matrix, solves for the stationary density and cross-checks it by simulation."""

    DESCRIPTION = "Ulam matrix and stationary density"

    def execute(self) -> dict[str, Any]:
        config = self.config
        sizes = config.sizes
        model = build_ulam(config.law, sizes.cells, sizes.quadrature, self.cache)
        stationary_density(model)

        self.outputs.update(save_ulam(model, self.output_dir))
        self.table("stationary.csv", stationary_table(model), units={"density": "per unit length"})

        slope = density_slope(model)
        pi_Y = mass_on(model, Y.lo, Y.hi)
        summary: dict[str, Any] = {
            "cells": model.cells,
            "nnz": model.meta["nnz"],
            "residual": model.residual,
            "fixed_point_residual": fixed_point_check(model),
            "stationary_mass_Y": pi_Y,
            "kac_mean_return": 1.0 / pi_Y,
            "density_slope": slope.as_dict() if slope else None,
            "expected_density_slope": -config.law.window.alpha,
        }
        thresholds = config.thresholds
        verdicts: dict[str, bool] = {
            "fixed_point": bool(summary["fixed_point_residual"] <= FIXED_POINT_TOLERANCE),
            "density_slope": bool(slope and abs(slope.slope + config.law.window.alpha) <= thresholds.density_slope),
        }

        if sizes.steps:
            counts = occupation_histogram(
                config.law, model.edges, sizes.steps, self.seed,
                n_streams=OCCUPATION_STREAMS, workers=self.workers,
            )
            bins, expected, observed, rel = decade_agreement(model.edges, model.stationary, counts)
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
