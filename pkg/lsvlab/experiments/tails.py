from __future__ import annotations

"""Return-time tails: direct simulation, the x_n estimator and their agreement."""

import logging
from typing import Any

import pandas as pd

from ..inducing import compare_estimators, tail_via_simulation, tail_via_xn
from ..models import ExperimentKind
from .base import BaseExperiment, register_experiment

logger = logging.getLogger(__name__)

DEFAULT_XN_N_MAX = 1000


@register_experiment(ExperimentKind.TAILS)
class TailsExperiment(BaseExperiment):
    """Survival of tau_Y (or phi_Y) with its Hill index."""

    DESCRIPTION = "Induced return-time tail and Hill index"

    def execute(self) -> dict[str, Any]:
        config = self.config
        sizes = config.sizes
        phi = config.observable()
        report = tail_via_simulation(
            config.law, phi, sizes.excursions, self.seed,
            cap=sizes.cap, workers=self.workers, bootstrap=sizes.bootstrap,
            censoring_limit=config.thresholds.censoring,
        )
        self.flag_censoring(report.censored_fraction)
        self.table(
            "tails.csv",
            pd.DataFrame({"t": report.grid, "survivors": report.survivors, "survival": report.survival, "stderr": report.stderr}),
            units={"t": "steps", "survival": "probability", "stderr": "probability"},
            normalization=report.normalization,
        )
        self.table(
            "hill.csv",
            pd.DataFrame({"k": report.hill_ks, "hill_index": report.hill_values}),
            units={"k": "order statistics"},
        )
        summary: dict[str, Any] = {"simulation": report.summary(), "hill_index": report.hill_index}
        verdicts: dict[str, bool] = {}
        alpha = config.law.window.alpha
        if phi.value_at_zero != 0 and alpha < 1.0:
            target = 1.0 / alpha
            summary["expected_hill_index"] = target
            verdicts["hill_index"] = bool(
                report.hill_index is not None
                and abs(report.hill_index - target) <= config.thresholds.hill_tolerance * target
            )

        if report.statistic == "tau":
            n_max = sizes.n_max or DEFAULT_XN_N_MAX
            via_xn = tail_via_xn(config.law, n_max, sizes.samples or sizes.excursions, self.seed, self.workers)
            self.table(
                "xn.csv",
                pd.DataFrame({
                    "n": via_xn.grid,
                    "survival": via_xn.survival,
                    "survival_lebesgue": via_xn.comparison["lebesgue_factor"] * via_xn.survival,
                    "stderr": via_xn.stderr,
                }),
                units={"n": "steps", "survival": "probability", "survival_lebesgue": "probability", "stderr": "probability"},
                normalization=via_xn.normalization,
            )
            agreement = compare_estimators(report, via_xn, lo=10, hi=n_max)
            self.table(
                "comparison.csv",
                pd.DataFrame({k: agreement[k] for k in ("n", "simulated", "xn", "z")}),
                units={"n": "steps", "z": "standard errors"},
            )
            summary["xn"] = via_xn.summary()
            summary["agreement"] = {k: agreement[k] for k in ("normalization", "max_z", "within_3se")}
            verdicts["estimators_agree"] = bool(agreement["within_3se"])
            logger.info("estimators agree within 3 s.e.: %s (max z %.2f)", agreement["within_3se"], agreement["max_z"])

        for name, ok in verdicts.items():
            logger.info("%s: %s", name, "pass" if ok else "FAIL")
        summary["verdicts"] = verdicts
        summary["passed"] = all(verdicts.values())
        return summary
