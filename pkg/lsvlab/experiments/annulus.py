from __future__ import annotations

"""Escape times through an annulus near the neutral point."""

from typing import Any

import numpy as np
import pandas as pd

from ..inducing import annulus_steps, escape_profile
from ..models import ExperimentKind
from .base import BaseExperiment, register_experiment


@register_experiment(ExperimentKind.ANNULUS)
class AnnulusExperiment(BaseExperiment):
    """Fraction of escapes from [e^-sqrt n, e^-sqrt(n-1)] taking (1 +- eta) N_n steps."""

    DESCRIPTION = "Annulus escape-time concentration"

    def execute(self) -> dict[str, Any]:
        config = self.config
        sizes = config.sizes
        n, eta = sizes.n, sizes.eta
        steps, N_n = annulus_steps(n, config.law, sizes.samples, self.seed, self.workers)
        inside = (steps >= (1.0 - eta) * N_n) & (steps <= (1.0 + eta) * N_n)
        fraction = float(np.count_nonzero(inside)) / len(steps)
        self.table(
            "annulus.csv",
            pd.DataFrame({"run": np.arange(len(steps)), "steps": steps, "inside": inside}),
            units={"steps": "steps"},
            n=n,
            N_n=N_n,
            eta=eta,
        )

        indices = np.arange(max(1, n - 10), n + 1)
        profile = escape_profile(float(np.exp(-np.sqrt(n))), config.law, config.observable(), indices)
        self.table("escape_profile.csv", pd.DataFrame({"n": profile.n_indices, "N_n": profile.N_n}), units={"N_n": "steps"})
        return {
            "n": n,
            "eta": eta,
            "N_n": N_n,
            "median_steps": float(np.median(steps)),
            "fraction_inside": fraction,
            "q_of_x": profile.q_of_x,
            "passed": fraction >= config.thresholds.annulus_fraction,
        }
