from __future__ import annotations

"""Distortion sweep over random cylinders."""

import logging
from typing import Any

import numpy as np
import pandas as pd

from ..errors import CylinderError, EmptyPreimageError
from ..maps import corollary_bound, distortion, distortion_bound, pullback_interval, random_cylinder
from ..models import ExperimentKind
from ..params import derive_generator
from .base import BaseExperiment, register_experiment

logger = logging.getLogger(__name__)

SLACK = 1e-9
DEFAULT_WINDOW = (0.5, 1.5)


@register_experiment(ExperimentKind.DISTORTION)
class DistortionExperiment(BaseExperiment):
    """Checks Dist(f^n, J) <= (1+beta) log(sup I'/inf I') on random cylinders J."""

    DESCRIPTION = "Distortion bound over random cylinders"

    def execute(self) -> dict[str, Any]:
        sizes = self.config.sizes
        window = self.config.law.window
        low, high = (window.alpha, window.beta) if window.bounded else DEFAULT_WINDOW
        rng = derive_generator(self.seed, 0)

        rows = []
        skipped = 0
        for trial in range(sizes.trials):
            n = int(rng.integers(1, sizes.max_depth + 1))
            params, target, branches = random_cylinder(rng, n, low, high)
            try:
                J = pullback_interval(params, target, branches)
                dist = distortion(params, J)
            except (CylinderError, EmptyPreimageError) as exc:
                logger.debug("trial %d skipped: %s", trial, exc)
                skipped += 1
                continue
            bound = distortion_bound(params, target)
            rows.append({
                "trial": trial,
                "n": n,
                "beta": max(p.omega for p in params),
                "J_lo": J.lo,
                "J_hi": J.hi,
                "target_lo": target.lo,
                "target_hi": target.hi,
                "distortion": dist,
                "bound": bound,
                "corollary_bound": corollary_bound(params, J),
                "violation": dist > bound + SLACK,
            })

        frame = pd.DataFrame(rows)
        self.table("distortion.csv", frame, units={"distortion": "log ratio", "bound": "log ratio"}, window=[low, high])
        violations = int(frame["violation"].sum()) if len(frame) else 0
        ratio = (frame["distortion"] / frame["bound"].where(frame["bound"] > 0)).to_numpy() if len(frame) else np.array([])
        if violations:
            logger.warning("%d of %d cylinders violate the distortion bound", violations, len(frame))
        return {
            "trials": sizes.trials,
            "checked": len(frame),
            "skipped": skipped,
            "violations": violations,
            "max_ratio": float(np.nanmax(ratio)) if len(ratio) and np.isfinite(ratio).any() else None,
            "corollary_violations": int((frame["distortion"] > frame["corollary_bound"] + SLACK).sum()) if len(frame) else 0,
            "passed": violations == 0,
        }
