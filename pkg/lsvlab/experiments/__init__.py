from __future__ import annotations

"""Experiment modules for lsvlab."""

from .base import BaseExperiment, ExperimentRegistry, register_experiment, run_experiment
from .annulus import AnnulusExperiment
from .chain import ChainExperiment
from .correlations import CorrelationsExperiment
from .distortion import DistortionExperiment
from .limits import LimitsExperiment
from .tails import TailsExperiment
from .ulam import UlamExperiment

__all__ = [
    "BaseExperiment",
    "ExperimentRegistry",
    "register_experiment",
    "run_experiment",
    "AnnulusExperiment",
    "ChainExperiment",
    "CorrelationsExperiment",
    "DistortionExperiment",
    "LimitsExperiment",
    "TailsExperiment",
    "UlamExperiment",
]
