from __future__ import annotations

"""lsvlab - random compositions of LSV maps: tails, transfer operators and limit laws."""

__version__ = "0.1.0"

from .errors import LsvLabError
from .models import ExperimentConfig, Observable, ParamLaw

__all__ = ["__version__", "ExperimentConfig", "LsvLabError", "Observable", "ParamLaw"]
