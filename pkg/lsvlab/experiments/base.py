from __future__ import annotations

"""Base experiment class for lsvlab."""

import logging
import time
import warnings
from abc import ABC, abstractmethod
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Type

import pandas as pd

from .. import __version__
from ..config import config_to_raw
from ..errors import ExcessCensoringWarning
from ..models import ExperimentConfig, ExperimentKind, RunManifest
from ..utils.cache import OperatorCache
from ..utils.io import config_hash, write_json, write_table

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_EXCESS_CENSORING = "excess_censoring"
EXIT_OK = 0
EXIT_EXCESS_CENSORING = 4


class BaseExperiment(ABC):
    """One experiment kind: runs its computation and writes its outputs."""

    # Override in subclasses
    KIND: ExperimentKind
    DESCRIPTION = ""

    def __init__(
        self,
        config: ExperimentConfig,
        output_dir: Path,
        cache: Optional[OperatorCache] = None,
    ):
        """Initialize experiment.

        Args:
            config: Validated experiment config.
            output_dir: Directory receiving the CSV and JSON outputs.
            cache: Operator cache, or None to rebuild matrices.
        """
        self.config = config
        self.output_dir = Path(output_dir)
        self.cache = cache
        self.outputs: dict[str, str] = {}
        self.status = STATUS_OK
        self.raw_config = config_to_raw(config)
        self.config_hash = run_hash(config)

    @property
    def seed(self) -> int:
        return self.config.master_seed

    @property
    def workers(self) -> int:
        return self.config.settings.workers

    def provenance(self, **extra: Any) -> dict[str, Any]:
        return {
            "kind": self.KIND.value,
            "law": self.config.law.label,
            "master_seed": self.seed,
            "version": __version__,
            "config_hash": self.config_hash,
            **extra,
        }

    def table(self, name: str, frame: pd.DataFrame, units: Optional[dict[str, str]] = None, **provenance: Any) -> None:
        """Write ``name`` (a CSV) with its sidecar and record the checksum."""
        self.outputs[name] = write_table(self.output_dir / name, frame, units, self.provenance(**provenance))

    def flag_censoring(self, fraction: float) -> None:
        if fraction > self.config.thresholds.censoring:
            self.status = STATUS_EXCESS_CENSORING

    @abstractmethod
    def execute(self) -> dict[str, Any]:
        """Run the computation, write tables, and return the summary."""
        pass

    def run(self) -> RunManifest:
        """Execute, then write summary.json and manifest.json."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        started = datetime.now()
        t0 = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            summary = self.execute()
        for w in caught:
            if issubclass(w.category, ExcessCensoringWarning):
                self.status = STATUS_EXCESS_CENSORING
            logger.warning("%s: %s", w.category.__name__, w.message)

        summary = {"kind": self.KIND.value, "status": self.status, **summary}
        self.outputs["summary.json"] = write_json(self.output_dir / "summary.json", summary)
        manifest = RunManifest(
            kind=self.KIND,
            config=self.raw_config,
            version=__version__,
            started_at=started,
            wall_clock_seconds=time.perf_counter() - t0,
            outputs=dict(sorted(self.outputs.items())),
            status=self.status,
            exit_code=EXIT_EXCESS_CENSORING if self.status == STATUS_EXCESS_CENSORING else EXIT_OK,
            summary=summary,
        )
        write_json(self.output_dir / "manifest.json", manifest.model_dump(mode="json"))
        logger.info("%s finished in %.1fs (%s)", self.KIND.value, manifest.wall_clock_seconds, self.status)
        return manifest


class ExperimentRegistry:
    """Registry of available experiments."""

    _experiments: dict[ExperimentKind, Type[BaseExperiment]] = {}

    @classmethod
    def register(cls, kind: ExperimentKind, experiment_class: Type[BaseExperiment]) -> None:
        """Register an experiment."""
        cls._experiments[kind] = experiment_class

    @classmethod
    def get(cls, kind: ExperimentKind) -> Optional[Type[BaseExperiment]]:
        """Get an experiment by kind."""
        return cls._experiments.get(ExperimentKind(kind))

    @classmethod
    def get_all(cls) -> dict[ExperimentKind, Type[BaseExperiment]]:
        """Get all registered experiments."""
        return cls._experiments.copy()

    @classmethod
    def list_kinds(cls) -> list[str]:
        """List all registered kinds."""
        return [k.value for k in cls._experiments]


def register_experiment(kind: ExperimentKind):
    """Decorator to register an experiment."""
    def decorator(cls: Type[BaseExperiment]) -> Type[BaseExperiment]:
        cls.KIND = kind
        ExperimentRegistry.register(kind, cls)
        return cls
    return decorator


def run_hash(config: ExperimentConfig) -> str:
    """Hash of the fields that determine the results (not output_dir or settings)."""
    raw = config_to_raw(config)
    raw.pop("settings", None)
    raw.pop("output_dir", None)
    return config_hash(raw)


def run_output_dir(config: ExperimentConfig, digest: str) -> Path:
    """<output_dir>/<kind>-<first 12 hex of the config hash>."""
    return Path(config.output_dir) / f"{config.kind.value}-{digest[:12]}"


def run_experiment(config: ExperimentConfig, cache: Optional[OperatorCache] = None) -> tuple[RunManifest, Path]:
    """Dispatch a validated config to its experiment."""
    experiment_class = ExperimentRegistry.get(config.kind)
    if experiment_class is None:
        raise KeyError(f"no experiment registered for {config.kind.value}")
    output_dir = run_output_dir(config, run_hash(config))
    logger.info("running %s -> %s", config.kind.value, output_dir)
    return experiment_class(config, output_dir, cache).run(), output_dir
