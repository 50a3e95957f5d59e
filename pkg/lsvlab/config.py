from __future__ import annotations

"""Configuration loader for lsvlab experiments."""

import os
import re
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import ValidationError

from .errors import ConfigError
from .models import (
    Diagnostic,
    ExperimentConfig,
    ExperimentKind,
    LawKind,
    ParamLaw,
    Sizes,
)

OUTPUT_ENV = "LSVLAB_OUT"

DEFAULT_CONFIG_PATHS = [
    Path("config.yaml"),
    Path("config.yml"),
]

# Sizes each experiment cannot run without
REQUIRED_SIZES: dict[ExperimentKind, tuple[str, ...]] = {
    ExperimentKind.TAILS: ("excursions",),
    ExperimentKind.DISTORTION: ("trials",),
    ExperimentKind.ULAM: ("cells",),
    ExperimentKind.CORRELATIONS: ("cells", "n_max"),
    ExperimentKind.CHAIN: ("cells", "n_max", "samples"),
    ExperimentKind.LIMITS: ("n", "blocks"),
    ExperimentKind.ANNULUS: ("n", "samples", "eta"),
}

# Experiments that need a stationary measure, hence mass below 1
STATIONARY_KINDS = {ExperimentKind.ULAM, ExperimentKind.CORRELATIONS, ExperimentKind.LIMITS}

MIN_TAIL_EXCURSIONS = 1000
MIN_ULAM_CELLS = 64
MIN_CHAIN_CELLS = 512

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_DELTA = re.compile(rf"^delta\(\s*({_NUMBER})\s*\)$")
_UNIFORM = re.compile(rf"^uniform\(\s*({_NUMBER})\s*,\s*({_NUMBER})\s*\)$")
_POWERLAW = re.compile(rf"^powerlaw\(\s*({_NUMBER})\s*,\s*({_NUMBER})\s*\)$")
_MIXTURE = re.compile(r"^mixture\((.*)\)$")
_ATOM = re.compile(rf"^\s*({_NUMBER})\s*:\s*({_NUMBER})\s*$")


def find_config_file() -> Optional[Path]:
    """Find an experiment file in the working directory."""
    for path in DEFAULT_CONFIG_PATHS:
        if path.exists():
            return path
    return None


# ============================================================================
# Law grammar
# ============================================================================

def parse_law(value: Any) -> ParamLaw:
    """Parse a law from a mapping or from the compact string grammar.

    Accepted strings: ``delta(0.75)``, ``mixture(0.5:0.5, 1.5:0.5)``,
    ``uniform(0.5, 1.5)``, ``powerlaw(0.5, 1)``.

    Raises:
        ValueError: unknown form or invalid parameters.
    """
    if isinstance(value, ParamLaw):
        return value
    if isinstance(value, dict):
        try:
            return ParamLaw.model_validate(value)
        except ValidationError as exc:
            raise ValueError("; ".join(e["msg"] for e in exc.errors())) from exc
    if not isinstance(value, str):
        raise ValueError(f"law must be a mapping or a string, got {type(value).__name__}")

    text = value.strip().lower()
    try:
        if m := _DELTA.match(text):
            return ParamLaw.delta(float(m.group(1)))
        if m := _UNIFORM.match(text):
            return ParamLaw.uniform(float(m.group(1)), float(m.group(2)))
        if m := _POWERLAW.match(text):
            return ParamLaw.powerlaw(float(m.group(1)), float(m.group(2)))
        if m := _MIXTURE.match(text):
            atoms = []
            for part in m.group(1).split(","):
                atom = _ATOM.match(part)
                if not atom:
                    raise ValueError(f"bad mixture atom {part.strip()!r}, expected omega:weight")
                atoms.append((float(atom.group(1)), float(atom.group(2))))
            return ParamLaw.mixture(atoms)
    except ValidationError as exc:
        raise ValueError("; ".join(e["msg"] for e in exc.errors())) from exc
    raise ValueError(f"unrecognized law {value!r}")


# ============================================================================
# Loading and validation
# ============================================================================

def load_config(config_path: Optional[Path] = None) -> dict:
    """Read the raw mapping from a YAML file.

    Args:
        config_path: Path to the experiment file. If None, searches the
            working directory.

    Raises:
        ConfigError: no file, unreadable YAML, or a non-mapping document.
    """
    if config_path is None:
        config_path = find_config_file()
    if config_path is None or not Path(config_path).exists():
        raise ConfigError([Diagnostic(field="file", message=f"config file not found: {config_path}")])

    with open(config_path, "r") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError([Diagnostic(field="file", message=f"invalid YAML: {exc}")]) from exc

    if not isinstance(raw, dict):
        raise ConfigError([Diagnostic(field="file", message="config must be a mapping")])
    return raw


def apply_overrides(
    raw: dict,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    workers: Optional[int] = None,
) -> dict:
    """Layer LSVLAB_OUT and CLI flags over a raw mapping (flags win)."""
    raw = dict(raw)
    env_out = os.environ.get(OUTPUT_ENV)
    if env_out:
        raw["output_dir"] = env_out
    if out is not None:
        raw["output_dir"] = out
    if seed is not None:
        raw["master_seed"] = seed
    if workers is not None:
        raw["settings"] = {**(raw.get("settings") or {}), "workers": workers}
    return raw


def _pydantic_diagnostics(exc: ValidationError) -> list[Diagnostic]:
    return [
        Diagnostic(field=".".join(str(part) for part in err["loc"]) or "config", message=err["msg"])
        for err in exc.errors()
    ]


def _semantic_diagnostics(config: ExperimentConfig) -> list[Diagnostic]:
    diagnostics = []
    kind = config.kind
    law = config.law
    sizes = config.sizes

    for name in REQUIRED_SIZES[kind]:
        if getattr(sizes, name) is None:
            diagnostics.append(Diagnostic(field=f"sizes.{name}", message=f"required for {kind.value} experiments"))

    alpha = law.window.alpha
    if kind in STATIONARY_KINDS and alpha >= 1.0:
        diagnostics.append(Diagnostic(
            field="law",
            message=f"minimum parameter {alpha:g} >= 1; a stationary density needs 0 < alpha < 1",
        ))

    if kind in (ExperimentKind.ULAM, ExperimentKind.CORRELATIONS):
        if law.kind == LawKind.POWERLAW:
            diagnostics.append(Diagnostic(field="law", message="the annealed operator needs a bounded parameter law"))
        if sizes.cells is not None and sizes.cells < MIN_ULAM_CELLS:
            diagnostics.append(Diagnostic(field="sizes.cells", message=f"need at least {MIN_ULAM_CELLS} cells"))

    if kind == ExperimentKind.TAILS and sizes.excursions is not None and sizes.excursions < MIN_TAIL_EXCURSIONS:
        diagnostics.append(Diagnostic(field="sizes.excursions", message=f"need at least {MIN_TAIL_EXCURSIONS} excursions"))

    if kind == ExperimentKind.LIMITS:
        if alpha == 0.5:
            diagnostics.append(Diagnostic(field="law", message="The case alpha=1/2 is not addressed"))
        if law.kind == LawKind.POWERLAW:
            diagnostics.append(Diagnostic(field="law", message="limit laws are not considered for unbounded parameter laws"))
        if config.observable().value_at_zero == 0:
            diagnostics.append(Diagnostic(field="phi", message="phi(0) = 0 is not covered"))

    if kind == ExperimentKind.CHAIN:
        if law.kind != LawKind.POWERLAW:
            diagnostics.append(Diagnostic(field="law", message="the chain experiment needs a powerlaw(alpha, epsilon) law"))
        elif not law.alpha < 1.0:
            diagnostics.append(Diagnostic(field="law.alpha", message="the chain needs 0 < alpha < 1"))
        elif config.chain.b is not None:
            b = config.chain.b
            image = b * (1.0 + (2.0 * b) ** law.alpha)
            if not image > (3.0 + b) / 4.0:
                diagnostics.append(Diagnostic(field="chain.b", message=f"b={b} violates f_alpha(b) > (3+b)/4"))
        if sizes.cells is not None and sizes.cells < MIN_CHAIN_CELLS:
            diagnostics.append(Diagnostic(field="sizes.cells", message=f"need at least {MIN_CHAIN_CELLS} cells"))
        if sizes.cells is not None and sizes.cells % 2:
            diagnostics.append(Diagnostic(field="sizes.cells", message="cell count must be even"))

    return diagnostics


def _prepare(raw: dict) -> tuple[dict, list[Diagnostic]]:
    raw = dict(raw)
    diagnostics = []
    if "law" in raw:
        try:
            raw["law"] = parse_law(raw["law"])
        except ValueError as exc:
            diagnostics.append(Diagnostic(field="law", message=str(exc)))
            raw.pop("law")
    return raw, diagnostics


def validate(raw: Any) -> list[Diagnostic]:
    """Every violation in a raw config, structural and semantic. Never raises."""
    if not isinstance(raw, dict):
        return [Diagnostic(field="config", message="config must be a mapping")]
    prepared, diagnostics = _prepare(raw)
    if diagnostics:
        # the law is already reported; check the remaining fields against a placeholder
        prepared["law"] = ParamLaw.delta(0.5)
    try:
        config = ExperimentConfig.model_validate(prepared)
    except ValidationError as exc:
        return diagnostics + _pydantic_diagnostics(exc)
    if diagnostics:
        return diagnostics
    return _semantic_diagnostics(config)


def parse_config(raw: dict) -> ExperimentConfig:
    """Raw mapping to a validated ExperimentConfig.

    Raises:
        ConfigError: with every diagnostic validate() finds.
    """
    diagnostics = validate(raw)
    if diagnostics:
        raise ConfigError(diagnostics)
    prepared, _ = _prepare(raw)
    return ExperimentConfig.model_validate(prepared)


def load_experiment(
    config_path: Path,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    workers: Optional[int] = None,
) -> ExperimentConfig:
    """load_config, overrides, then parse_config."""
    return parse_config(apply_overrides(load_config(config_path), seed=seed, out=out, workers=workers))


# ============================================================================
# Writing
# ============================================================================

def config_to_raw(config: ExperimentConfig) -> dict:
    """Plain mapping that parse_config reads back to the same config."""
    data = config.model_dump(mode="json", exclude_none=True)
    data["law"] = config.law.label
    return data


def create_default_config() -> ExperimentConfig:
    """Return-time tail of delta(0.75), the template written by ``init``."""
    return ExperimentConfig(
        kind=ExperimentKind.TAILS,
        law=ParamLaw.delta(0.75),
        sizes=Sizes(excursions=1_000_000, n_max=1000),
    )


def save_config(config: ExperimentConfig, config_path: Path) -> None:
    """Save configuration to YAML file."""
    config_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config_path, "w") as f:
        yaml.dump(config_to_raw(config), f, default_flow_style=False, sort_keys=False)
