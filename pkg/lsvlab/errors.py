from __future__ import annotations

"""Exceptions and warnings raised by lsvlab."""

from typing import Any, Optional


class LsvLabError(Exception):
    """Base exception for lsvlab errors."""
    pass


class DomainError(LsvLabError, ValueError):
    """Raised when an argument lies outside the domain of an operation."""
    pass


class CylinderError(LsvLabError):
    """Raised when points of an interval follow different branch words."""
    pass


class EmptyPreimageError(LsvLabError):
    """Raised when a branch choice has no preimage of the target."""
    pass


class QuadratureError(LsvLabError):
    """Raised when a discretized operator row loses mass."""
    pass


class GeometryError(LsvLabError):
    """Raised when the petite-set constant b violates f_a(b) > (3+b)/4."""
    pass


class MassDefectError(LsvLabError):
    """Raised when density evolution does not preserve mass."""
    pass


class MissingTailFitError(LsvLabError):
    """Raised when a normalization needs a tail index that was never fitted."""
    pass


class NonConvergenceError(LsvLabError):
    """Raised when an iteration stops before reaching its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class CapExceeded(LsvLabError):
    """Raised when an orbit exceeds its step cap.

    ``partial`` carries whatever was accumulated before the cap: an
    InducedRecord for a single excursion, an array of partial sums for a
    chained run, or the step count for a hitting time.
    """

    def __init__(self, message: str, partial: Any = None, steps: Optional[int] = None):
        super().__init__(message)
        self.partial = partial
        self.steps = steps


class ConfigError(LsvLabError):
    """Raised when an experiment configuration fails validation."""

    def __init__(self, diagnostics: list):
        lines = "; ".join(f"{d.field}: {d.message}" for d in diagnostics)
        super().__init__(f"Invalid configuration: {lines}")
        self.diagnostics = diagnostics


class ExcessCensoringWarning(UserWarning):
    """More than 1% of the excursions hit the step cap."""
    pass


class InsufficientBlocksWarning(UserWarning):
    """Too few independent blocks for a meaningful KS statistic."""
    pass


class DivergenceWarning(UserWarning):
    """A quadrature or iteration came close to underflow."""
    pass


class StatisticalNoiseWarning(UserWarning):
    """Monte Carlo noise dominates the quantity being reported."""
    pass
