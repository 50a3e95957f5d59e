from __future__ import annotations

"""Data models for lsvlab."""

import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


# ============================================================================
# Map family
# ============================================================================

class MapParameter(BaseModel):
    """A single exponent of the LSV family."""
    model_config = ConfigDict(frozen=True)

    omega: float = Field(..., gt=0, description="Exponent of the left branch x(1+(2x)^omega)")


class Interval(BaseModel):
    """A closed subinterval [lo, hi] of [0, 1]."""
    model_config = ConfigDict(frozen=True)

    lo: float = Field(..., ge=0, le=1)
    hi: float = Field(..., ge=0, le=1)

    @model_validator(mode="after")
    def _check_order(self) -> "Interval":
        if not self.lo < self.hi:
            raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")
        return self

    @computed_field
    @property
    def width(self) -> float:
        """Lebesgue length."""
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi


class ParamWindow(BaseModel):
    """Infimum and supremum of a parameter law's support."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., gt=0)
    beta: float = Field(default=math.inf, gt=0)

    @model_validator(mode="after")
    def _check_order(self) -> "ParamWindow":
        if self.alpha > self.beta:
            raise ValueError(f"window needs alpha <= beta, got alpha={self.alpha}, beta={self.beta}")
        return self

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.beta)


# ============================================================================
# Parameter laws
# ============================================================================

class LawKind(str, Enum):
    """Supported parameter distributions."""
    ATOMIC = "atomic"
    UNIFORM = "uniform"
    POWERLAW = "powerlaw"


class ParamLaw(BaseModel):
    """A sampling distribution nu over the parameter axis."""
    model_config = ConfigDict(frozen=True)

    kind: LawKind
    atoms: tuple[tuple[float, float], ...] = Field(default=(), description="(omega, weight) pairs")
    alpha: Optional[float] = Field(default=None, gt=0)
    beta: Optional[float] = Field(default=None, gt=0)
    epsilon: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_kind(self) -> "ParamLaw":
        if self.kind == LawKind.ATOMIC:
            if not self.atoms:
                raise ValueError("atomic law needs at least one atom")
            for omega, weight in self.atoms:
                if omega <= 0:
                    raise ValueError(f"atom omega must be positive, got {omega}")
                if weight <= 0:
                    raise ValueError(f"atom weight must be positive, got {weight}")
            total = sum(w for _, w in self.atoms)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"atom weights must sum to 1, got {total!r}")
        elif self.kind == LawKind.UNIFORM:
            if self.alpha is None or self.beta is None:
                raise ValueError("uniform law needs alpha and beta")
            if not self.alpha < self.beta:
                raise ValueError(f"uniform law needs alpha < beta, got [{self.alpha}, {self.beta}]")
        elif self.kind == LawKind.POWERLAW:
            if self.alpha is None or self.epsilon is None:
                raise ValueError("power-law needs alpha and epsilon")
        return self

    @classmethod
    def delta(cls, omega: float) -> "ParamLaw":
        return cls(kind=LawKind.ATOMIC, atoms=((omega, 1.0),))

    @classmethod
    def mixture(cls, atoms: list[tuple[float, float]]) -> "ParamLaw":
        return cls(kind=LawKind.ATOMIC, atoms=tuple((float(w), float(p)) for w, p in atoms))

    @classmethod
    def uniform(cls, alpha: float, beta: float) -> "ParamLaw":
        return cls(kind=LawKind.UNIFORM, alpha=alpha, beta=beta)

    @classmethod
    def powerlaw(cls, alpha: float, epsilon: float) -> "ParamLaw":
        return cls(kind=LawKind.POWERLAW, alpha=alpha, epsilon=epsilon)

    @property
    def window(self) -> ParamWindow:
        """Support window; alpha is the essential infimum."""
        if self.kind == LawKind.ATOMIC:
            omegas = [w for w, _ in self.atoms]
            return ParamWindow(alpha=min(omegas), beta=max(omegas))
        if self.kind == LawKind.UNIFORM:
            return ParamWindow(alpha=self.alpha, beta=self.beta)
        return ParamWindow(alpha=self.alpha, beta=math.inf)

    @property
    def label(self) -> str:
        """Compact form, the same grammar the config parser accepts."""
        if self.kind == LawKind.ATOMIC:
            if len(self.atoms) == 1:
                return f"delta({self.atoms[0][0]:g})"
            inner = ", ".join(f"{w:g}:{p:g}" for w, p in self.atoms)
            return f"mixture({inner})"
        if self.kind == LawKind.UNIFORM:
            return f"uniform({self.alpha:g}, {self.beta:g})"
        return f"powerlaw({self.alpha:g}, {self.epsilon:g})"


# ============================================================================
# Observables and induced records
# ============================================================================

@dataclass(frozen=True)
class _Negated:
    """-func, as a module-level callable so worker pools can pickle it."""
    func: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return -np.asarray(self.func(x), dtype=np.float64)


@dataclass(frozen=True)
class Observable:
    """A Lipschitz observable phi on [0, 1].

    Polynomial observables (ascending coefficients) run inside the compiled
    orbit kernels; arbitrary callables fall back to chunked evaluation.
    """
    coefficients: Optional[tuple[float, ...]] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lip: float = 0.0
    name: str = ""

    def __post_init__(self):
        if (self.coefficients is None) == (self.func is None):
            raise ValueError("observable needs exactly one of coefficients or func")

    @classmethod
    def constant(cls, c: float) -> "Observable":
        return cls(coefficients=(float(c),), lip=0.0, name=f"{c:g}")

    @classmethod
    def polynomial(cls, coefficients: list[float]) -> "Observable":
        coeffs = tuple(float(c) for c in coefficients)
        # sup of |phi'| on [0,1] is at most sum k|c_k|
        lip = sum(k * abs(c) for k, c in enumerate(coeffs))
        terms = [f"{c:g}" if k == 0 else f"{c:g}x^{k}" for k, c in enumerate(coeffs) if c != 0]
        return cls(coefficients=coeffs, lip=lip, name=" + ".join(terms) or "0")

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], lip: float, name: str = "phi") -> "Observable":
        return cls(func=func, lip=lip, name=name)

    @property
    def is_polynomial(self) -> bool:
        return self.coefficients is not None

    @property
    def value_at_zero(self) -> float:
        return float(self(np.zeros(1))[0])

    def coefficient_array(self) -> np.ndarray:
        if self.coefficients is None:
            raise ValueError(f"observable {self.name!r} is not polynomial")
        return np.asarray(self.coefficients, dtype=np.float64)

    def negated(self) -> "Observable":
        if self.coefficients is not None:
            return Observable(coefficients=tuple(-c for c in self.coefficients), lip=self.lip, name=f"-({self.name})")
        return Observable(func=_Negated(self.func), lip=self.lip, name=f"-({self.name})")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.coefficients is not None:
            return np.polynomial.polynomial.polyval(x, self.coefficients) * np.ones_like(x)
        return np.asarray(self.func(x), dtype=np.float64) * np.ones_like(x)


class InducedRecord(BaseModel):
    """One excursion of the induced system on Y = [1/2, 1]."""
    tau: int = Field(..., ge=1, description="First-return time to Y")
    birkhoff: float = Field(..., description="phi_Y: sum of phi over the excursion, entry point included")
    x_entry: float = Field(..., ge=0.5, le=1.0)
    x_return: float = Field(..., ge=0.0, le=1.0)
    censored: bool = Field(default=False, description="Stopped at the step cap before returning")

    @model_validator(mode="after")
    def _check_return(self) -> "InducedRecord":
        if not self.censored and self.x_return < 0.5:
            raise ValueError(f"completed excursion must return to Y, got {self.x_return}")
        return self


# ============================================================================
# Fits and tail reports
# ============================================================================

@dataclass
class SlopeFit:
    """Least-squares line through (log x, log y) or (x, log y)."""
    slope: float
    intercept: float
    lo: float
    hi: float
    r_value: float
    n_points: int

    def as_dict(self) -> dict[str, float]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "lo": self.lo,
            "hi": self.hi,
            "r_value": self.r_value,
            "n_points": self.n_points,
        }


@dataclass
class TailReport:
    """Empirical survival function of a positive statistic with its fitted tail."""
    grid: np.ndarray
    survivors: np.ndarray
    total: int
    survival: np.ndarray
    censored: int = 0
    stderr: Optional[np.ndarray] = None
    statistic: str = "tau"
    normalization: str = "normalized"
    hill_index: Optional[float] = None
    ci_lo: Optional[float] = None
    ci_hi: Optional[float] = None
    hill_k: Optional[int] = None
    hill_ks: Optional[np.ndarray] = None
    hill_values: Optional[np.ndarray] = None
    plateau_median: Optional[float] = None
    tail_constant: Optional[float] = None
    slope_fit: Optional[SlopeFit] = None
    loglinear_fit: Optional[SlopeFit] = None
    sample_mean: Optional[float] = None
    sample_std: Optional[float] = None
    comparison: dict[str, Any] = field(default_factory=dict)
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.total if self.total else 0.0

    def survival_at(self, t: float) -> float:
        """Survival at the largest grid point not above t; an upper bound for P(T > t)."""
        i = int(np.searchsorted(self.grid, t, side="right")) - 1
        return float(self.survival[i]) if i >= 0 else 1.0

    def summary(self) -> dict[str, Any]:
        """JSON-ready summary."""
        return {
            "statistic": self.statistic,
            "normalization": self.normalization,
            "total": self.total,
            "censored": self.censored,
            "hill_index": self.hill_index,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "hill_k": self.hill_k,
            "plateau_median": self.plateau_median,
            "tail_constant": self.tail_constant,
            "slope_fit": self.slope_fit.as_dict() if self.slope_fit else None,
            "loglinear_fit": self.loglinear_fit.as_dict() if self.loglinear_fit else None,
            "sample_mean": self.sample_mean,
            "sample_std": self.sample_std,
            "comparison": self.comparison,
        }


@dataclass
class EscapeProfile:
    """The q(x) escape proxy at a base point, with the annulus step counts N_n."""
    x: float
    q_of_x: float
    n_indices: np.ndarray
    N_n: np.ndarray


# ============================================================================
# Annealed operator
# ============================================================================

@dataclass
class UlamModel:
    """Ulam discretization of the annealed transfer operator."""
    edges: np.ndarray
    matrix: Any  # scipy.sparse.csr_matrix, row-stochastic
    stationary: Optional[np.ndarray] = None
    residual: Optional[float] = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def cells(self) -> int:
        return len(self.edges) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        """Stationary density values (mass / width)."""
        if self.stationary is None:
            raise ValueError("stationary vector not computed")
        return self.stationary / self.widths


@dataclass
class CorrelationSeries:
    """Annealed correlation C_n over a lag grid."""
    n: np.ndarray
    value: np.ndarray
    method: str
    stderr: Optional[np.ndarray] = None
    slope_fit: Optional[SlopeFit] = None
    measure: str = "lebesgue"


@dataclass
class InducedDiagnostic:
    """Lipschitz-seminorm growth of P_Y^k on a test function."""
    ks: np.ndarray
    seminorms: np.ndarray
    sup_norms: np.ndarray
    mass_in: float
    mass_out: np.ndarray
    noise_floor: float
    c_contract: float
    c_bounded: float
    noisy: bool


# ============================================================================
# Power-law chain
# ============================================================================

class PowerLawKernel(BaseModel):
    """Transition kernel of the chain driven by nu_{alpha, epsilon}."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., gt=0, lt=1)
    epsilon: float = Field(..., gt=0)

    def as_law(self) -> ParamLaw:
        return ParamLaw.powerlaw(self.alpha, self.epsilon)


class ChainGeometry(BaseModel):
    """Petite set C and the auxiliary sets W, H for a given b."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(..., gt=0, lt=1)
    b: float = Field(..., gt=0, lt=0.5)
    C: Interval
    W: Interval
    H: Interval

    @model_validator(mode="after")
    def _check_b(self) -> "ChainGeometry":
        image = self.b * (1.0 + (2.0 * self.b) ** self.alpha)
        if not image > (3.0 + self.b) / 4.0:
            raise ValueError(f"b={self.b} violates f_alpha(b) > (3+b)/4 ({image:.6f} <= {(3 + self.b) / 4:.6f})")
        if not (self.b < 0.5 <= (self.b + 1.0) / 2.0):
            raise ValueError("need b < 1/2 <= (b+1)/2")
        return self

    def endpoints(self) -> dict[str, float]:
        return {
            "b": self.b,
            "C_lo": self.C.lo, "C_hi": self.C.hi,
            "W_lo": self.W.lo, "W_hi": self.W.hi,
            "H_lo": self.H.lo, "H_hi": self.H.hi,
        }


class HitTarget(str, Enum):
    """Hitting times recorded by the chain simulator."""
    TAU_C = "tau_C"
    TAU_H = "tau_H"
    TAU_W = "tau_W"
    TAU_W_TO_H = "tau_W_to_H"


@dataclass
class DensityVector:
    """Cell-averaged density on a partition of [0, 1]."""
    edges: np.ndarray
    values: np.ndarray

    @classmethod
    def from_masses(cls, edges: np.ndarray, masses: np.ndarray) -> "DensityVector":
        return cls(edges=edges, values=np.asarray(masses, dtype=np.float64) / np.diff(edges))

    @classmethod
    def uniform(cls, edges: np.ndarray) -> "DensityVector":
        return cls(edges=edges, values=np.ones(len(edges) - 1))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.widths

    @property
    def mass(self) -> float:
        return float(self.masses.sum())


@dataclass
class TVCurve:
    """Total-variation distance to the stationary density along the chain."""
    n: np.ndarray
    tv: np.ndarray
    slope_fit: Optional[SlopeFit] = None


@dataclass
class CondRhoReport:
    """Outcome of the density-class check on (b, 1/2)."""
    in_class: bool
    violations: list[int]
    sigma: float
    M: float
    K: float
    evolved: DensityVector


# ============================================================================
# Limit laws
# ============================================================================

class Regime(str, Enum):
    """Limit regime of the induced Birkhoff sums."""
    GAUSSIAN = "gaussian"
    STABLE = "stable"


class NormalizationPlan(BaseModel):
    """Centering A_n and scaling B_n for the induced Birkhoff sums."""
    alpha_eff: float = Field(..., gt=0, description="1/p, the tail parameter used")
    p: float = Field(..., gt=0)
    regime: Regime
    n: int = Field(..., ge=1)
    B_n: float = Field(..., gt=0)
    A_n: float
    c: float = Field(..., gt=0, description="Fitted tail constant c_L, or the sample std in the Gaussian regime")
    sample_mean: float
    provenance: str = ""
    fitted_regime: Optional[Regime] = Field(default=None, description="Regime the fitted p alone points to; diagnostic only")

    def scale_at(self, m: int) -> float:
        """B_m under the same rule."""
        if self.regime == Regime.GAUSSIAN:
            return math.sqrt(m) * self.c
        return (self.c * m) ** (1.0 / self.p)


@dataclass
class LimitExperiment:
    """Normalized induced sums and their distributional checks."""
    law: ParamLaw
    phi: Observable
    n: int
    n_blocks: int
    plan: NormalizationPlan
    raw_n: np.ndarray
    raw_2n: np.ndarray
    sums: np.ndarray
    sums_2n: np.ndarray
    ks_gaussian: float
    ks_selfsim: float
    ks_stable: Optional[float]
    variance_ratio: float
    spread_growth: float = math.nan
    sign_flipped: bool = False
    verdicts: dict[str, bool] = field(default_factory=dict)
    censored: int = 0

    @property
    def censored_fraction(self) -> float:
        """Share of the 2 n_blocks blocks dropped at the step cap."""
        return self.censored / (2 * self.n_blocks)


# ============================================================================
# Experiment configuration
# ============================================================================

class ExperimentKind(str, Enum):
    """Experiments the CLI can dispatch."""
    TAILS = "tails"
    DISTORTION = "distortion"
    ULAM = "ulam"
    CORRELATIONS = "correlations"
    CHAIN = "chain"
    LIMITS = "limits"
    ANNULUS = "annulus"


class Sizes(BaseModel):
    """Sample sizes and resolution knobs; each experiment reads its own subset."""
    excursions: Optional[int] = Field(default=None, gt=0)
    n_max: Optional[int] = Field(default=None, gt=0)
    samples: Optional[int] = Field(default=None, gt=0)
    cells: Optional[int] = Field(default=None, gt=0)
    cap: int = Field(default=100_000_000, gt=0, description="Step cap per excursion or hitting time")
    blocks: Optional[int] = Field(default=None, gt=0)
    n: Optional[int] = Field(default=None, gt=0)
    quadrature: int = Field(default=16, gt=0)
    trials: Optional[int] = Field(default=None, gt=0)
    max_depth: int = Field(default=30, gt=0)
    k: Optional[int] = Field(default=None, gt=0)
    steps: Optional[int] = Field(default=None, gt=0)
    pilot: Optional[int] = Field(default=None, gt=0)
    bootstrap: int = Field(default=500, gt=0)
    eta: Optional[float] = Field(default=None, gt=0, lt=1)


class Thresholds(BaseModel):
    """Pass/fail thresholds for verdict fields."""
    ks_gaussian: float = Field(default=0.05, gt=0)
    ks_gaussian_reject: float = Field(default=0.15, gt=0)
    ks_stable: float = Field(default=0.07, gt=0)
    ks_selfsim: float = Field(default=0.07, gt=0)
    censoring: float = Field(default=0.01, gt=0)
    annulus_fraction: float = Field(default=0.95, gt=0)
    variance_low: float = Field(default=0.8, gt=0, description="Gaussian regime: lower bound on the 2n to n variance ratio")
    variance_high: float = Field(default=1.25, gt=0, description="Gaussian regime: upper bound on the 2n to n variance ratio")
    variance_growth: float = Field(default=1.25, gt=0, description="Stable regime: lower bound on the diffusive spread growth from n to 2n")
    tv_slope: float = Field(default=0.15, gt=0, description="Slack on the TV decay slope")
    correlation_slope: float = Field(default=0.15, gt=0, description="Slack on the correlation decay slope")
    hill_slack: float = Field(default=0.15, gt=0, description="tau_C: relative slack on the Hill index below 1/alpha")
    hill_tolerance: float = Field(default=0.10, gt=0, description="Return-time tail: relative tolerance on the Hill index around 1/alpha")
    loglinear_r: float = Field(default=0.99, gt=0, le=1, description="tau_H: minimum |r| of log-survival against t")
    tau_w_survival: float = Field(default=1e-3, gt=0, description="tau_W: maximum survival at 50 steps")
    density_slope: float = Field(default=0.1, gt=0, description="Ulam: tolerance on the stationary density slope around -alpha")
    occupation: float = Field(default=0.02, gt=0, description="Maximum relative error of occupation frequencies per decade")


class ChainOptions(BaseModel):
    """Options specific to the power-law chain experiment."""
    b: Optional[float] = Field(default=None, gt=0, lt=0.5)
    targets: list[HitTarget] = Field(default_factory=lambda: [HitTarget.TAU_H, HitTarget.TAU_C, HitTarget.TAU_W])
    condrho_scale: float = Field(default=1.0, ge=1.0, description="K as a multiple of the smallest K admitting the test density")


class Settings(BaseModel):
    """Execution settings."""
    workers: int = Field(default=1, ge=1)
    cache: bool = True
    cache_dir: Optional[str] = None
    ledger: bool = True
    ledger_path: Optional[str] = None


class ExperimentConfig(BaseModel):
    """One reviewable experiment."""
    kind: ExperimentKind
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: str = "runs"
    law: ParamLaw
    phi: list[float] = Field(default_factory=lambda: [1.0], min_length=1)
    psi: Optional[list[float]] = Field(default=None, min_length=1)
    sizes: Sizes = Field(default_factory=Sizes)
    chain: ChainOptions = Field(default_factory=ChainOptions)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    settings: Settings = Field(default_factory=Settings)

    @field_validator("phi", "psi", mode="before")
    @classmethod
    def _scalar_to_list(cls, value):
        if isinstance(value, (int, float)):
            return [float(value)]
        return value

    def observable(self, name: str = "phi") -> Observable:
        coefficients = getattr(self, name)
        if coefficients is None:
            coefficients = self.phi
        return Observable.polynomial(coefficients)


class Diagnostic(BaseModel):
    """A single configuration violation."""
    field: str
    message: str


class RunManifest(BaseModel):
    """What a run produced and how to reproduce it."""
    kind: ExperimentKind
    config: dict[str, Any]
    version: str
    started_at: datetime = Field(default_factory=datetime.now)
    wall_clock_seconds: float = 0.0
    outputs: dict[str, str] = Field(default_factory=dict, description="relative path -> sha256 of the payload")
    status: str = "ok"
    exit_code: int = 0
    summary: dict[str, Any] = Field(default_factory=dict)
