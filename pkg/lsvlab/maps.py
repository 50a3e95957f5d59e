from __future__ import annotations

"""The LSV map family: forward maps, branch inverses, derivatives and distortion."""

import math
from enum import Enum
from typing import Sequence, Union

import numpy as np
from numba import njit

from .errors import CylinderError, DomainError, EmptyPreimageError
from .models import Interval, MapParameter

# Below this the step x(2x)^omega underflows; the map is the identity there.
NEUTRAL_GUARD = 1e-300
INVERSE_TOL = 1e-14
INVERSE_MAX_ITER = 200
DISTORTION_GRID = 64
BRANCH_POINT_TOL = 1e-9

ParamLike = Union[MapParameter, float]


class Branch(str, Enum):
    """Monotone branches of f_omega."""
    LEFT = "left"
    RIGHT = "right"


def _omega(p: ParamLike) -> float:
    omega = p.omega if isinstance(p, MapParameter) else float(p)
    if not omega > 0:
        raise DomainError(f"omega must be positive, got {omega}")
    return omega


# ============================================================================
# Compiled kernels
# ============================================================================

@njit(cache=True)
def left_step(x, omega):
    """Left-branch formula, valid on [0, 1/2]."""
    if x < NEUTRAL_GUARD:
        return x
    y = x * (1.0 + (2.0 * x) ** omega)
    return y if y < 1.0 else 1.0


@njit(cache=True)
def lsv_step(x, omega):
    """f_omega(x); x = 1/2 belongs to the right branch."""
    if x >= 0.5:
        return 2.0 * x - 1.0
    return left_step(x, omega)


@njit(cache=True)
def left_inverse(y, omega, tol, max_iter):
    """Unique x in [0, 1/2) with x(1+(2x)^omega) = y, for y in [0, 1).

    Newton steps safeguarded by a shrinking bracket. Starting to the right
    of the root keeps Newton monotone on this convex branch; bisection takes
    over whenever a step leaves the bracket.
    """
    if y <= 0.0:
        return 0.0
    lo = 0.0
    hi = y if y < 0.5 else 0.5
    x = hi
    for _ in range(max_iter):
        t = (2.0 * x) ** omega
        g = x * (1.0 + t) - y
        if g == 0.0:
            return x
        if g > 0.0:
            hi = x
        else:
            lo = x
        x_new = x - g / (1.0 + (omega + 1.0) * t)
        if x_new <= lo or x_new >= hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol * x_new or hi - lo <= tol * hi:
            return x_new
        x = x_new
    return x


@njit(cache=True)
def left_inverse_array(ys, omegas, out, tol, max_iter):
    for i in range(ys.shape[0]):
        out[i] = left_inverse(ys[i], omegas[i], tol, max_iter)
    return out


@njit(cache=True)
def log_derivative(x, omega):
    if x >= 0.5:
        return math.log(2.0)
    return math.log1p((omega + 1.0) * (2.0 * x) ** omega)


@njit(cache=True)
def _log_jacobian_and_word(xs, omegas, log_jac, words):
    """log Df^n along each orbit and the branch word (1 = right) of each point."""
    n = omegas.shape[0]
    for i in range(xs.shape[0]):
        x = xs[i]
        acc = 0.0
        for k in range(n):
            words[i, k] = 1 if x >= 0.5 else 0
            acc += log_derivative(x, omegas[k])
            x = lsv_step(x, omegas[k])
        log_jac[i] = acc


# ============================================================================
# Public operations
# ============================================================================

def apply_map(x: float, p: ParamLike) -> float:
    """f_omega(x) = x(1+(2x)^omega) on [0,1/2), 2x-1 on [1/2,1]."""
    omega = _omega(p)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    return float(lsv_step(float(x), omega))


def apply_map_array(x: np.ndarray, omegas: Union[np.ndarray, float]) -> np.ndarray:
    """Vectorized f_omega over arrays of points and parameters."""
    x = np.asarray(x, dtype=np.float64)
    omegas = np.broadcast_to(np.asarray(omegas, dtype=np.float64), x.shape)
    with np.errstate(under="ignore"):
        left = x * (1.0 + (2.0 * x) ** omegas)
    left = np.where(x < NEUTRAL_GUARD, x, np.minimum(left, 1.0))
    return np.where(x >= 0.5, 2.0 * x - 1.0, left)


def invert_left_branch(y: float, p: ParamLike) -> float:
    """Inverse of the left branch; defined on [0, 1)."""
    omega = _omega(p)
    if not 0.0 <= y < 1.0:
        raise DomainError(f"left branch maps onto [0, 1); got y={y}")
    return float(left_inverse(float(y), omega, INVERSE_TOL, INVERSE_MAX_ITER))


def invert_left_array(y: np.ndarray, omegas: Union[np.ndarray, float]) -> np.ndarray:
    y = np.ascontiguousarray(y, dtype=np.float64)
    omegas = np.ascontiguousarray(np.broadcast_to(np.asarray(omegas, dtype=np.float64), y.shape))
    out = np.empty_like(y)
    return left_inverse_array(y.ravel(), omegas.ravel(), out.ravel(), INVERSE_TOL, INVERSE_MAX_ITER).reshape(y.shape)


def invert_right_branch(y: float) -> float:
    """Inverse of 2x-1."""
    return 0.5 * (y + 1.0)


def derivative(x: float, p: ParamLike, left_limit: bool = False) -> float:
    """f'_omega(x); at x = 1/2 the right branch unless left_limit is set."""
    omega = _omega(p)
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")
    if x < 0.5 or (left_limit and x == 0.5):
        return 1.0 + (omega + 1.0) * (2.0 * x) ** omega
    return 2.0


def _as_omegas(params: Sequence[ParamLike]) -> np.ndarray:
    return np.array([_omega(p) for p in params], dtype=np.float64)


def compose(params: Sequence[ParamLike], x: float) -> float:
    """f_{omega_{n-1}} o ... o f_{omega_0}(x)."""
    for p in params:
        x = apply_map(x, p)
    return x


def pullback_interval(params: Sequence[ParamLike], target: Interval, branch_choices: Sequence[Union[Branch, str]]) -> Interval:
    """Interval mapped bijectively onto target by the composition along the given branches.

    branch_choices[i] is the branch the i-th iterate lies in.
    """
    if len(branch_choices) != len(params):
        raise ValueError(f"need one branch per parameter, got {len(branch_choices)} for {len(params)}")
    omegas = _as_omegas(params)
    lo, hi = target.lo, target.hi
    for omega, branch in zip(omegas[::-1], list(branch_choices)[::-1]):
        branch = Branch(branch)
        if branch == Branch.RIGHT:
            lo, hi = invert_right_branch(lo), invert_right_branch(hi)
        else:
            if hi >= 1.0:
                raise EmptyPreimageError(f"left branch has no preimage of [{lo}, {hi}]: its range is [0, 1)")
            lo, hi = invert_left_branch(lo, omega), invert_left_branch(hi, omega)
        if not lo < hi:
            raise EmptyPreimageError(f"preimage collapsed to [{lo}, {hi}]")
    return Interval(lo=lo, hi=hi)


def _grid(lo: float, hi: float, count: int) -> np.ndarray:
    if lo > 0.0:
        return np.geomspace(lo, hi, count)
    return np.linspace(lo, hi, count)


def _log_jacobian(omegas: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    log_jac = np.empty(len(xs))
    words = np.empty((len(xs), len(omegas)), dtype=np.int64)
    if len(omegas) == 0:
        return np.zeros(len(xs)), words
    _log_jacobian_and_word(xs, omegas, log_jac, words)
    return log_jac, words


def _check_cylinder(omegas: np.ndarray, xs: np.ndarray, words: np.ndarray, reference: np.ndarray) -> None:
    mismatch = np.nonzero((words != reference).any(axis=1))[0]
    for i in mismatch:
        # an orbit landing on 1/2 up to rounding is a boundary point, not a crossing
        x = xs[i]
        for k, omega in enumerate(omegas):
            if words[i, k] != reference[k] and abs(x - 0.5) > BRANCH_POINT_TOL:
                raise CylinderError(
                    f"point {xs[i]!r} leaves the cylinder at step {k} (orbit point {x!r})"
                )
            x = lsv_step(x, omega)


def distortion(params: Sequence[ParamLike], J: Interval, grid: int = DISTORTION_GRID) -> float:
    """Lower approximation of sup_{x,y in J} log(Df^n(x)/Df^n(y)).

    Sampled on a geometric grid, then refined once around the maximizing
    and minimizing grid points.
    """
    omegas = _as_omegas(params)
    if len(omegas) == 0:
        return 0.0
    xs = _grid(J.lo, J.hi, grid + 1)
    log_jac, words = _log_jacobian(omegas, xs)
    mid_word = _log_jacobian(omegas, np.array([0.5 * (J.lo + J.hi)]))[1][0]
    _check_cylinder(omegas, xs, words, mid_word)

    refined = [log_jac]
    for idx in (int(np.argmax(log_jac)), int(np.argmin(log_jac))):
        a = xs[max(idx - 1, 0)]
        b = xs[min(idx + 1, len(xs) - 1)]
        local = np.linspace(a, b, grid + 1)
        local_jac, local_words = _log_jacobian(omegas, local)
        _check_cylinder(omegas, local, local_words, mid_word)
        refined.append(local_jac)
    values = np.concatenate(refined)
    return float(values.max() - values.min())


def distortion_bound(params: Sequence[ParamLike], target: Interval) -> float:
    """(1+beta) log(sup I'/inf I') with beta the largest parameter used."""
    beta = max((_omega(p) for p in params), default=0.0)
    return (1.0 + beta) * math.log(target.hi / target.lo)


def corollary_bound(params: Sequence[ParamLike], J: Interval) -> float:
    """K'|f^n(x) - f^n(y)| with K' = 2(1+beta), for the endpoints of J."""
    beta = max((_omega(p) for p in params), default=0.0)
    return 2.0 * (1.0 + beta) * abs(compose(params, J.hi) - compose(params, J.lo))


def random_cylinder(
    rng: np.random.Generator,
    n: int,
    low: float = 0.5,
    high: float = 1.5,
) -> tuple[list[MapParameter], Interval, list[Branch]]:
    """Random parameters in [low, high], a target inside [1/2, 1) and a branch word."""
    omegas = rng.uniform(low, high, size=n)
    ends = np.sort(rng.uniform(0.5, 1.0, size=2))
    if ends[1] - ends[0] < 1e-6:
        ends[1] = min(ends[0] + 1e-3, 0.999)
    branches = [Branch.LEFT if b else Branch.RIGHT for b in rng.random(n) < 0.5]
    return [MapParameter(omega=float(w)) for w in omegas], Interval(lo=float(ends[0]), hi=float(ends[1])), branches
