from __future__ import annotations

"""Skew-product orbits, induced excursions, hitting times and occupation statistics.

Every step consumes exactly one parameter from the stream, so skew-product
time and stream position stay synchronized. The hot loops are compiled
kernels that consume one parameter block at a time and keep their state in a
small float array, which lets 10^8-step runs proceed without storing orbits.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import CapExceeded, DomainError
from .maps import lsv_step
from .models import InducedRecord, Interval, Observable, ParamLaw
from .params import SeededStream
from .utils.ensemble import concat, run_tasks, stream_chunks, sum_arrays

logger = logging.getLogger(__name__)

DEFAULT_CAP = 100_000_000
EXCURSIONS_PER_STREAM = 4096

# Kernel statuses
DONE = 0
EXHAUSTED = 1
CAPPED = 2

Y = Interval(lo=0.5, hi=1.0)


# ============================================================================
# Compiled kernels
# ============================================================================

@njit(cache=True)
def horner(coeffs, x):
    acc = 0.0
    for k in range(coeffs.shape[0] - 1, -1, -1):
        acc = acc * x + coeffs[k]
    return acc


@njit(cache=True)
def _bin_index(edges, x):
    lo = 0
    hi = edges.shape[0] - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if x >= edges[mid]:
            lo = mid
        else:
            hi = mid
    return lo


@njit(cache=True)
def _trace_kernel(omegas, x, out):
    """out[i] = x_i, the point before step i; returns the point after the last step."""
    for i in range(omegas.shape[0]):
        out[i] = x
        x = lsv_step(x, omegas[i])
    return x


@njit(cache=True)
def _excursions_kernel(omegas, entries, chained, coeffs, cap, state,
                       out_birkhoff, out_tau, out_return, out_censored):
    """Run induced excursions on one parameter block.

    state = [x, steps, acc, completed]. With chained=False each excursion
    starts at entries[k] and a capped excursion is recorded as censored;
    with chained=True the return point is the next entry and a cap stops
    the kernel.
    """
    x = state[0]
    steps = state[1]
    acc = state[2]
    k = int(state[3])
    total = out_tau.shape[0]
    n = omegas.shape[0]
    used = 0
    status = EXHAUSTED
    while k < total and used < n:
        if steps == 0.0 and not chained:
            x = entries[k]
        acc += horner(coeffs, x)
        x = lsv_step(x, omegas[used])
        used += 1
        steps += 1.0
        if x >= 0.5 or steps >= cap:
            censored = x < 0.5
            if censored and chained:
                status = CAPPED
                break
            out_birkhoff[k] = acc
            out_tau[k] = steps
            out_return[k] = x
            out_censored[k] = censored
            k += 1
            steps = 0.0
            acc = 0.0
    if status != CAPPED and k >= total:
        status = DONE
    state[0] = x
    state[1] = steps
    state[2] = acc
    state[3] = k
    return status, used


@njit(cache=True)
def _trace_excursion_kernel(omegas, x, steps, cap, trace):
    """Like one chained excursion, writing visited points into trace."""
    n = omegas.shape[0]
    for i in range(n):
        trace[i] = x
        x = lsv_step(x, omegas[i])
        steps += 1.0
        if x >= 0.5:
            return DONE, i + 1, x, steps
        if steps >= cap:
            return CAPPED, i + 1, x, steps
    return EXHAUSTED, n, x, steps


@njit(cache=True)
def _hit_kernel(omegas, state, lo, hi, cap):
    """Step until the orbit lands in [lo, hi]; state = [x, steps]."""
    x = state[0]
    steps = state[1]
    n = omegas.shape[0]
    for i in range(n):
        x = lsv_step(x, omegas[i])
        steps += 1.0
        if lo <= x <= hi:
            state[0] = x
            state[1] = steps
            return DONE, i + 1
        if steps >= cap:
            state[0] = x
            state[1] = steps
            return CAPPED, i + 1
    state[0] = x
    state[1] = steps
    return EXHAUSTED, n


@njit(cache=True)
def _occupation_kernel(omegas, x, edges, counts, skip):
    """Count the cell of each point before stepping; the first skip points are not counted."""
    for i in range(omegas.shape[0]):
        if i >= skip:
            counts[_bin_index(edges, x)] += 1
        x = lsv_step(x, omegas[i])
    return x


@njit(cache=True)
def _sum_kernel(omegas, x, coeffs, skip):
    total = 0.0
    for i in range(omegas.shape[0]):
        if i >= skip:
            total += horner(coeffs, x)
        x = lsv_step(x, omegas[i])
    return x, total


@njit(cache=True)
def _induced_endpoints_kernel(omegas, x0s, k, cap, state, out):
    """out[s] = F_Y^k(x0s[s]), or -1 when an excursion hits the cap.

    state = [sample, excursions done, x, steps] so the kernel can resume
    on the next parameter block.
    """
    s = int(state[0])
    e = int(state[1])
    x = state[2]
    steps = state[3]
    n = omegas.shape[0]
    used = 0
    while s < x0s.shape[0] and used < n:
        if e == 0 and steps == 0.0:
            x = x0s[s]
        x = lsv_step(x, omegas[used])
        used += 1
        steps += 1.0
        if x >= 0.5 or steps >= cap:
            steps = 0.0
            if x < 0.5:
                out[s] = -1.0
                s += 1
                e = 0
                continue
            e += 1
            if e == k:
                out[s] = x
                s += 1
                e = 0
    state[0] = s
    state[1] = e
    state[2] = x
    state[3] = steps
    return used


@njit(cache=True)
def _lagged_kernel(omegas, x0s, lags, out):
    """out[s, j] = point of sample s after lags[j] steps; omegas has one row per sample."""
    n_lags = lags.shape[0]
    for s in range(x0s.shape[0]):
        x = x0s[s]
        j = 0
        t = 0
        while j < n_lags:
            while t < lags[j]:
                x = lsv_step(x, omegas[s, t])
                t += 1
            out[s, j] = x
            j += 1


# ============================================================================
# Single-stream operations
# ============================================================================

def _check_point(x: float) -> None:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"x must lie in [0, 1], got {x}")


def run_orbit(x0: float, stream: SeededStream, n: int) -> np.ndarray:
    """(x0, f_{w0} x0, ..., f_w^n x0), length n+1."""
    _check_point(x0)
    out = np.empty(n + 1)
    filled = 0
    x = float(x0)
    while filled < n:
        block = stream.block()
        m = min(len(block), n - filled)
        x = _trace_kernel(block[:m], x, out[filled:filled + m])
        stream.advance(m)
        filled += m
    out[n] = x
    return out


def _excursion_traced(x_entry: float, stream: SeededStream, phi: Observable, cap: int) -> InducedRecord:
    x = float(x_entry)
    steps = 0.0
    acc = 0.0
    while True:
        block = stream.block()
        trace = np.empty(len(block))
        status, used, x, steps = _trace_excursion_kernel(block, x, steps, float(cap), trace)
        stream.advance(used)
        acc += float(np.sum(phi(trace[:used])))
        if status == DONE:
            return InducedRecord(tau=int(steps), birkhoff=acc, x_entry=x_entry, x_return=x)
        if status == CAPPED:
            partial = InducedRecord(tau=int(steps), birkhoff=acc, x_entry=x_entry, x_return=x, censored=True)
            raise CapExceeded(f"excursion from {x_entry} exceeded {cap} steps", partial=partial, steps=int(steps))


def induced_excursion(
    x_entry: float,
    stream: SeededStream,
    phi: Observable,
    cap: int = DEFAULT_CAP,
) -> InducedRecord:
    """One first-return excursion to Y = [1/2, 1].

    phi is summed over the excursion with the entry point as the first term
    and the return point excluded.

    Raises:
        CapExceeded: after cap steps; ``partial`` holds a censored record.
    """
    if not 0.5 <= x_entry <= 1.0:
        raise DomainError(f"x_entry must lie in [1/2, 1], got {x_entry}")
    if cap < 1:
        raise ValueError(f"cap must be at least 1, got {cap}")
    if not phi.is_polynomial:
        return _excursion_traced(x_entry, stream, phi, cap)

    sample = _run_excursions(stream, 1, phi.coefficient_array(), cap, chained=True, x_init=x_entry)
    if sample.partial is not None:
        steps, acc, x = sample.partial
        partial = InducedRecord(tau=steps, birkhoff=acc, x_entry=x_entry, x_return=x, censored=True)
        raise CapExceeded(f"excursion from {x_entry} exceeded {cap} steps", partial=partial, steps=steps)
    return InducedRecord(
        tau=int(sample.tau[0]),
        birkhoff=float(sample.birkhoff[0]),
        x_entry=x_entry,
        x_return=float(sample.x_return[0]),
    )


def hitting_time(x0: float, stream: SeededStream, target: Interval, cap: int = DEFAULT_CAP) -> int:
    """Least n >= 1 with the n-th orbit point in target.

    Raises:
        CapExceeded: no hit within cap steps.
    """
    _check_point(x0)
    state = np.array([float(x0), 0.0])
    while True:
        block = stream.block()
        status, used = _hit_kernel(block, state, target.lo, target.hi, float(cap))
        stream.advance(used)
        if status == DONE:
            return int(state[1])
        if status == CAPPED:
            raise CapExceeded(f"no hit of [{target.lo}, {target.hi}] from {x0} within {cap} steps",
                              partial=int(state[1]), steps=int(state[1]))


def birkhoff_sums_induced(
    n_excursions: int,
    stream: SeededStream,
    phi: Observable,
    x_init: float,
    cap: int = DEFAULT_CAP,
) -> np.ndarray:
    """Cumulative sums S^k phi_Y, k = 1..n_excursions, along one chained orbit.

    Raises:
        CapExceeded: ``partial`` holds the sums completed before the cap.
    """
    if n_excursions < 1:
        raise ValueError(f"n_excursions must be at least 1, got {n_excursions}")
    if not 0.5 <= x_init <= 1.0:
        raise DomainError(f"x_init must lie in [1/2, 1], got {x_init}")
    if phi.is_polynomial:
        sample = _run_excursions(stream, n_excursions, phi.coefficient_array(), cap, chained=True, x_init=x_init)
        if sample.partial is not None:
            done = sample.completed
            raise CapExceeded(
                f"excursion {done + 1} of {n_excursions} exceeded {cap} steps",
                partial=np.cumsum(sample.birkhoff[:done]),
                steps=sample.partial[0],
            )
        return np.cumsum(sample.birkhoff)

    values = np.empty(n_excursions)
    x = x_init
    for k in range(n_excursions):
        try:
            record = _excursion_traced(x, stream, phi, cap)
        except CapExceeded as exc:
            raise CapExceeded(str(exc), partial=np.cumsum(values[:k]), steps=exc.steps) from exc
        values[k] = record.birkhoff
        x = record.x_return
    return np.cumsum(values)


# ============================================================================
# Batched excursions
# ============================================================================

@dataclass
class ExcursionSample:
    """Columns of a batch of induced excursions."""
    tau: np.ndarray
    birkhoff: np.ndarray
    x_return: np.ndarray
    censored: np.ndarray
    completed: int = 0
    partial: Optional[tuple[int, float, float]] = None

    @property
    def n_censored(self) -> int:
        return int(np.count_nonzero(self.censored))


def _run_excursions(
    stream: SeededStream,
    n: int,
    coeffs: np.ndarray,
    cap: int,
    chained: bool,
    x_init: float = 1.0,
    entries: Optional[np.ndarray] = None,
) -> ExcursionSample:
    out_birkhoff = np.zeros(n)
    out_tau = np.zeros(n)
    out_return = np.zeros(n)
    out_censored = np.zeros(n, dtype=np.bool_)
    entries = np.empty(0) if entries is None else np.ascontiguousarray(entries, dtype=np.float64)
    state = np.array([float(x_init), 0.0, 0.0, 0.0])
    while True:
        block = stream.block()
        status, used = _excursions_kernel(
            block, entries, chained, coeffs, float(cap), state,
            out_birkhoff, out_tau, out_return, out_censored,
        )
        stream.advance(used)
        if status == DONE:
            return ExcursionSample(out_tau.astype(np.int64), out_birkhoff, out_return, out_censored, completed=n)
        if status == CAPPED:
            done = int(state[3])
            return ExcursionSample(
                out_tau[:done].astype(np.int64), out_birkhoff[:done], out_return[:done], out_censored[:done],
                completed=done, partial=(int(state[1]), float(state[2]), float(state[0])),
            )


def uniform_entries(stream: SeededStream, n: int) -> np.ndarray:
    """n points uniform on (1/2, 1] from the stream's spatial generator."""
    return 1.0 - 0.5 * stream.spatial.random(n)


def _fresh_excursions_task(args) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    master_seed, law, coeffs, cap, start, stop, total = args
    parts = []
    for index in range(start, stop):
        count = min(EXCURSIONS_PER_STREAM, total - index * EXCURSIONS_PER_STREAM)
        stream = SeededStream(master_seed, index, law)
        entries = uniform_entries(stream, count)
        parts.append(_run_excursions(stream, count, coeffs, cap, chained=False, entries=entries))
    return (
        concat(p.tau for p in parts),
        concat(p.birkhoff for p in parts),
        concat(p.x_return for p in parts),
        concat(p.censored for p in parts),
    )


def simulate_excursions(
    law: ParamLaw,
    phi: Observable,
    n_excursions: int,
    master_seed: int,
    cap: int = DEFAULT_CAP,
    workers: int = 1,
) -> ExcursionSample:
    """Independent excursions from x uniform on Y, censored at cap.

    Excursion i uses stream i // 4096, so the sample does not depend on
    the worker count.
    """
    n_streams = math.ceil(n_excursions / EXCURSIONS_PER_STREAM)
    if phi.is_polynomial:
        coeffs = phi.coefficient_array()
        tasks = [(master_seed, law, coeffs, cap, start, stop, n_excursions) for start, stop in stream_chunks(n_streams)]
        results = run_tasks(_fresh_excursions_task, tasks, workers)
        tau, birkhoff, x_return, censored = (concat(r[i] for r in results) for i in range(4))
        return ExcursionSample(tau.astype(np.int64), birkhoff, x_return, censored.astype(bool), completed=n_excursions)

    logger.debug("observable %s is not polynomial; simulating excursions serially", phi.name)
    tau = np.empty(n_excursions, dtype=np.int64)
    birkhoff = np.empty(n_excursions)
    x_return = np.empty(n_excursions)
    censored = np.zeros(n_excursions, dtype=bool)
    for index in range(n_streams):
        stream = SeededStream(master_seed, index, law)
        lo = index * EXCURSIONS_PER_STREAM
        hi = min(lo + EXCURSIONS_PER_STREAM, n_excursions)
        for i, x in enumerate(uniform_entries(stream, hi - lo), start=lo):
            try:
                record = _excursion_traced(float(x), stream, phi, cap)
            except CapExceeded as exc:
                record = exc.partial
                censored[i] = True
            tau[i], birkhoff[i], x_return[i] = record.tau, record.birkhoff, record.x_return
    return ExcursionSample(tau, birkhoff, x_return, censored, completed=n_excursions)


# ============================================================================
# Occupation statistics
# ============================================================================

def _occupation_task(args) -> np.ndarray:
    master_seed, law, edges, steps, burn_in, start, stop = args
    counts = np.zeros(len(edges) - 1, dtype=np.int64)
    for index in range(start, stop):
        stream = SeededStream(master_seed, index, law)
        x = float(stream.spatial.random())
        remaining = steps + burn_in
        skip = burn_in
        while remaining > 0:
            block = stream.block()
            m = min(len(block), remaining)
            x = _occupation_kernel(block[:m], x, edges, counts, skip)
            stream.advance(m)
            skip = max(0, skip - m)
            remaining -= m
    return counts


def occupation_histogram(
    law: ParamLaw,
    edges: np.ndarray,
    n_steps: int,
    master_seed: int,
    n_streams: int = 1,
    burn_in: int = 1000,
    workers: int = 1,
) -> np.ndarray:
    """Visit counts per cell over n_steps annealed steps split across n_streams orbits.

    Each orbit starts uniform on [0, 1] and discards its first burn_in points.
    """
    edges = np.ascontiguousarray(edges, dtype=np.float64)
    per_stream = n_steps // n_streams
    tasks = [(master_seed, law, edges, per_stream, burn_in, start, stop) for start, stop in stream_chunks(n_streams, 1)]
    counts = sum_arrays(run_tasks(_occupation_task, tasks, workers))
    return counts.astype(np.int64)


def occupation_mean(
    law: ParamLaw,
    psi: Observable,
    n_steps: int,
    master_seed: int,
    burn_in: int = 1000,
) -> float:
    """Long-run time average of psi along one annealed orbit."""
    stream = SeededStream(master_seed, 0, law)
    x = float(stream.spatial.random())
    remaining = n_steps + burn_in
    skip = burn_in
    total = 0.0
    coeffs = psi.coefficient_array() if psi.is_polynomial else None
    while remaining > 0:
        block = stream.block()
        m = min(len(block), remaining)
        if coeffs is not None:
            x, chunk = _sum_kernel(block[:m], x, coeffs, skip)
        else:
            trace = np.empty(m)
            x = _trace_kernel(block[:m], x, trace)
            chunk = float(np.sum(psi(trace[skip:]))) if skip < m else 0.0
        total += chunk
        stream.advance(m)
        skip = max(0, skip - m)
        remaining -= m
    return total / n_steps


def kac_check(
    law: ParamLaw,
    n_excursions: int,
    master_seed: int,
    stationary_mass_Y: Optional[float] = None,
    cap: int = DEFAULT_CAP,
) -> dict[str, float]:
    """Mean return time to Y along a chained orbit versus 1/pi(Y).

    Returns the running mean S^n/n for phi = 1 and, when the stationary mass
    of Y is known, the Kac prediction and their ratio.
    """
    stream = SeededStream(master_seed, 0, law)
    x_init = float(uniform_entries(stream, 1)[0])
    sample = _run_excursions(stream, n_excursions, np.ones(1), cap, chained=True, x_init=x_init)
    if sample.partial is not None:
        raise CapExceeded(f"Kac check stopped after {sample.completed} excursions", partial=sample.tau, steps=cap)
    tau = sample.tau.astype(np.float64)
    report = {
        "n_excursions": n_excursions,
        "mean_tau": float(tau.mean()),
        "stderr": float(tau.std(ddof=1) / math.sqrt(n_excursions)) if n_excursions > 1 else math.nan,
    }
    if stationary_mass_Y is not None:
        report["kac_prediction"] = 1.0 / stationary_mass_Y
        report["ratio"] = report["mean_tau"] / report["kac_prediction"]
    return report


def induced_endpoints(stream: SeededStream, x0s: np.ndarray, k: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """k-th return to Y of each starting point in Y, processed in order on one stream.

    Capped orbits are reported as -1.
    """
    x0s = np.ascontiguousarray(x0s, dtype=np.float64)
    out = np.empty(len(x0s))
    state = np.zeros(4)
    while int(state[0]) < len(x0s):
        used = _induced_endpoints_kernel(stream.block(), x0s, k, float(cap), state, out)
        stream.advance(used)
    return out


def lagged_points(stream: SeededStream, x0s: np.ndarray, lags: np.ndarray) -> np.ndarray:
    """Orbit points of each x0 at the given lags; sample s uses the next max(lags) parameters."""
    lags = np.ascontiguousarray(lags, dtype=np.int64)
    n_max = int(lags.max()) if len(lags) else 0
    x0s = np.ascontiguousarray(x0s, dtype=np.float64)
    omegas = stream.take(len(x0s) * n_max).reshape(len(x0s), n_max) if n_max else np.empty((len(x0s), 0))
    out = np.empty((len(x0s), len(lags)))
    _lagged_kernel(omegas, x0s, lags, out)
    return out
