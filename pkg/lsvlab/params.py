from __future__ import annotations

"""Parameter laws and reproducible i.i.d. parameter streams."""

import math
from typing import Optional

import numpy as np
from scipy import integrate

from .models import LawKind, MapParameter, ParamLaw

# Purpose tags mixed into the seed derivation next to the stream index.
PARAMS = 0
SPATIAL = 1

BLOCK_SIZE = 1 << 16


def derive_generator(master_seed: int, stream_index: int, purpose: int = PARAMS) -> np.random.Generator:
    """Counter-based generator for (master_seed, stream_index, purpose).

    SeedSequence hashes the spawn key into Philox's key, so children are
    independent of how streams are scheduled across workers.
    """
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream_index, purpose))
    return np.random.Generator(np.random.Philox(seq))


def from_uniform(law: ParamLaw, u: np.ndarray) -> np.ndarray:
    """Map uniforms u in (0, 1] to parameters, nondecreasing in u.

    All laws go through the same uniforms, which gives the monotone coupling
    between laws ordered by stochastic dominance.
    """
    u = np.asarray(u, dtype=np.float64)
    if law.kind == LawKind.ATOMIC:
        omegas = np.array([w for w, _ in law.atoms])
        order = np.argsort(omegas)
        omegas = omegas[order]
        cumulative = np.cumsum(np.array([p for _, p in law.atoms])[order])
        cumulative[-1] = 1.0
        return omegas[np.searchsorted(cumulative, u, side="left")]
    if law.kind == LawKind.UNIFORM:
        return law.alpha + (law.beta - law.alpha) * u
    # inverse of the survival (t/alpha)^(-epsilon), taken at 1 - u
    return law.alpha * np.maximum(1.0 - u, 2.0 ** -53) ** (-1.0 / law.epsilon)


def survival(law: ParamLaw, t: float) -> float:
    """nu((t, inf))."""
    if law.kind == LawKind.ATOMIC:
        return float(sum(p for w, p in law.atoms if w > t))
    if law.kind == LawKind.UNIFORM:
        return float(np.clip((law.beta - t) / (law.beta - law.alpha), 0.0, 1.0))
    if t < law.alpha:
        return 1.0
    return (t / law.alpha) ** (-law.epsilon)


def mass_below(law: ParamLaw, cutoff: float) -> float:
    """nu([alpha, cutoff])."""
    if law.kind == LawKind.ATOMIC:
        return float(sum(p for w, p in law.atoms if w <= cutoff))
    return 1.0 - survival(law, cutoff)


def parameter_quadrature(law: ParamLaw, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights integrating against nu.

    Exact for atomic laws, Gauss-Legendre on [alpha, beta] for uniform laws.
    Unbounded power-law support has no fixed-interval rule.
    """
    if law.kind == LawKind.ATOMIC:
        omegas = np.array([w for w, _ in law.atoms], dtype=np.float64)
        weights = np.array([p for _, p in law.atoms], dtype=np.float64)
        return omegas, weights
    if law.kind == LawKind.UNIFORM:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        half = 0.5 * (law.beta - law.alpha)
        return law.alpha + half * (nodes + 1.0), 0.5 * weights
    raise ValueError("power-law parameters have unbounded support; use the chain module instead")


def mean_power(law: ParamLaw, base: float, order: int = 32) -> float:
    """E_nu[base^gamma] for base in (0, 1]."""
    if law.kind != LawKind.POWERLAW:
        nodes, weights = parameter_quadrature(law, order)
        return float(np.dot(weights, base ** nodes))
    eps, alpha = law.epsilon, law.alpha
    density = lambda g: eps * alpha**eps * g ** (-eps - 1.0) * base**g
    value, _ = integrate.quad(density, alpha, math.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(value)


class SeededStream:
    """Reproducible i.i.d. parameter sequence omega_0, omega_1, ... drawn from a law.

    Draws are buffered in blocks; the sequence is the same however it is
    consumed. A stream must not be advanced from two workers at once.
    """

    def __init__(self, master_seed: int, stream_index: int, law: ParamLaw, block_size: int = BLOCK_SIZE):
        if stream_index < 0:
            raise ValueError(f"stream_index must be nonnegative, got {stream_index}")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.law = law
        self.block_size = block_size
        self._rng = derive_generator(self.master_seed, self.stream_index, PARAMS)
        self._spatial: Optional[np.random.Generator] = None
        self._buffer = np.empty(0)
        self._uniform_buffer = np.empty(0)
        self._cursor = 0
        self.consumed = 0

    def _refill(self) -> None:
        # 1 - random() lies in (0, 1]
        u = 1.0 - self._rng.random(self.block_size)
        self._uniform_buffer = u
        self._buffer = from_uniform(self.law, u)
        self._cursor = 0

    def block(self) -> np.ndarray:
        """Unread part of the current block (never empty)."""
        if self._cursor >= len(self._buffer):
            self._refill()
        return self._buffer[self._cursor:]

    def advance(self, k: int) -> None:
        """Mark k parameters of the current block as consumed."""
        if k < 0 or self._cursor + k > len(self._buffer):
            raise ValueError(f"cannot advance by {k}")
        self._cursor += k
        self.consumed += k

    def take(self, k: int) -> np.ndarray:
        """Next k parameters as an array."""
        out = np.empty(k)
        filled = 0
        while filled < k:
            chunk = self.block()
            m = min(len(chunk), k - filled)
            out[filled:filled + m] = chunk[:m]
            self.advance(m)
            filled += m
        return out

    def take_uniforms(self, k: int) -> np.ndarray:
        """Next k underlying uniforms (consumes the matching parameters)."""
        out = np.empty(k)
        filled = 0
        while filled < k:
            self.block()
            m = min(len(self._uniform_buffer) - self._cursor, k - filled)
            out[filled:filled + m] = self._uniform_buffer[self._cursor:self._cursor + m]
            self.advance(m)
            filled += m
        return out

    def sample(self) -> MapParameter:
        return MapParameter(omega=float(self.take(1)[0]))

    @property
    def spatial(self) -> np.random.Generator:
        """Sibling generator for initial points, independent of the parameters."""
        if self._spatial is None:
            self._spatial = derive_generator(self.master_seed, self.stream_index, SPATIAL)
        return self._spatial

    def fork(self, law: ParamLaw) -> "SeededStream":
        """Fresh stream with the same seeds and another law (same uniforms)."""
        return SeededStream(self.master_seed, self.stream_index, law, self.block_size)

    def __repr__(self) -> str:
        return f"SeededStream(master_seed={self.master_seed}, stream_index={self.stream_index}, law={self.law.label})"


def sample(stream: SeededStream) -> MapParameter:
    """One draw from the stream's law."""
    return stream.sample()


def empirical_low_fraction(stream: SeededStream, n: int, cutoff: float) -> float:
    """Fraction of the next n draws in [alpha, cutoff]."""
    if cutoff < stream.law.window.alpha:
        raise ValueError(f"cutoff {cutoff} lies below alpha={stream.law.window.alpha}")
    draws = stream.take(n)
    return float(np.count_nonzero(draws <= cutoff)) / n
