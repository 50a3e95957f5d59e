from __future__ import annotations

"""Stationary vectors and total variation for finite stochastic matrices."""

import logging
import warnings
from typing import Optional, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from ..errors import NonConvergenceError

logger = logging.getLogger(__name__)

Matrix = Union[np.ndarray, sparse.spmatrix]


def total_variation_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Half the L1 distance between two mass vectors."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def push(v: np.ndarray, matrix: Matrix) -> np.ndarray:
    """One step of the chain on a row vector: v M."""
    if sparse.issparse(matrix):
        return matrix.T @ v
    return v @ matrix


def fixed_point_residual(v: np.ndarray, matrix: Matrix) -> float:
    """||v M - v||_1."""
    return float(np.abs(push(v, matrix) - v).sum())


def _direct_solve(matrix: Matrix) -> Optional[np.ndarray]:
    """Solve v(M - I) = 0, sum v = 1 by replacing one balance equation."""
    n = matrix.shape[0]
    if sparse.issparse(matrix):
        system = (matrix.T - sparse.identity(n, format="csr")).tolil()
        system[n - 1, :] = np.ones(n)
        rhs = np.zeros(n)
        rhs[n - 1] = 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            v = sparse_linalg.spsolve(system.tocsc(), rhs)
    else:
        system = matrix.T - np.eye(n)
        system[n - 1, :] = 1.0
        rhs = np.zeros(n)
        rhs[n - 1] = 1.0
        try:
            v = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            return None
    if not np.all(np.isfinite(v)):
        return None
    v = np.clip(v, 0.0, None)
    total = v.sum()
    return v / total if total > 0 else None


def stationary_vector(
    matrix: Matrix,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    initial: Optional[np.ndarray] = None,
    warm_start: bool = True,
) -> tuple[np.ndarray, float, int]:
    """Leading left fixed vector of a row-stochastic matrix.

    A direct solve supplies the starting vector; power iteration then
    polishes it until ||vM - v||_1 <= tol.

    Returns:
        (vector, residual, iterations)

    Raises:
        NonConvergenceError: tolerance not met within max_iter iterations.
    """
    n = matrix.shape[0]
    v = None
    if initial is not None:
        v = np.asarray(initial, dtype=np.float64).copy()
    elif warm_start:
        v = _direct_solve(matrix)
        if v is None:
            logger.debug("direct stationary solve failed; starting from uniform")
    if v is None:
        v = np.full(n, 1.0 / n)
    v = v / v.sum()

    residual = fixed_point_residual(v, matrix)
    iterations = 0
    while residual > tol and iterations < max_iter:
        w = push(v, matrix)
        w /= w.sum()
        iterations += 1
        # residual checks cost one extra product; do them every 10 steps
        if iterations % 10 == 0 or iterations == max_iter:
            residual = float(np.abs(w - v).sum())
        v = w
    residual = fixed_point_residual(v, matrix)
    if residual > tol:
        raise NonConvergenceError("stationary vector did not converge", residual, iterations)
    logger.debug("stationary vector: residual %.2e after %d power steps", residual, iterations)
    return v, residual, iterations


def check_row_stochastic(matrix: Matrix, tol: float) -> np.ndarray:
    """Indices of rows whose sum differs from 1 by more than tol."""
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    return np.nonzero(np.abs(sums - 1.0) > tol)[0]
