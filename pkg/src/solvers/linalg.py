"""Dense LU factorization with partial pivoting and a singularity guard."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..utils.errors import SingularMatrixError

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-12
RESIDUAL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class LinearSystem:
    """Square system ``matrix @ x = rhs``."""

    matrix: np.ndarray
    rhs: np.ndarray

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix)
        rhs = np.asarray(self.rhs)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Coefficient matrix must be square, got shape {matrix.shape}.")
        if rhs.shape[0] != matrix.shape[0]:
            raise ValueError(
                f"Right-hand side has {rhs.shape[0]} rows; matrix has {matrix.shape[0]}.",
            )


@dataclass(frozen=True)
class LuFactor:
    """Reusable factorization ``P L U`` of a square matrix."""

    lu: np.ndarray
    piv: np.ndarray

    def solve(self, rhs: np.ndarray, *, transpose: bool = False) -> np.ndarray:
        return scipy.linalg.lu_solve((self.lu, self.piv), rhs, trans=1 if transpose else 0)


def lu_factor(matrix: np.ndarray, *, pivot_tolerance: float = PIVOT_TOLERANCE) -> LuFactor:
    """Factorize ``matrix``.

    Args:
        matrix: Square real or complex matrix.
        pivot_tolerance: Smallest admissible pivot magnitude.

    Returns:
        The :class:`LuFactor`.

    Raises:
        SingularMatrixError: If a pivot magnitude is at or below ``pivot_tolerance``.
    """
    matrix = np.asarray(matrix)
    if matrix.shape[0] == 0:
        return LuFactor(lu=matrix.copy(), piv=np.zeros(0, dtype=np.int32))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=True)
    smallest = float(np.min(np.abs(np.diag(lu))))
    if not smallest > pivot_tolerance:
        raise SingularMatrixError(
            f"Matrix is singular: smallest pivot {smallest:.3e} <= {pivot_tolerance:.0e}.",
        )
    return LuFactor(lu=lu, piv=piv)


def lu_solve(
    system: LinearSystem,
    *,
    pivot_tolerance: float = PIVOT_TOLERANCE,
    residual_tolerance: float = RESIDUAL_TOLERANCE,
) -> np.ndarray:
    """Solve a square linear system.

    One step of iterative refinement follows the triangular solves. The
    result must leave ``|A x - b|_inf <= residual_tolerance * max(1, |b|_inf)``.

    Args:
        system: The :class:`LinearSystem` to solve.
        pivot_tolerance: Smallest admissible pivot magnitude.
        residual_tolerance: Largest admissible relative residual.

    Returns:
        The solution vector ``x``.

    Raises:
        SingularMatrixError: If the matrix is numerically singular or too
            ill-conditioned to meet the residual bound.
    """
    matrix = np.asarray(system.matrix)
    rhs = np.asarray(system.rhs)
    factor = lu_factor(matrix, pivot_tolerance=pivot_tolerance)
    solution = factor.solve(rhs)
    solution = solution + factor.solve(rhs - matrix @ solution)
    residual = float(np.max(np.abs(matrix @ solution - rhs), initial=0.0))
    bound = residual_tolerance * max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    logger.debug("LU solve of size %d, residual %.3e", matrix.shape[0], residual)
    if not residual <= bound:
        raise SingularMatrixError(
            f"Linear solve residual {residual:.3e} exceeds {bound:.3e}; "
            "the matrix is too ill-conditioned.",
        )
    return solution


def solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return lu_solve(LinearSystem(matrix, rhs))


def independent_rows(matrix: np.ndarray, *, tolerance: float = 1e-10) -> np.ndarray:
    """Indices (ascending) of a maximal linearly independent subset of rows.

    Uses QR with column pivoting on the transpose; a row counts as dependent
    when its pivot falls below ``tolerance`` relative to the largest pivot.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        return np.zeros(0, dtype=int)
    _, r, perm = scipy.linalg.qr(matrix.T, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(r))
    if pivots.size == 0 or pivots[0] == 0.0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(pivots > tolerance * pivots[0]))
    return np.sort(perm[:rank])
