"""Condense an equality-constrained box system onto its free columns.

Given ``matrix @ z == rhs`` with ``lower <= z <= upper``, pick a set of
dependent columns whose submatrix is nonsingular, express them as an affine
function of the remaining free columns, and turn their finite bounds into
inequality rows over the free columns. Rows that can never bind over the
free box are dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..utils.errors import InfeasibleModelError
from .linalg import independent_rows, lu_factor

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-9
CONSISTENCY_TOLERANCE = 1e-8
PRUNE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Condensation:
    """Affine parametrization ``z[dependent] = offset + mapping @ z[free]``.

    ``a_ub @ z[free] <= b_ub`` carries the surviving dependent-column bounds and
    ``free_lower``/``free_upper`` the free columns' own bounds.
    """

    n_cols: int
    free: np.ndarray
    dependent: np.ndarray
    offset: np.ndarray
    mapping: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    free_lower: np.ndarray
    free_upper: np.ndarray
    pruned_rows: int = 0

    @property
    def n_free(self) -> int:
        return int(self.free.shape[0])

    def expand(self, z_free: np.ndarray) -> np.ndarray:
        """Full column vector for free values ``z_free``."""
        z = np.empty(self.n_cols)
        z[self.free] = z_free
        z[self.dependent] = self.offset + self.mapping @ np.asarray(z_free, dtype=float)
        return z

    def affine(self, column: int) -> tuple[np.ndarray, float]:
        """Return ``(coefficients, constant)`` expressing one column in free variables."""
        hits = np.flatnonzero(self.free == column)
        if hits.size:
            coefficients = np.zeros(self.n_free)
            coefficients[hits[0]] = 1.0
            return coefficients, 0.0
        position = int(np.flatnonzero(self.dependent == column)[0])
        return self.mapping[position].copy(), float(self.offset[position])

    def linear_form(self, weights: np.ndarray) -> tuple[np.ndarray, float]:
        """Express ``weights @ z`` as ``coefficients @ z[free] + constant``."""
        weights = np.asarray(weights, dtype=float)
        coefficients = weights[self.free] + weights[self.dependent] @ self.mapping
        return coefficients, float(weights[self.dependent] @ self.offset)


def condense(
    matrix: np.ndarray,
    rhs: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    *,
    prefer_free: Sequence[int] = (),
) -> Condensation:
    """Eliminate the equality rows of a box-constrained linear system.

    Args:
        matrix: Equality coefficients (rows x columns).
        rhs: Equality right-hand side.
        lower: Column lower bounds (may be ``-inf``).
        upper: Column upper bounds (may be ``inf``).
        prefer_free: Columns to keep free when possible, most preferred first.

    Returns:
        The :class:`Condensation`.

    Raises:
        InfeasibleModelError: If the equalities are inconsistent or a
            dependent bound can never be met.
    """
    matrix = np.asarray(matrix, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n_cols = matrix.shape[1]

    rows = independent_rows(matrix, tolerance=RANK_TOLERANCE)
    reduced, reduced_rhs = matrix[rows], rhs[rows]

    order = _dependent_preference(n_cols, prefer_free)
    dependent = _pick_dependent(reduced, order)
    dependent_set = set(dependent.tolist())
    free = np.array([j for j in range(n_cols) if j not in dependent_set], dtype=int)

    if dependent.size:
        factor = lu_factor(reduced[:, dependent])
        offset = factor.solve(reduced_rhs)
        mapping = -factor.solve(reduced[:, free]) if free.size else np.zeros((dependent.size, 0))
    else:
        offset = np.zeros(0)
        mapping = np.zeros((0, free.size))

    provisional = Condensation(
        n_cols=n_cols,
        free=free,
        dependent=dependent,
        offset=offset,
        mapping=mapping,
        a_ub=np.zeros((0, free.size)),
        b_ub=np.zeros(0),
        free_lower=lower[free],
        free_upper=upper[free],
    )
    _check_consistency(matrix, rhs, provisional)

    a_rows: list[np.ndarray] = []
    b_rows: list[float] = []
    for position, column in enumerate(dependent):
        coefficients = mapping[position]
        if np.isfinite(upper[column]):
            a_rows.append(coefficients)
            b_rows.append(upper[column] - offset[position])
        if np.isfinite(lower[column]):
            a_rows.append(-coefficients)
            b_rows.append(offset[position] - lower[column])

    a_ub = np.array(a_rows).reshape(len(a_rows), free.size)
    b_ub = np.array(b_rows)
    keep = _binding_rows(a_ub, b_ub, lower[free], upper[free])
    logger.debug(
        "Condensed %d columns to %d free; kept %d of %d bound rows",
        n_cols,
        free.size,
        int(keep.sum()),
        keep.size,
    )
    return Condensation(
        n_cols=n_cols,
        free=free,
        dependent=dependent,
        offset=offset,
        mapping=mapping,
        a_ub=a_ub[keep],
        b_ub=b_ub[keep],
        free_lower=lower[free],
        free_upper=upper[free],
        pruned_rows=int((~keep).sum()),
    )


def _dependent_preference(n_cols: int, prefer_free: Sequence[int]) -> list[int]:
    preferred = list(dict.fromkeys(int(j) for j in prefer_free))
    preferred_set = set(preferred)
    rest = [j for j in range(n_cols) if j not in preferred_set]
    return rest + preferred[::-1]


def _pick_dependent(matrix: np.ndarray, order: list[int]) -> np.ndarray:
    """Greedy column basis in ``order`` via modified Gram-Schmidt."""
    rank = matrix.shape[0]
    if rank == 0:
        return np.zeros(0, dtype=int)
    scale = max(1.0, float(np.max(np.abs(matrix))))
    basis: list[np.ndarray] = []
    chosen: list[int] = []
    for column in order:
        vector = matrix[:, column].copy()
        norm = float(np.linalg.norm(vector))
        if norm <= RANK_TOLERANCE * scale:
            continue
        for _ in range(2):
            for q in basis:
                vector -= (q @ vector) * q
        residual = float(np.linalg.norm(vector))
        if residual <= RANK_TOLERANCE * max(norm, 1.0):
            continue
        basis.append(vector / residual)
        chosen.append(column)
        if len(chosen) == rank:
            break
    if len(chosen) < rank:
        raise InfeasibleModelError("Equality rows are rank deficient after row selection.")
    return np.array(sorted(chosen), dtype=int)


def _check_consistency(matrix: np.ndarray, rhs: np.ndarray, condensation: Condensation) -> None:
    if not matrix.shape[0]:
        return
    origin_point = condensation.expand(np.zeros(condensation.n_free))
    residual = float(np.max(np.abs(matrix @ origin_point - rhs)))
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if residual > CONSISTENCY_TOLERANCE * scale:
        raise InfeasibleModelError(f"Equality rows are inconsistent (residual {residual:.3e}).")


def _binding_rows(
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
) -> np.ndarray:
    """Mask of rows that some point of the free box can violate."""
    if not a_ub.shape[0]:
        return np.zeros(0, dtype=bool)
    with np.errstate(invalid="ignore"):
        positive = np.where(a_ub > 0.0, a_ub * upper, 0.0)
        negative = np.where(a_ub < 0.0, a_ub * lower, 0.0)
    worst = (positive + negative).sum(axis=1)
    zero_rows = ~np.any(np.abs(a_ub) > 0.0, axis=1)
    if np.any(zero_rows & (b_ub < -CONSISTENCY_TOLERANCE)):
        raise InfeasibleModelError("A dependent column is fixed outside its bounds.")
    scale = np.maximum(1.0, np.abs(b_ub))
    return ~(worst <= b_ub + PRUNE_TOLERANCE * scale) & ~zero_rows
