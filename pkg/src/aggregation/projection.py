"""Projection of a linear model's feasible set onto its coupling variables.

Two methods are offered. The support-function method solves one LP per
direction and yields an outer approximation. Fourier-Motzkin elimination
yields the exact projection but only for small models.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from ..models.linear_model import LinearModel
from ..solvers.lp import LpProblem, SolverStatus, solve_lp
from ..solvers.reduction import Condensation
from ..utils.errors import InfeasibleModelError, InstanceTooLargeError
from ..utils.helpers import parallel_map
from .envelope import CouplingSpace, EnvelopeKind, FlexibilityEnvelope

logger = logging.getLogger(__name__)

DEFAULT_DIRECTIONS = 64
FM_MAX_VARIABLES = 30
REDUNDANCY_TOLERANCE = 1e-9
PIVOT_TOLERANCE = 1e-12
ZERO_TOLERANCE = 1e-12


def evenly_spaced_directions(count: int = DEFAULT_DIRECTIONS) -> np.ndarray:
    """Unit vectors at angles ``2πk/count`` in the plane.

    Raises:
        ValueError: If ``count`` is below 3 (the result would not bound a polygon).
    """
    if count < 3:
        raise ValueError("At least three directions are needed to bound a 2-D slice.")
    angles = 2.0 * np.pi * np.arange(count) / count
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    directions[np.abs(directions) < ZERO_TOLERANCE] = 0.0
    return directions


def axis_directions(dim: int) -> np.ndarray:
    """``+e_i`` then ``-e_i`` for every axis (a bounding box)."""
    eye = np.eye(dim)
    return np.vstack([eye, -eye])


def _coupling_map(
    model: LinearModel,
    space: CouplingSpace,
    condensation: Condensation,
) -> tuple[np.ndarray, np.ndarray]:
    coefficients = []
    constants = []
    for label in space.labels:
        row, constant = condensation.affine(model.column(label))
        coefficients.append(row)
        constants.append(constant)
    return np.array(coefficients).reshape(space.dim, condensation.n_free), np.array(constants)


def project_support(
    model: LinearModel,
    space: CouplingSpace,
    directions: Sequence[Sequence[float]] | np.ndarray | None = None,
    *,
    max_workers: int | None = 1,
) -> FlexibilityEnvelope:
    """Outer approximation by support functions.

    For every direction ``n`` the LP ``max n @ x`` over the model's feasible
    set gives the halfspace ``n @ x <= optimum``. The model is first condensed
    onto its free columns so every LP is small.

    Args:
        model: Linear model whose columns include ``space.labels``.
        space: Coupling space to project onto.
        directions: One direction per row; defaults to 64 evenly spaced
            directions for 2-D spaces and the bounding box otherwise.
        max_workers: Threads used for the direction LPs.

    Returns:
        An outer :class:`FlexibilityEnvelope`; unbounded directions are dropped.

    Raises:
        InfeasibleModelError: If the model has no feasible point.
    """
    if directions is None:
        directions = (
            evenly_spaced_directions() if space.dim == 2 else axis_directions(space.dim)
        )
    directions = np.asarray(directions, dtype=float).reshape(-1, space.dim)
    condensation = model.condense()
    coupling, constant = _coupling_map(model, space, condensation)

    def support(direction: np.ndarray) -> tuple[SolverStatus, float]:
        objective = direction @ coupling
        offset = float(direction @ constant)
        if condensation.n_free == 0:
            return SolverStatus.OPTIMAL, offset
        result = solve_lp(
            LpProblem(
                c=objective,
                a_ub=condensation.a_ub,
                b_ub=condensation.b_ub,
                lower=condensation.free_lower,
                upper=condensation.free_upper,
                maximize=True,
            ),
        )
        return result.status, float(result.objective) + offset

    outcomes = parallel_map(support, list(directions), max_workers=max_workers)
    kept = [index for index, (status, _) in enumerate(outcomes) if status is SolverStatus.OPTIMAL]
    failed = {status for status, _ in outcomes if status is not SolverStatus.OPTIMAL}
    if SolverStatus.INFEASIBLE in failed:
        raise InfeasibleModelError("Model has no feasible point to project.")
    if SolverStatus.ITERATION_LIMIT in failed:
        raise InfeasibleModelError("Support LP hit its iteration limit.")
    dropped = len(outcomes) - len(kept)
    if dropped:
        logger.warning("Dropped %d unbounded support directions", dropped)
    return FlexibilityEnvelope(
        space=space,
        normals=directions[kept],
        offsets=np.array([outcomes[index][1] for index in kept]),
        kind=EnvelopeKind.OUTER,
        model_kind=model.kind.label if model.kind else None,
        base_id=model.base_id,
        dropped_directions=dropped,
    )


class _InequalitySystem:
    """Rows ``a @ z <= b`` over a shrinking set of live columns."""

    def __init__(self, a: np.ndarray, b: np.ndarray):
        self.a = a
        self.b = b

    def substitute(self, column: int, row: np.ndarray, rhs: float) -> None:
        """Eliminate ``column`` using the equality ``row @ z == rhs``."""
        factors = self.a[:, column] / row[column]
        self.a = self.a - np.outer(factors, row)
        self.b = self.b - factors * rhs
        self.a[:, column] = 0.0

    def eliminate(self, column: int) -> None:
        coefficients = self.a[:, column]
        positive = np.flatnonzero(coefficients > ZERO_TOLERANCE)
        negative = np.flatnonzero(coefficients < -ZERO_TOLERANCE)
        zero = np.flatnonzero(np.abs(coefficients) <= ZERO_TOLERANCE)
        rows = [self.a[zero]]
        rhs = [self.b[zero]]
        if positive.size and negative.size:
            pos_scale = coefficients[positive][:, None]
            neg_scale = -coefficients[negative][None, :]
            combined = (
                neg_scale[..., None] * self.a[positive][:, None, :]
                + pos_scale[..., None] * self.a[negative][None, :, :]
            )
            rows.append(combined.reshape(-1, self.a.shape[1]))
            rhs.append(
                (neg_scale * self.b[positive][:, None] + pos_scale * self.b[negative][None, :])
                .ravel(),
            )
        self.a = np.vstack(rows)
        self.b = np.concatenate(rhs)
        self.a[:, column] = 0.0
        self.normalize()

    def normalize(self) -> None:
        """Scale rows to unit normals, drop trivial rows and exact duplicates."""
        norms = np.linalg.norm(self.a, axis=1)
        trivial = norms <= ZERO_TOLERANCE
        if np.any(trivial & (self.b < -REDUNDANCY_TOLERANCE)):
            raise InfeasibleModelError("Model has no feasible point to project.")
        keep = ~trivial
        a = self.a[keep] / norms[keep][:, None]
        b = self.b[keep] / norms[keep]
        if a.shape[0]:
            key = np.round(np.hstack([a, b[:, None]]), 10)
            _, first = np.unique(key, axis=0, return_index=True)
            order = np.sort(first)
            a, b = a[order], b[order]
        self.a, self.b = a, b


def project_fourier_motzkin(
    model: LinearModel,
    space: CouplingSpace,
    *,
    max_variables: int = FM_MAX_VARIABLES,
) -> FlexibilityEnvelope:
    """Exact projection by Gaussian substitution and Fourier-Motzkin elimination.

    Equalities are first used to substitute local columns away. Equalities
    left over on coupling columns only become pairs of opposing halfspaces.
    Remaining local columns are then eliminated one at a time, each time
    choosing the column with the fewest positive-negative row pairs.
    Redundant halfspaces are finally removed with one LP per row.

    Args:
        model: Linear model whose columns include ``space.labels``.
        space: Coupling space to project onto.
        max_variables: Largest admissible column count.

    Returns:
        An exact :class:`FlexibilityEnvelope`.

    Raises:
        InstanceTooLargeError: If the model has more than ``max_variables`` columns.
        InfeasibleModelError: If the model has no feasible point.
    """
    if model.n_cols > max_variables:
        raise InstanceTooLargeError(
            f"Fourier-Motzkin is limited to {max_variables} variables; model has {model.n_cols}.",
        )
    coupling = np.array([model.column(label) for label in space.labels], dtype=int)
    local = [j for j in range(model.n_cols) if j not in set(coupling.tolist())]
    n = model.n_cols

    eye = np.eye(n)
    finite_upper = np.flatnonzero(np.isfinite(model.upper))
    finite_lower = np.flatnonzero(np.isfinite(model.lower))
    system = _InequalitySystem(
        np.vstack([eye[finite_upper], -eye[finite_lower]]).reshape(-1, n),
        np.concatenate([model.upper[finite_upper], -model.lower[finite_lower]]),
    )

    equalities = [row.copy() for row in model.matrix]
    rhs = list(model.rhs.astype(float))
    live = list(local)
    leftover_rows: list[np.ndarray] = []
    leftover_rhs: list[float] = []
    while equalities:
        row, value = equalities.pop(0), rhs.pop(0)
        threshold = PIVOT_TOLERANCE * max(1.0, float(np.abs(row).max()))
        candidates = [j for j in live if abs(row[j]) > threshold]
        if not candidates:
            leftover_rows.append(row)
            leftover_rhs.append(value)
            continue
        pivot = max(candidates, key=lambda j: (abs(row[j]), -j))
        for index, other in enumerate(equalities):
            if other[pivot] != 0.0:
                factor = other[pivot] / row[pivot]
                equalities[index] = other - factor * row
                equalities[index][pivot] = 0.0
                rhs[index] -= factor * value
        system.substitute(pivot, row, value)
        live.remove(pivot)

    for row, value in zip(leftover_rows, leftover_rhs):
        row[local] = 0.0
        if np.abs(row).max() <= PIVOT_TOLERANCE:
            if abs(value) > REDUNDANCY_TOLERANCE * max(1.0, abs(value)):
                raise InfeasibleModelError("Model equalities are inconsistent.")
            continue
        system.a = np.vstack([system.a, row, -row])
        system.b = np.concatenate([system.b, [value, -value]])
    system.normalize()

    while live:
        counts = []
        for column in live:
            coefficients = system.a[:, column]
            counts.append(
                int(np.sum(coefficients > ZERO_TOLERANCE))
                * int(np.sum(coefficients < -ZERO_TOLERANCE)),
            )
        column = live[int(np.argmin(counts))]
        system.eliminate(column)
        live.remove(column)
        logger.debug("Eliminated column %d; %d rows remain", column, system.a.shape[0])

    normals, offsets = remove_redundant(system.a[:, coupling], system.b)
    return FlexibilityEnvelope(
        space=space,
        normals=normals,
        offsets=offsets,
        kind=EnvelopeKind.EXACT,
        model_kind=model.kind.label if model.kind else None,
        base_id=model.base_id,
    )


def remove_redundant(
    normals: np.ndarray,
    offsets: np.ndarray,
    *,
    tolerance: float = REDUNDANCY_TOLERANCE,
) -> tuple[np.ndarray, np.ndarray]:
    """Drop halfspaces implied by the others.

    A row is dropped when maximizing its normal over the remaining rows stays
    at or below its offset plus ``tolerance``.

    Raises:
        InfeasibleModelError: If the halfspaces have no common point.
    """
    normals = np.asarray(normals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if not offsets.size:
        return normals, offsets
    feasibility = solve_lp(LpProblem(c=np.zeros(normals.shape[1]), a_ub=normals, b_ub=offsets))
    if feasibility.status is SolverStatus.INFEASIBLE:
        raise InfeasibleModelError("Projected halfspaces have no common point.")

    keep = np.ones(offsets.size, dtype=bool)
    for index in range(offsets.size):
        keep[index] = False
        others = np.flatnonzero(keep)
        if not others.size:
            keep[index] = True
            continue
        result = solve_lp(
            LpProblem(
                c=normals[index],
                a_ub=normals[others],
                b_ub=offsets[others],
                maximize=True,
            ),
        )
        redundant = result.ok and result.objective <= offsets[index] + tolerance * max(
            1.0, abs(offsets[index])
        )
        keep[index] = not redundant
    logger.debug("Redundancy check kept %d of %d halfspaces", int(keep.sum()), keep.size)
    return normals[keep], offsets[keep]
