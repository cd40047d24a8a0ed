"""Bounded-variable two-phase revised simplex for small dense LPs.

Problem form::

    minimize (or maximize)  c @ x
    subject to              a_eq @ x == b_eq
                            a_ub @ x <= b_ub
                            lower <= x <= upper      (bounds may be infinite)

Nonbasic variables rest at a finite bound (free ones at zero). Phase 1 adds
one artificial column per row that its slack cannot start in; in phase 2
leftover artificials are fixed to zero. Pricing is Dantzig's rule with
lowest-index tie-breaking and switches to Bland's rule after a run of
degenerate pivots, so identical inputs always produce identical pivots.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..utils.errors import SingularMatrixError
from .linalg import lu_factor

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-9
OPTIMALITY_TOLERANCE = 1e-9
PIVOT_TOLERANCE = 1e-9
DEGENERATE_STREAK = 50
MAX_ITERATIONS = 20_000

_BASIC, _AT_LOWER, _AT_UPPER, _FREE_ZERO = 0, 1, 2, 3


class SolverStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class LpProblem:
    """Dense LP; missing constraint blocks default to empty matrices."""

    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.shape[0]
        object.__setattr__(self, "c", c)
        for matrix_name, vector_name in (("a_eq", "b_eq"), ("a_ub", "b_ub")):
            matrix, vector = _block(getattr(self, matrix_name), getattr(self, vector_name), n)
            object.__setattr__(self, matrix_name, matrix)
            object.__setattr__(self, vector_name, vector)
        lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float)
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float)
        if lower.shape != (n,) or upper.shape != (n,):
            raise ValueError(f"Bounds must have shape ({n},).")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ValueError("Bounds must not be NaN.")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def n_vars(self) -> int:
        return int(self.c.shape[0])


@dataclass(frozen=True)
class LpResult:
    status: SolverStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals_eq: np.ndarray | None = None
    duals_ub: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    duality_gap: float = float("nan")
    iterations: int = 0
    infeasibility: float = 0.0
    message: str = field(default="")

    @property
    def ok(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


def solve_lp(
    problem: LpProblem,
    *,
    max_iterations: int = MAX_ITERATIONS,
    feasibility_tolerance: float = FEASIBILITY_TOLERANCE,
) -> LpResult:
    """Solve a dense LP with the bounded-variable simplex method.

    Args:
        problem: The :class:`LpProblem`.
        max_iterations: Pivot budget shared by both phases.
        feasibility_tolerance: Phase-1 infeasibility accepted as feasible,
            scaled by ``max(1, |b|_inf)``.

    Returns:
        An :class:`LpResult`. Infeasible and unbounded problems are reported
        through ``status``; they never raise. Crossed bounds count as infeasible.
    """
    if np.any(problem.lower > problem.upper):
        bad = int(np.argmax(problem.lower > problem.upper))
        return LpResult(
            status=SolverStatus.INFEASIBLE,
            message=f"Variable {bad} has lower bound above upper bound.",
        )
    simplex = _Simplex(problem, max_iterations=max_iterations)
    return simplex.run(feasibility_tolerance)


def _block(
    matrix: np.ndarray | None,
    vector: np.ndarray | None,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    if matrix is None:
        if vector is not None and np.asarray(vector).size:
            raise ValueError("Constraint vector given without its matrix.")
        return np.zeros((0, n)), np.zeros(0)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.size == 0:
        matrix = matrix.reshape(0, n)
    if vector is None:
        vector = np.zeros(matrix.shape[0])
    vector = np.asarray(vector, dtype=float).ravel()
    if matrix.shape[1] != n or vector.shape[0] != matrix.shape[0]:
        raise ValueError(
            f"Constraint block has shape {matrix.shape} with {vector.shape[0]} right-hand sides; "
            f"expected {n} columns.",
        )
    return matrix, vector


class _BasisFactor:
    """Factor of a basis whose slack/artificial columns are signed unit vectors.

    Only the block of structural basic columns on the rows not covered by a
    unit column is factorized, so the cost follows the number of structural
    variables rather than the number of rows.
    """

    def __init__(self, simplex: _Simplex):
        basis = np.asarray(simplex.basis, dtype=int)
        structural = basis < simplex.n
        self.m = simplex.m
        self.positions_s = np.flatnonzero(structural)
        self.positions_u = np.flatnonzero(~structural)
        self.cols_s = basis[self.positions_s]
        self.rows_u = simplex.unit_row[basis[self.positions_u]]
        self.signs_u = simplex.unit_sign[basis[self.positions_u]]

        covered = np.zeros(self.m, dtype=bool)
        covered[self.rows_u] = True
        if int(covered.sum()) != self.rows_u.size:
            raise SingularMatrixError("Basis holds two unit columns on the same row.")
        self.rows_s = np.flatnonzero(~covered)
        self.core = lu_factor(simplex.a[np.ix_(self.rows_s, self.cols_s)])
        self.a_us = simplex.a[np.ix_(self.rows_u, self.cols_s)]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        core = self.core.solve(rhs[self.rows_s]) if self.cols_s.size else np.zeros(0)
        out[self.positions_s] = core
        out[self.positions_u] = self.signs_u * (rhs[self.rows_u] - self.a_us @ core)
        return out

    def solve_transpose(self, cost_b: np.ndarray) -> np.ndarray:
        duals = np.zeros(self.m)
        duals[self.rows_u] = self.signs_u * cost_b[self.positions_u]
        if self.cols_s.size:
            rhs = cost_b[self.positions_s] - self.a_us.T @ duals[self.rows_u]
            duals[self.rows_s] = self.core.solve(rhs, transpose=True)
        return duals


class _Simplex:
    def __init__(self, problem: LpProblem, *, max_iterations: int):
        self.problem = problem
        self.max_iterations = max_iterations
        self.iterations = 0

        n = problem.n_vars
        m_ub = problem.a_ub.shape[0]
        self.n = n
        self.m_eq = problem.a_eq.shape[0]
        self.m = self.m_eq + m_ub
        self.a = np.vstack([problem.a_eq, problem.a_ub])
        self.b = np.concatenate([problem.b_eq, problem.b_ub])
        self.sign = -1.0 if problem.maximize else 1.0

        self.unit_row = np.concatenate([np.full(n, -1), self.m_eq + np.arange(m_ub)]).astype(int)
        self.unit_sign = np.concatenate([np.zeros(n), np.ones(m_ub)])
        self.cost = np.concatenate([self.sign * problem.c, np.zeros(m_ub)])
        self.lower = np.concatenate([problem.lower, np.zeros(m_ub)])
        self.upper = np.concatenate([problem.upper, np.full(m_ub, np.inf)])

        self.state = np.empty(n + m_ub, dtype=int)
        self.x = np.zeros(n + m_ub)
        for j in range(n + m_ub):
            self._rest_at_bound(j)
        self.basis: list[int] = []
        self.artificial_start = n + m_ub

    def _rest_at_bound(self, j: int) -> None:
        if np.isfinite(self.lower[j]):
            self.state[j], self.x[j] = _AT_LOWER, self.lower[j]
        elif np.isfinite(self.upper[j]):
            self.state[j], self.x[j] = _AT_UPPER, self.upper[j]
        else:
            self.state[j], self.x[j] = _FREE_ZERO, 0.0

    @property
    def n_columns(self) -> int:
        return int(self.x.shape[0])

    def run(self, feasibility_tolerance: float) -> LpResult:
        self._install_start_basis()
        phase_one_cost = np.zeros(self.n_columns)
        phase_one_cost[self.artificial_start :] = 1.0

        status = self._iterate(phase_one_cost)
        if status is SolverStatus.ITERATION_LIMIT:
            return LpResult(status=status, iterations=self.iterations, message="phase 1")
        infeasibility = float(self.x[self.artificial_start :].sum())
        scale = max(1.0, float(np.max(np.abs(self.b), initial=0.0)))
        if infeasibility > feasibility_tolerance * scale:
            logger.debug("LP infeasible: phase-1 residual %.3e", infeasibility)
            return LpResult(
                status=SolverStatus.INFEASIBLE,
                iterations=self.iterations,
                infeasibility=infeasibility,
            )

        self.upper[self.artificial_start :] = 0.0
        for j in range(self.artificial_start, self.n_columns):
            if self.state[j] != _BASIC:
                self.state[j], self.x[j] = _AT_LOWER, 0.0

        phase_two_cost = np.concatenate(
            [self.cost, np.zeros(self.n_columns - self.artificial_start)],
        )
        status = self._iterate(phase_two_cost)
        if status is not SolverStatus.OPTIMAL:
            return LpResult(status=status, iterations=self.iterations)
        return self._result(phase_two_cost, infeasibility)

    def _install_start_basis(self) -> None:
        residual = self.b - self.a @ self.x[: self.n]
        rows, signs = [], []
        for row in range(self.m):
            if row >= self.m_eq and residual[row] >= 0.0:
                slack = self.n + row - self.m_eq
                self.basis.append(slack)
                self.state[slack] = _BASIC
                continue
            rows.append(row)
            signs.append(1.0 if residual[row] >= 0.0 else -1.0)
            self.basis.append(self.artificial_start + len(rows) - 1)

        n_art = len(rows)
        self.unit_row = np.concatenate([self.unit_row, np.array(rows, dtype=int)])
        self.unit_sign = np.concatenate([self.unit_sign, np.array(signs)])
        self.lower = np.concatenate([self.lower, np.zeros(n_art)])
        self.upper = np.concatenate([self.upper, np.full(n_art, np.inf)])
        self.state = np.concatenate([self.state, np.full(n_art, _BASIC)])
        self.x = np.concatenate([self.x, np.zeros(n_art)])

    def _refresh_basic_values(self, factor: _BasisFactor) -> None:
        if not self.m:
            return
        nonbasic = np.flatnonzero(self.state != _BASIC)
        structural = nonbasic[nonbasic < self.n]
        units = nonbasic[nonbasic >= self.n]
        rhs = self.b - self.a[:, structural] @ self.x[structural]
        np.add.at(rhs, self.unit_row[units], -self.unit_sign[units] * self.x[units])
        self.x[self.basis] = factor.solve(rhs)

    def _column(self, j: int) -> np.ndarray:
        if j < self.n:
            return self.a[:, j]
        column = np.zeros(self.m)
        column[self.unit_row[j]] = self.unit_sign[j]
        return column

    def _reduced_costs(self, cost: np.ndarray, duals: np.ndarray) -> np.ndarray:
        reduced = cost.copy()
        reduced[: self.n] -= self.a.T @ duals
        reduced[self.n :] -= self.unit_sign[self.n :] * duals[self.unit_row[self.n :]]
        reduced[self.basis] = 0.0
        return reduced

    def _iterate(self, cost: np.ndarray) -> SolverStatus:
        degenerate_run = 0
        while True:
            if self.iterations >= self.max_iterations:
                return SolverStatus.ITERATION_LIMIT
            factor = _BasisFactor(self)
            self._refresh_basic_values(factor)
            duals = factor.solve_transpose(cost[self.basis]) if self.m else np.zeros(0)
            reduced = self._reduced_costs(cost, duals)

            bland = degenerate_run >= DEGENERATE_STREAK
            entering = self._choose_entering(reduced, bland=bland)
            if entering is None:
                return SolverStatus.OPTIMAL
            self.iterations += 1

            direction = 1.0 if reduced[entering] < 0.0 else -1.0
            column = factor.solve(self._column(entering)) if self.m else np.zeros(0)
            step, leaving_pos, leaving_state = self._ratio_test(
                entering,
                direction,
                column,
                bland=bland,
            )
            if not np.isfinite(step):
                return SolverStatus.UNBOUNDED

            degenerate_run = degenerate_run + 1 if step <= 1e-12 else 0
            if leaving_pos is None:
                self.state[entering] = _AT_UPPER if direction > 0.0 else _AT_LOWER
                self.x[entering] = self.upper[entering] if direction > 0.0 else self.lower[entering]
                continue

            leaving = self.basis[leaving_pos]
            self.basis[leaving_pos] = entering
            self.state[entering] = _BASIC
            self.x[entering] += direction * step
            self.state[leaving] = leaving_state
            bound = self.lower if leaving_state == _AT_LOWER else self.upper
            self.x[leaving] = bound[leaving]

    def _choose_entering(self, reduced: np.ndarray, *, bland: bool) -> int | None:
        movable = self.upper > self.lower
        can_increase = movable & np.isin(self.state, (_AT_LOWER, _FREE_ZERO))
        can_decrease = movable & np.isin(self.state, (_AT_UPPER, _FREE_ZERO))
        score = np.zeros_like(reduced)
        improve_up = can_increase & (reduced < -OPTIMALITY_TOLERANCE)
        improve_down = can_decrease & (reduced > OPTIMALITY_TOLERANCE)
        score[improve_up] = -reduced[improve_up]
        score[improve_down] = reduced[improve_down]
        eligible = np.flatnonzero(score > 0.0)
        if eligible.size == 0:
            return None
        if bland:
            return int(eligible[0])
        return int(np.argmax(score))

    def _ratio_test(
        self,
        entering: int,
        direction: float,
        column: np.ndarray,
        *,
        bland: bool,
    ) -> tuple[float, int | None, int]:
        step = np.inf
        if np.isfinite(self.lower[entering]) and np.isfinite(self.upper[entering]):
            step = self.upper[entering] - self.lower[entering]

        basis = np.asarray(self.basis, dtype=int)
        rate = -direction * column
        values = self.x[basis]
        lower = self.lower[basis]
        upper = self.upper[basis]
        ratios = np.full(len(basis), np.inf)
        hit_state = np.zeros(len(basis), dtype=int)

        falling = (rate < -PIVOT_TOLERANCE) & np.isfinite(lower)
        ratios[falling] = (values[falling] - lower[falling]) / -rate[falling]
        hit_state[falling] = _AT_LOWER
        rising = (rate > PIVOT_TOLERANCE) & np.isfinite(upper)
        ratios[rising] = (upper[rising] - values[rising]) / rate[rising]
        hit_state[rising] = _AT_UPPER
        ratios = np.maximum(ratios, 0.0)

        best = float(np.min(ratios, initial=np.inf))
        if best >= step:
            return step, None, _AT_LOWER
        candidates = np.flatnonzero(ratios <= best + 1e-12)
        if bland:
            position = int(candidates[np.argmin(basis[candidates])])
        else:
            position = int(candidates[np.argmax(np.abs(rate[candidates]))])
        return float(ratios[position]), position, int(hit_state[position])

    def _result(self, cost: np.ndarray, infeasibility: float) -> LpResult:
        factor = _BasisFactor(self)
        self._refresh_basic_values(factor)
        duals = factor.solve_transpose(cost[self.basis]) if self.m else np.zeros(0)
        reduced = self._reduced_costs(cost, duals)

        primal = float(cost @ self.x)
        nonbasic = self.state != _BASIC
        dual = float(self.b @ duals + reduced[nonbasic] @ self.x[nonbasic])
        x = self.x[: self.n].copy()
        logger.debug(
            "LP optimal after %d iterations, objective %.10g, gap %.2e",
            self.iterations,
            self.sign * primal,
            abs(primal - dual),
        )
        return LpResult(
            status=SolverStatus.OPTIMAL,
            x=x,
            objective=float(self.problem.c @ x),
            duals_eq=self.sign * duals[: self.m_eq],
            duals_ub=self.sign * duals[self.m_eq :],
            reduced_costs=self.sign * reduced[: self.n],
            duality_gap=abs(primal - dual),
            iterations=self.iterations,
            infeasibility=infeasibility,
        )
