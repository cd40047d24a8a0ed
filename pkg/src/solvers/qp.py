"""Primal active-set method for small dense convex QPs.

Problem form::

    minimize    0.5 * x @ h @ x + f @ x + constant
    subject to  a_eq @ x == b_eq,  a_ub @ x <= b_ub,  lower <= x <= upper

The start point comes from an LP feasibility solve. Each iteration solves the
equality-constrained KKT system of the working set with a tiny proximal term
``prox * |p|^2`` so variables without curvature never make it singular; the
term vanishes at a stationary point, so the fixed points are exactly the KKT
points of the original problem.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .linalg import independent_rows, lu_factor
from .lp import LpProblem, SolverStatus, solve_lp

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 5_000
PROX = 1e-8
MULTIPLIER_TOLERANCE = 1e-10
STEP_TOLERANCE = 1e-11
UNBOUNDED_STEP = 1e8
RATIO_TIE = 1e-12


@dataclass(frozen=True)
class QpProblem:
    h: np.ndarray
    f: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    constant: float = 0.0

    def __post_init__(self) -> None:
        f = np.asarray(self.f, dtype=float).ravel()
        n = f.shape[0]
        h = np.asarray(self.h, dtype=float)
        if h.shape != (n, n):
            raise ValueError(f"Cost matrix must have shape ({n}, {n}), got {h.shape}.")
        if not np.allclose(h, h.T, rtol=0.0, atol=1e-12):
            raise ValueError("Cost matrix must be symmetric.")
        if n:
            eigenvalues = np.linalg.eigvalsh(h)
            if eigenvalues[0] < -1e-10 * max(1.0, float(np.abs(eigenvalues).max())):
                raise ValueError("Cost matrix must be positive semidefinite.")
        feasible_set = LpProblem(
            c=np.zeros(n),
            a_eq=self.a_eq,
            b_eq=self.b_eq,
            a_ub=self.a_ub,
            b_ub=self.b_ub,
            lower=self.lower,
            upper=self.upper,
        )
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "f", f)
        for name in ("a_eq", "b_eq", "a_ub", "b_ub", "lower", "upper"):
            object.__setattr__(self, name, getattr(feasible_set, name))

    @property
    def n_vars(self) -> int:
        return int(self.f.shape[0])

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.h @ x + self.f @ x + self.constant)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.h @ x + self.f


@dataclass(frozen=True)
class QpResult:
    """Solution and multipliers.

    Multipliers follow ``grad + a_eq.T @ duals_eq + a_ub.T @ duals_ub
    + duals_upper - duals_lower = 0`` with every inequality multiplier >= 0.
    """

    status: SolverStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals_eq: np.ndarray | None = None
    duals_ub: np.ndarray | None = None
    duals_lower: np.ndarray | None = None
    duals_upper: np.ndarray | None = None
    iterations: int = 0
    kkt_residual: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


def solve_qp(
    problem: QpProblem,
    *,
    max_iterations: int = MAX_ITERATIONS,
    prox: float = PROX,
) -> QpResult:
    """Solve a convex QP by the primal active-set method.

    Args:
        problem: The :class:`QpProblem`.
        max_iterations: Working-set changes allowed before giving up.
        prox: Proximal weight added to the step subproblem.

    Returns:
        A :class:`QpResult`; infeasible problems are reported through ``status``.
    """
    start = solve_lp(
        LpProblem(
            c=np.zeros(problem.n_vars),
            a_eq=problem.a_eq,
            b_eq=problem.b_eq,
            a_ub=problem.a_ub,
            b_ub=problem.b_ub,
            lower=problem.lower,
            upper=problem.upper,
        ),
    )
    if not start.ok or start.x is None:
        logger.debug("QP start point not found: %s", start.status.value)
        return QpResult(status=start.status)
    return _ActiveSet(problem, prox=prox).run(start.x, max_iterations)


class _ActiveSet:
    def __init__(self, problem: QpProblem, *, prox: float):
        self.problem = problem
        self.prox = prox
        n = problem.n_vars
        lower, upper = problem.lower, problem.upper
        fixed = np.flatnonzero(np.isfinite(lower) & (lower == upper))
        upper_rows = np.flatnonzero(np.isfinite(upper) & ~np.isin(np.arange(n), fixed))
        lower_rows = np.flatnonzero(np.isfinite(lower) & ~np.isin(np.arange(n), fixed))
        eye = np.eye(n)

        self.fixed = fixed
        self.upper_rows = upper_rows
        self.lower_rows = lower_rows
        equality = np.vstack([problem.a_eq, eye[fixed]])
        equality_rhs = np.concatenate([problem.b_eq, lower[fixed]])
        self.eq_keep = independent_rows(equality)
        self.e = equality[self.eq_keep]
        self.e_rhs = equality_rhs[self.eq_keep]
        self.n_eq_rows = equality.shape[0]

        self.g = np.vstack([problem.a_ub, eye[upper_rows], -eye[lower_rows]])
        self.g_rhs = np.concatenate([problem.b_ub, upper[upper_rows], -lower[lower_rows]])

    def run(self, x: np.ndarray, max_iterations: int) -> QpResult:
        """Iterate from the feasible point ``x``.

        After a zero-length step the working set is changed by Bland's rule:
        the lowest-index constraint with a negative multiplier is dropped and
        the lowest-index blocking constraint is added. A constraint just
        dropped never blocks the step that follows.
        """
        problem = self.problem
        working: list[int] = []
        released: int | None = None
        degenerate = False
        iterations = 0
        while iterations < max_iterations:
            iterations += 1
            gradient = problem.gradient(x)
            step, eq_mult, ineq_mult = self._step(gradient, working)
            scale = max(1.0, float(np.max(np.abs(x), initial=0.0)))

            if float(np.max(np.abs(step), initial=0.0)) <= STEP_TOLERANCE * scale:
                if not working or float(ineq_mult.min()) >= -MULTIPLIER_TOLERANCE:
                    return self._result(x, eq_mult, ineq_mult, working, iterations)
                if degenerate:
                    position = int(np.flatnonzero(ineq_mult < -MULTIPLIER_TOLERANCE)[0])
                else:
                    position = int(np.argmin(ineq_mult))
                released = working.pop(position)
                logger.debug("QP drops constraint %d", released)
                continue

            alpha, blocking = self._ratio_test(x, step, working, released)
            released = None
            if blocking is None and alpha * float(np.max(np.abs(step))) > UNBOUNDED_STEP * scale:
                return QpResult(status=SolverStatus.UNBOUNDED, iterations=iterations)
            x = x + alpha * step
            degenerate = blocking is not None and alpha * float(np.max(np.abs(step))) <= (
                STEP_TOLERANCE * scale
            )
            if blocking is not None:
                working.append(blocking)
                working.sort()

        logger.warning("QP stopped after %d iterations without convergence", iterations)
        return QpResult(status=SolverStatus.ITERATION_LIMIT, x=x, iterations=iterations)

    def _step(
        self,
        gradient: np.ndarray,
        working: list[int],
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.problem.n_vars
        rows = np.vstack([self.e, self.g[working]]) if working else self.e
        k = rows.shape[0]
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = self.problem.h + self.prox * np.eye(n)
        kkt[:n, n:] = rows.T
        kkt[n:, :n] = rows
        rhs = np.concatenate([-gradient, np.zeros(k)])
        solution = lu_factor(kkt).solve(rhs)
        m_eq = self.e.shape[0]
        return solution[:n], solution[n : n + m_eq], solution[n + m_eq :]

    def _ratio_test(
        self,
        x: np.ndarray,
        step: np.ndarray,
        working: list[int],
        released: int | None = None,
    ) -> tuple[float, int | None]:
        if not self.g.shape[0]:
            return 1.0, None
        rate = self.g @ step
        slack = np.maximum(self.g_rhs - self.g @ x, 0.0)
        candidates = rate > 1e-12
        candidates[working] = False
        if released is not None:
            candidates[released] = False
        if not np.any(candidates):
            return 1.0, None
        ratios = np.full(rate.shape, np.inf)
        ratios[candidates] = slack[candidates] / rate[candidates]
        shortest = float(ratios.min())
        if shortest >= 1.0:
            return 1.0, None
        blocking = int(np.flatnonzero(ratios <= shortest + RATIO_TIE)[0])
        return shortest, blocking

    def _result(
        self,
        x: np.ndarray,
        eq_mult: np.ndarray,
        ineq_mult: np.ndarray,
        working: list[int],
        iterations: int,
    ) -> QpResult:
        problem = self.problem
        n = problem.n_vars
        m_eq = problem.a_eq.shape[0]
        m_ub = problem.a_ub.shape[0]

        eq_full = np.zeros(self.n_eq_rows)
        eq_full[self.eq_keep] = eq_mult
        ineq_full = np.zeros(self.g.shape[0])
        ineq_full[working] = np.maximum(ineq_mult, 0.0)

        duals_upper = np.zeros(n)
        duals_lower = np.zeros(n)
        duals_upper[self.upper_rows] = ineq_full[m_ub : m_ub + self.upper_rows.size]
        duals_lower[self.lower_rows] = ineq_full[m_ub + self.upper_rows.size :]
        fixed_mult = eq_full[m_eq:]
        duals_upper[self.fixed] += np.maximum(fixed_mult, 0.0)
        duals_lower[self.fixed] += np.maximum(-fixed_mult, 0.0)

        duals_eq = eq_full[:m_eq]
        duals_ub = ineq_full[:m_ub]
        stationarity = (
            problem.gradient(x)
            + problem.a_eq.T @ duals_eq
            + problem.a_ub.T @ duals_ub
            + duals_upper
            - duals_lower
        )
        kkt_residual = float(np.max(np.abs(stationarity), initial=0.0))
        logger.debug("QP optimal after %d iterations, KKT residual %.2e", iterations, kkt_residual)
        return QpResult(
            status=SolverStatus.OPTIMAL,
            x=x,
            objective=problem.objective(x),
            duals_eq=duals_eq,
            duals_ub=duals_ub,
            duals_lower=duals_lower,
            duals_upper=duals_upper,
            iterations=iterations,
            kkt_residual=kkt_residual,
        )
