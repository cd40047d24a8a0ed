"""Quadratic day-ahead dispatch over an envelope or over stacked step models."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..aggregation.envelope import CouplingSpace, FlexibilityEnvelope
from ..models.linear_model import LinearModel
from ..solvers.qp import QpProblem, solve_qp
from ..solvers.reduction import Condensation
from .losses import attach_model_losses
from .problem import ScheduleProblem, ScheduleResult, build_result

logger = logging.getLogger(__name__)


def schedule_over_envelope(
    prob: ScheduleProblem,
    env: FlexibilityEnvelope,
    models: Sequence[LinearModel] | None = None,
) -> ScheduleResult:
    """Minimize the schedule cost over the envelope's halfspaces.

    Args:
        prob: Scheduling problem whose horizon matches the envelope.
        env: Envelope over ``CouplingSpace.horizon(T, dt)``.
        models: The step models the envelope was projected from. When given,
            the result's model losses are theirs at the proportional split of
            the scheduled fleet power.

    Returns:
        The optimal :class:`ScheduleResult`, or one whose ``status`` reports
        an infeasible envelope.

    Raises:
        ValueError: If the envelope is not over the problem's horizon.
    """
    steps = prob.horizon
    if env.space.labels != CouplingSpace.horizon(steps, prob.dt).labels:
        raise ValueError(f"Envelope labels do not match a {steps}-step horizon.")
    label = env.model_kind or "envelope"

    hessian = np.zeros((2 * steps, 2 * steps))
    hessian[:steps, :steps] = 2.0 * prob.alpha * np.eye(steps)
    energy_hessian, energy_gradient, constant = prob.energy_cost()
    hessian[steps:, steps:] = energy_hessian
    gradient = np.concatenate([np.full(steps, prob.beta), energy_gradient])

    result = solve_qp(
        QpProblem(
            h=hessian,
            f=gradient,
            a_ub=env.normals,
            b_ub=env.offsets,
            constant=constant,
        ),
    )
    if not result.ok or result.x is None:
        logger.warning("Envelope schedule (%s) failed: %s", label, result.status.value)
        return ScheduleResult(status=result.status, model_kind=label, dt=prob.dt)
    logger.info("Envelope schedule (%s) objective %.6g", label, result.objective)
    schedule = build_result(
        prob,
        label,
        result.x[:steps],
        result.x[steps:],
        iterations=result.iterations,
        kkt_residual=result.kkt_residual,
    )
    if models is None:
        return schedule
    if len(models) != steps:
        raise ValueError(f"Expected {steps} step models, got {len(models)}.")
    return attach_model_losses(schedule, models)


@dataclass(frozen=True)
class _StepBlock:
    """One step's model as an affine map of its decision variables ``w``.

    The model's free columns are ``basis @ w``.
    """

    model: LinearModel
    condensation: Condensation
    basis: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    p_coef: np.ndarray
    p_const: float
    e_coef: np.ndarray
    e_const: float

    @property
    def size(self) -> int:
        return int(self.basis.shape[1])

    def point(self, w: np.ndarray) -> np.ndarray:
        return self.condensation.expand(self.basis @ w)

    @classmethod
    def build(
        cls,
        model: LinearModel,
        shares: np.ndarray,
        *,
        proportional_split: bool,
    ) -> _StepBlock:
        condensation = model.condense()
        free = condensation.free
        if proportional_split:
            storage = model.storage_columns.tolist()
            if sorted(free.tolist()) != sorted(storage):
                raise ValueError("Proportional split needs exactly the storage powers free.")
            if len(storage) != shares.size:
                raise ValueError("Model storage columns do not match the storage fleet.")
            basis = np.array([[shares[storage.index(j)]] for j in free]).reshape(free.size, 1)
            total = float(np.sum(model.upper[model.storage_columns])) if storage else 0.0
            lower, upper = np.array([-total]), np.array([total])
        else:
            basis = np.eye(condensation.n_free)
            lower, upper = condensation.free_lower, condensation.free_upper
        p_row, p_const = condensation.affine(model.column("p_pcc"))
        e_row, e_const = condensation.affine(model.column("delta_e"))
        return cls(
            model=model,
            condensation=condensation,
            basis=basis,
            lower=lower,
            upper=upper,
            a_ub=condensation.a_ub @ basis,
            b_ub=condensation.b_ub,
            p_coef=p_row @ basis,
            p_const=p_const,
            e_coef=e_row @ basis,
            e_const=e_const,
        )


def schedule_full_linear(
    prob: ScheduleProblem,
    models: Sequence[LinearModel],
    *,
    proportional_split: bool = False,
) -> ScheduleResult:
    """Minimize the schedule cost over the stacked per-step linear models.

    Every step model is condensed onto its storage powers, so the QP carries
    those powers plus the aggregate energy ``E[1..T]`` linked by
    ``E[t] - E[t-1] = delta_e[t]``.

    Args:
        prob: Scheduling problem.
        models: One model per step, in step order.
        proportional_split: Restrict unit powers to ``shares * S[t]`` with one
            aggregate power ``S[t]`` per step.

    Returns:
        The optimal :class:`ScheduleResult` (with per-unit storage powers), or
        one whose ``status`` reports infeasibility.

    Raises:
        ValueError: If the model count differs from the horizon.
        InfeasibleModelError: If a step model has inconsistent equalities.
    """
    steps = prob.horizon
    if len(models) != steps:
        raise ValueError(f"Expected {steps} step models, got {len(models)}.")
    first = models[0]
    label = first.kind.label if first.kind else "custom"
    blocks = [
        _StepBlock.build(model, prob.shares, proportional_split=proportional_split)
        for model in models
    ]
    starts = np.cumsum([0] + [block.size for block in blocks])
    energy = int(starts[-1])
    n_vars = energy + steps

    hessian = np.zeros((n_vars, n_vars))
    gradient = np.zeros(n_vars)
    energy_hessian, energy_gradient, constant = prob.energy_cost()
    hessian[energy:, energy:] = energy_hessian
    gradient[energy:] = energy_gradient

    a_eq = np.zeros((steps, n_vars))
    b_eq = np.zeros(steps)
    ub_rows: list[np.ndarray] = []
    ub_rhs: list[np.ndarray] = []
    lower = np.zeros(n_vars)
    upper = np.zeros(n_vars)
    for t, block in enumerate(blocks):
        cols = slice(int(starts[t]), int(starts[t + 1]))
        hessian[cols, cols] += 2.0 * prob.alpha * np.outer(block.p_coef, block.p_coef)
        gradient[cols] += (2.0 * prob.alpha * block.p_const + prob.beta) * block.p_coef
        constant += prob.alpha * block.p_const**2 + prob.beta * block.p_const

        a_eq[t, energy + t] = 1.0
        if t:
            a_eq[t, energy + t - 1] = -1.0
        a_eq[t, cols] = -block.e_coef
        b_eq[t] = block.e_const + (prob.e_init if t == 0 else 0.0)

        rows = np.zeros((block.a_ub.shape[0], n_vars))
        rows[:, cols] = block.a_ub
        ub_rows.append(rows)
        ub_rhs.append(block.b_ub)
        lower[cols] = block.lower
        upper[cols] = block.upper

    lower[energy:] = 0.0
    upper[energy:] = prob.e_cap
    lower[-1] = upper[-1] = prob.e_final

    result = solve_qp(
        QpProblem(
            h=hessian,
            f=gradient,
            a_eq=a_eq,
            b_eq=b_eq,
            a_ub=np.vstack(ub_rows).reshape(-1, n_vars),
            b_ub=np.concatenate(ub_rhs),
            lower=lower,
            upper=upper,
            constant=constant,
        ),
    )
    if not result.ok or result.x is None:
        logger.warning("Full-linear schedule (%s) failed: %s", label, result.status.value)
        return ScheduleResult(status=result.status, model_kind=label, dt=prob.dt)

    points = [block.point(result.x[starts[t] : starts[t + 1]]) for t, block in enumerate(blocks)]
    p_pcc = np.array([point[model.column("p_pcc")] for point, model in zip(points, models)])
    storage_power = np.array([point[model.storage_columns] for point, model in zip(points, models)])
    logger.info("Full-linear schedule (%s) objective %.6g", label, result.objective)
    schedule = build_result(
        prob,
        label,
        p_pcc,
        result.x[energy:],
        storage_power=storage_power,
        iterations=result.iterations,
        kkt_residual=result.kkt_residual,
    )
    return attach_model_losses(schedule, models)
