"""Network losses a schedule's own step models imply at its storage dispatch."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..models.linear_model import NEGATIVE_LOSS_TOLERANCE, LinearModel, LossReport
from .problem import ScheduleResult

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepLosses:
    """Per-step loss reports of the step models at a dispatch."""

    reports: tuple[LossReport, ...]
    tolerance: float = NEGATIVE_LOSS_TOLERANCE

    @property
    def total(self) -> np.ndarray:
        return np.array([report.total_p for report in self.reports], dtype=float)

    @property
    def negative_steps(self) -> tuple[int, ...]:
        """1-based steps whose modeled network loss is negative."""
        return tuple(int(t) + 1 for t in np.flatnonzero(self.total < -self.tolerance))

    @property
    def negative_branch_steps(self) -> tuple[int, ...]:
        """1-based steps with at least one negative branch loss."""
        return tuple(t + 1 for t, report in enumerate(self.reports) if report.any_negative)


def evaluate_step_losses(
    models: Sequence[LinearModel],
    storage_power: np.ndarray,
    *,
    tolerance: float = NEGATIVE_LOSS_TOLERANCE,
) -> StepLosses:
    """Complete every step model at its unit powers and read its loss expressions.

    Args:
        models: One model per step, in step order.
        storage_power: Charging power per step and storage unit, shape ``(T, K)``.
        tolerance: A loss below ``-tolerance`` counts as negative.

    Returns:
        The :class:`StepLosses`.

    Raises:
        ValueError: If the shapes disagree with the models' storage columns.
        InfeasibleModelError: If a dispatch contradicts a step model.
    """
    storage_power = np.asarray(storage_power, dtype=float)
    if storage_power.ndim != 2 or storage_power.shape[0] != len(models):
        raise ValueError(
            f"Expected storage powers for {len(models)} steps, got shape {storage_power.shape}.",
        )
    reports = []
    for model, powers in zip(models, storage_power):
        columns = model.storage_columns
        if columns.size != powers.size:
            raise ValueError(
                f"Model has {columns.size} storage columns but {powers.size} powers were given.",
            )
        point = model.complete(
            {model.labels[column]: float(power) for column, power in zip(columns, powers)}
        )
        reports.append(model.losses(point))
    return StepLosses(reports=tuple(reports), tolerance=tolerance)


def attach_model_losses(
    result: ScheduleResult,
    models: Sequence[LinearModel],
    *,
    tolerance: float = NEGATIVE_LOSS_TOLERANCE,
) -> ScheduleResult:
    """Return ``result`` with its model losses taken from ``models``.

    The loss of step ``t`` is the modeled branch-loss total of ``models[t]``
    at the result's unit powers, the dispatch the AC replay starts from.
    Failed results are returned unchanged.
    """
    if not result.ok or result.storage_power is None:
        return result
    losses = evaluate_step_losses(models, result.storage_power, tolerance=tolerance)
    if losses.negative_steps:
        logger.warning(
            "Schedule (%s) models negative network losses at steps %s",
            result.model_kind,
            ", ".join(map(str, losses.negative_steps)),
        )
    return replace(
        result,
        model_losses=losses.total,
        negative_loss_steps=losses.negative_steps,
        negative_branch_steps=losses.negative_branch_steps,
    )
