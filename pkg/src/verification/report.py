"""Verification report types and the loss-error series."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from ..utils.helpers import canonicalize_for_dump


class ViolationKind(str, Enum):
    SOC_BELOW_ZERO = "soc_below_zero"
    SOC_ABOVE_ONE = "soc_above_one"
    FINAL_SOC_MISS = "final_soc_miss"
    VOLTAGE = "voltage"
    FLOW = "flow"


_KIND_ORDER = {kind: position for position, kind in enumerate(ViolationKind)}


@dataclass(frozen=True)
class Violation:
    step: int
    kind: ViolationKind
    magnitude: float

    def sort_key(self) -> tuple[int, int]:
        return self.step, _KIND_ORDER[self.kind]

    def to_payload(self) -> dict[str, Any]:
        return {"step": self.step, "kind": self.kind.value, "magnitude": self.magnitude}


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of replaying a schedule against the AC power flow.

    Per-step arrays have one entry per step ``1..T``. State-of-charge values
    are fractions of capacity after the step; ``soc_init`` is the value
    before the first step. ``storage_power`` is the fleet charging power the
    AC replay needed to hold the scheduled PCC exchange. A step counts as a
    negative-loss step when its modeled network loss total is negative;
    ``negative_branch_steps`` also lists steps where only single branches are.
    """

    model_kind: str
    dt: float
    p_pcc: np.ndarray
    storage_power: np.ndarray
    realized_losses: np.ndarray
    model_losses: np.ndarray
    soc_agg: np.ndarray
    soc_units: np.ndarray
    soc_init: float
    soc_target: float
    violations: tuple[Violation, ...] = ()
    objective: float = float("nan")
    lossless: bool = False
    negative_loss_steps: tuple[int, ...] = ()
    negative_branch_steps: tuple[int, ...] = ()
    max_voltage_excursion: float = 0.0
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def horizon(self) -> int:
        return int(self.p_pcc.shape[0])

    @property
    def hours(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    @property
    def loss_error(self) -> np.ndarray:
        return self.realized_losses - self.model_losses

    @property
    def cumulative_loss_error(self) -> np.ndarray:
        """Running sum of the loss error in p.u.·h."""
        return np.cumsum(self.loss_error * self.dt)

    @property
    def final_soc(self) -> float:
        return float(self.soc_agg[-1]) if self.soc_agg.size else self.soc_init

    @property
    def final_soc_miss(self) -> float:
        """Final aggregate SOC minus its target, in percentage points."""
        return 100.0 * (self.final_soc - self.soc_target)

    @property
    def has_negative_losses(self) -> bool | None:
        """``None`` for lossless models, where the question does not apply."""
        if self.lossless:
            return None
        return bool(self.negative_loss_steps)

    def violations_of(self, kind: ViolationKind) -> list[Violation]:
        return [violation for violation in self.violations if violation.kind is kind]

    def to_payload(self) -> dict[str, Any]:
        return canonicalize_for_dump(
            {
                "model": self.model_kind,
                "horizon": self.horizon,
                "dt": self.dt,
                "objective": self.objective,
                "soc_init": self.soc_init,
                "soc_target": self.soc_target,
                "final_soc": self.final_soc,
                "final_soc_miss_pp": self.final_soc_miss,
                "cumulative_loss_error": (
                    float(self.cumulative_loss_error[-1]) if self.horizon else 0.0
                ),
                "negative_loss_steps": list(self.negative_loss_steps),
                "negative_branch_steps": list(self.negative_branch_steps),
                "violations": [violation.to_payload() for violation in self.violations],
            },
        )


def loss_error_series(report: VerificationReport) -> tuple[np.ndarray, np.ndarray]:
    """Per-step loss error (realized minus modeled) and its running sum in p.u.·h."""
    return report.loss_error, report.cumulative_loss_error
