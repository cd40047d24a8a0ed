"""Day-ahead scheduling problem and result types."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..network.model import Network, StorageUnit
from ..network.profiles import Profile
from ..solvers.lp import SolverStatus
from ..utils.helpers import canonicalize_for_dump

DAY_HOURS = 24.0
ENERGY_TOLERANCE = 1e-7


@dataclass(frozen=True)
class ScheduleProblem:
    """Cost ``Σ_t α P_pcc[t]² + β P_pcc[t] + γ ΔE_agg[t]²`` over a profile.

    ``γ`` (``storage_weight``) prices storage use and defaults to zero.
    """

    profile: Profile
    storage: tuple[StorageUnit, ...] = ()
    dt: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    storage_weight: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ValueError("Quadratic cost coefficient alpha must be non-negative.")
        if self.storage_weight < 0.0:
            raise ValueError("Storage weight must be non-negative.")
        if self.dt <= 0.0:
            raise ValueError("Step length must be positive.")

    @classmethod
    def for_network(
        cls,
        net: Network,
        profile: Profile,
        *,
        horizon: int | None = None,
        dt: float = 1.0,
        alpha: float = 1.0,
        beta: float = 0.0,
        storage_weight: float = 0.0,
    ) -> ScheduleProblem:
        """Schedule ``net``'s storage fleet over the first ``horizon`` profile steps."""
        return cls(
            profile=profile if horizon is None else profile.head(horizon),
            storage=net.storage,
            dt=dt,
            alpha=alpha,
            beta=beta,
            storage_weight=storage_weight,
        )

    @property
    def horizon(self) -> int:
        return self.profile.horizon

    @property
    def is_day_ahead(self) -> bool:
        return abs(self.horizon * self.dt - DAY_HOURS) < 1e-9

    @property
    def net_load(self) -> np.ndarray:
        return self.profile.net_load

    @property
    def p_max(self) -> np.ndarray:
        return np.array([unit.p_max for unit in self.storage], dtype=float)

    @property
    def shares(self) -> np.ndarray:
        total = float(self.p_max.sum())
        return self.p_max / total if total > 0.0 else np.zeros(len(self.storage))

    @property
    def e_init(self) -> float:
        return float(sum(unit.e_init for unit in self.storage))

    @property
    def e_final(self) -> float:
        return float(sum(unit.e_final for unit in self.storage))

    @property
    def e_cap(self) -> float:
        return float(sum(unit.e_cap for unit in self.storage))

    def step_costs(self, p_pcc: np.ndarray, e_agg: np.ndarray) -> np.ndarray:
        """Per-step objective contribution of a trajectory."""
        p_pcc = np.asarray(p_pcc, dtype=float)
        delta_e = np.diff(np.concatenate([[self.e_init], np.asarray(e_agg, dtype=float)]))
        return self.alpha * p_pcc**2 + self.beta * p_pcc + self.storage_weight * delta_e**2

    def objective(self, p_pcc: np.ndarray, e_agg: np.ndarray) -> float:
        return float(self.step_costs(p_pcc, e_agg).sum())

    def energy_cost(self) -> tuple[np.ndarray, np.ndarray, float]:
        """``γ Σ (E[t] - E[t-1])²`` as ``(hessian, gradient, constant)`` over ``E[1..T]``.

        The Hessian is the one of ``0.5 * E @ H @ E``.
        """
        steps = self.horizon
        difference = np.eye(steps) - np.eye(steps, k=-1)
        start = np.zeros(steps)
        start[0] = self.e_init
        gamma = self.storage_weight
        return (
            2.0 * gamma * difference.T @ difference,
            -2.0 * gamma * difference.T @ start,
            gamma * float(start @ start),
        )


@dataclass(frozen=True)
class ScheduleResult:
    """Optimal trajectory, or an empty result carrying a failure ``status``.

    ``model_losses`` holds the active network loss per step that the
    schedule's model implies. Schedules built from linear step models carry
    the models' own loss expressions evaluated at the dispatch (see
    :func:`attach_model_losses`); otherwise it is the balance gap
    ``P_pcc - (load - pv) - storage charging``, which equals the AC losses for
    AC-consistent schedules. ``negative_loss_steps`` lists the (1-based) steps
    whose modeled total loss is negative, ``negative_branch_steps`` those
    where at least one branch loss is.
    """

    status: SolverStatus
    model_kind: str
    p_pcc: np.ndarray = field(default_factory=lambda: np.zeros(0))
    e_agg: np.ndarray = field(default_factory=lambda: np.zeros(0))
    storage_power: np.ndarray | None = None
    objective: float = float("nan")
    step_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    model_losses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dt: float = 1.0
    iterations: int = 0
    kkt_residual: float = float("nan")
    negative_loss_steps: tuple[int, ...] = ()
    negative_branch_steps: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status is SolverStatus.OPTIMAL

    @property
    def horizon(self) -> int:
        return int(self.p_pcc.shape[0])

    @property
    def hours(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    def delta_e(self, e_init: float) -> np.ndarray:
        return np.diff(np.concatenate([[e_init], self.e_agg]))

    def aggregate_storage_power(self, e_init: float) -> np.ndarray:
        """Fleet charging power per step implied by the energy trajectory."""
        return self.delta_e(e_init) / self.dt

    def to_payload(self) -> dict[str, Any]:
        return canonicalize_for_dump(
            {
                "model": self.model_kind,
                "status": self.status.value,
                "objective": self.objective,
                "horizon": self.horizon,
                "dt": self.dt,
                "iterations": self.iterations,
                "kkt_residual": self.kkt_residual,
                "negative_loss_steps": list(self.negative_loss_steps),
                "negative_branch_steps": list(self.negative_branch_steps),
                "p_pcc": self.p_pcc.tolist(),
                "e_agg": self.e_agg.tolist(),
            },
        )


def build_result(
    prob: ScheduleProblem,
    model_kind: str,
    p_pcc: np.ndarray,
    e_agg: np.ndarray,
    *,
    storage_power: np.ndarray | None = None,
    iterations: int = 0,
    kkt_residual: float = float("nan"),
) -> ScheduleResult:
    """Assemble an optimal :class:`ScheduleResult` with its derived series."""
    p_pcc = np.asarray(p_pcc, dtype=float)
    e_agg = np.asarray(e_agg, dtype=float)
    costs = prob.step_costs(p_pcc, e_agg)
    charging = np.diff(np.concatenate([[prob.e_init], e_agg])) / prob.dt
    if storage_power is None:
        storage_power = np.outer(charging, prob.shares)
    return ScheduleResult(
        status=SolverStatus.OPTIMAL,
        model_kind=model_kind,
        p_pcc=p_pcc,
        e_agg=e_agg,
        storage_power=storage_power,
        objective=float(costs.sum()),
        step_costs=costs,
        model_losses=p_pcc - prob.net_load - charging,
        dt=prob.dt,
        iterations=iterations,
        kkt_residual=kkt_residual,
    )
