"""Replay a schedule against the AC power flow with the PCC exchange held fixed.

With ``P_pcc[t]`` fixed, the storage fleet becomes the balancing actuator:
a bracketed scalar root find on the aggregate storage power (split over the
units in proportion to ``p_max``) matches the AC-realized PCC exchange to the
schedule. The resulting energy is integrated forward, so every loss the
schedule's model missed shows up as state-of-charge drift.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from ..models.linear_model import ModelKind
from ..network.model import Network
from ..network.profiles import Profile, StepInjections, apply_storage, profile_injections
from ..powerflow.ac import pcc_exchange, solve_ac, total_losses
from ..powerflow.state import PowerFlowState
from ..scheduling.problem import ScheduleResult
from ..utils.errors import BracketError, ConvergenceError
from .report import VerificationReport, Violation, ViolationKind

logger = logging.getLogger(__name__)

PCC_TOLERANCE = 1e-8
ROOT_XTOL = 1e-12
MAX_BRACKET_EXPANSIONS = 40
MIN_BRACKET_STEP = 1e-6
FINAL_SOC_TOLERANCE = 1e-3
LIMIT_TOLERANCE = 1e-9


def verify_schedule(
    net: Network,
    schedule: ScheduleResult,
    profile: Profile,
    *,
    pcc_tolerance: float = PCC_TOLERANCE,
    final_soc_tolerance: float = FINAL_SOC_TOLERANCE,
) -> VerificationReport:
    """Hold each step's scheduled PCC exchange and replay it through the AC power flow.

    Args:
        net: Network the schedule was made for.
        schedule: A successful schedule (``p_pcc``, ``model_losses`` and,
            when available, ``storage_power`` per step).
        profile: Profile covering at least the schedule's horizon.
        pcc_tolerance: Accepted PCC mismatch of the balancing root find.
        final_soc_tolerance: Final SOC deviation (fraction) tolerated before a
            ``final_soc_miss`` violation is recorded.

    Returns:
        The :class:`VerificationReport`.

    Raises:
        ValueError: If the schedule failed or the profile is too short.
        ConvergenceError: If the AC power flow fails at a step (``step`` set).
        BracketError: If no storage power reproduces the scheduled exchange.
    """
    if not schedule.ok:
        raise ValueError(f"Cannot verify a schedule with status '{schedule.status.value}'.")
    steps = schedule.horizon
    fixed = profile_injections(net, profile.head(steps))
    shares = net.storage_shares
    has_storage = bool(net.storage) and float(shares.sum()) > 0.0
    planned = _planned_storage(schedule, net)

    storage_power = np.zeros(steps)
    realized_losses = np.zeros(steps)
    voltage_excursion = np.zeros(steps)
    flow_excess = np.zeros(steps)
    for t in range(steps):
        target = float(schedule.p_pcc[t])
        replay = _StepReplay(net, fixed[t], shares, target, t + 1)
        power = _balance(replay.gap, planned[t], step=t + 1) if has_storage else 0.0
        state, injections = replay.solve(power)
        gap = pcc_exchange(state, injections, net) - target
        if has_storage and abs(gap) > pcc_tolerance * max(1.0, abs(target)):
            logger.warning("Step %d: PCC mismatch %.3e after balancing", t + 1, gap)
        storage_power[t] = power
        realized_losses[t] = total_losses(state, net)
        voltage_excursion[t] = _voltage_excursion(state, net)
        flow_excess[t] = _flow_excess(state, net)

    e_units = np.array([unit.e_init for unit in net.storage], dtype=float)
    e_cap = net.storage_e_cap
    unit_energy = e_units + np.cumsum(np.outer(storage_power, shares) * schedule.dt, axis=0)
    total_cap = float(e_cap.sum())
    if net.storage and total_cap > 0.0:
        soc_units = unit_energy / e_cap
        soc_agg = unit_energy.sum(axis=1) / total_cap
        soc_init = net.e_agg_init / total_cap
        soc_target = net.e_agg_final / total_cap
    else:
        soc_units = np.zeros((steps, len(net.storage)))
        soc_agg = np.zeros(steps)
        soc_init = soc_target = 0.0

    violations = _violations(
        soc_agg if net.storage else np.zeros(0),
        soc_target,
        final_soc_tolerance,
        voltage_excursion,
        flow_excess,
    )
    lossless = _is_lossless(schedule.model_kind)
    model_losses = np.asarray(schedule.model_losses, dtype=float)
    report = VerificationReport(
        model_kind=schedule.model_kind,
        dt=schedule.dt,
        p_pcc=np.asarray(schedule.p_pcc, dtype=float),
        storage_power=storage_power,
        realized_losses=realized_losses,
        model_losses=model_losses,
        soc_agg=soc_agg,
        soc_units=soc_units,
        soc_init=soc_init,
        soc_target=soc_target,
        violations=tuple(violations),
        objective=float(schedule.objective),
        lossless=lossless,
        negative_loss_steps=() if lossless else schedule.negative_loss_steps,
        negative_branch_steps=() if lossless else schedule.negative_branch_steps,
        max_voltage_excursion=float(voltage_excursion.max(initial=0.0)),
    )
    logger.info(
        "Verified %s schedule: final SOC %.4f (target %.4f), %d violations",
        schedule.model_kind,
        report.final_soc,
        soc_target,
        len(violations),
    )
    return report


class _StepReplay:
    """AC power flow of one step as a function of the aggregate storage power."""

    def __init__(
        self,
        net: Network,
        fixed: StepInjections,
        shares: np.ndarray,
        target: float,
        step: int,
    ):
        self.net = net
        self.fixed = fixed
        self.shares = shares
        self.target = target
        self.step = step

    def solve(self, power: float) -> tuple[PowerFlowState, StepInjections]:
        injections = apply_storage(self.net, self.fixed, self.shares * power)
        try:
            return solve_ac(self.net, injections), injections
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"AC power flow failed at step {self.step}: {exc}",
                iterations=exc.iterations,
                mismatch=exc.mismatch,
                step=self.step,
            ) from exc

    def gap(self, power: float) -> float:
        """AC-realized PCC exchange minus the scheduled one."""
        state, injections = self.solve(power)
        return pcc_exchange(state, injections, self.net) - self.target


def _planned_storage(schedule: ScheduleResult, net: Network) -> np.ndarray:
    power = schedule.storage_power
    if power is not None and np.asarray(power).size:
        return np.asarray(power, dtype=float).sum(axis=1)
    return schedule.aggregate_storage_power(net.e_agg_init)


def _balance(gap: Callable[[float], float], start: float, *, step: int) -> float:
    """Root of ``gap`` near ``start``, bracketed by doubling steps away from it."""
    at_start = gap(start)
    if at_start == 0.0:
        return start
    direction = -1.0 if at_start > 0.0 else 1.0
    width = max(2.0 * abs(at_start), MIN_BRACKET_STEP)
    for _ in range(MAX_BRACKET_EXPANSIONS):
        other = start + direction * width
        at_other = gap(other)
        if at_other == 0.0:
            return other
        if np.sign(at_other) != np.sign(at_start):
            low, high = sorted((start, other))
            return float(brentq(gap, low, high, xtol=ROOT_XTOL))
        start, at_start = other, at_other
        width *= 2.0
    raise BracketError(f"Step {step}: no storage power reproduces the scheduled PCC exchange.")


def _voltage_excursion(state: PowerFlowState, net: Network) -> float:
    above = state.v - net.v_max
    below = net.v_min - state.v
    return float(max(above.max(initial=0.0), below.max(initial=0.0)))


def _flow_excess(state: PowerFlowState, net: Network) -> float:
    flows = state.flows
    worst = 0.0
    for index, branch in enumerate(net.branches):
        if branch.flow_limit is None:
            continue
        apparent = max(
            float(np.hypot(flows.p_from[index], flows.q_from[index])),
            float(np.hypot(flows.p_to[index], flows.q_to[index])),
        )
        worst = max(worst, apparent - branch.flow_limit)
    return worst


def _violations(
    soc_agg: np.ndarray,
    soc_target: float,
    final_soc_tolerance: float,
    voltage_excursion: np.ndarray,
    flow_excess: np.ndarray,
) -> list[Violation]:
    violations: list[Violation] = []
    for t, soc in enumerate(soc_agg):
        if soc < 0.0:
            violations.append(Violation(t + 1, ViolationKind.SOC_BELOW_ZERO, float(-soc)))
        elif soc > 1.0:
            violations.append(Violation(t + 1, ViolationKind.SOC_ABOVE_ONE, float(soc - 1.0)))
    if soc_agg.size and abs(soc_agg[-1] - soc_target) > final_soc_tolerance:
        violations.append(
            Violation(
                soc_agg.size,
                ViolationKind.FINAL_SOC_MISS,
                float(abs(soc_agg[-1] - soc_target)),
            ),
        )
    for t, excess in enumerate(voltage_excursion):
        if excess > LIMIT_TOLERANCE:
            violations.append(Violation(t + 1, ViolationKind.VOLTAGE, float(excess)))
    for t, excess in enumerate(flow_excess):
        if excess > LIMIT_TOLERANCE:
            violations.append(Violation(t + 1, ViolationKind.FLOW, float(excess)))
    return sorted(violations, key=Violation.sort_key)


def _is_lossless(model_kind: str) -> bool:
    try:
        return ModelKind.from_name(model_kind).lossless
    except ValueError:
        return False
