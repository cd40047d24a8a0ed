"""AC benchmark schedule by sequential linearization.

Starting from idle storage, every outer iteration linearizes the AC power flow
at the AC solution of each step, solves the full-linear schedule with the
proportional storage split, and re-solves the AC power flow at the new
dispatch. The loop stops once the AC-realized PCC trajectory moves less than
``tolerance`` between iterations.
"""

from __future__ import annotations

import logging

import numpy as np

from ..models.base_point import BasePoint
from ..models.builders import build_lin_ac
from ..network.model import Network
from ..network.profiles import StepInjections, apply_storage, profile_injections
from ..powerflow.ac import pcc_exchange, solve_ac
from ..powerflow.state import PowerFlowState
from ..utils.errors import ConvergenceError
from ..utils.helpers import parallel_map
from .dispatch import schedule_full_linear
from .problem import ScheduleProblem, ScheduleResult, build_result

logger = logging.getLogger(__name__)

MAX_OUTER_ITERATIONS = 20
OUTER_TOLERANCE = 1e-6
AC_LABEL = "ac"


def schedule_ac_benchmark(
    prob: ScheduleProblem,
    net: Network,
    *,
    max_iterations: int = MAX_OUTER_ITERATIONS,
    tolerance: float = OUTER_TOLERANCE,
    max_workers: int | None = None,
) -> ScheduleResult:
    """Schedule against the exact AC power flow.

    Args:
        prob: Scheduling problem built for ``net``.
        net: Network whose storage fleet is scheduled.
        max_iterations: Outer iteration cap.
        tolerance: Largest PCC change between iterations accepted as converged.
        max_workers: Threads for the per-step AC solves.

    Returns:
        An AC-consistent :class:`ScheduleResult`: ``p_pcc`` is the PCC exchange
        the AC power flow realizes at the returned storage dispatch. A failed
        inner QP is passed through with its status.

    Raises:
        ConvergenceError: If the trajectory still moves after ``max_iterations``
            outer iterations, or an AC solve fails.
    """
    steps = prob.horizon
    fixed = profile_injections(net, prob.profile)
    shares = net.storage_shares
    dispatch = np.zeros(steps)

    def realize(t: int) -> tuple[PowerFlowState, StepInjections]:
        injections = apply_storage(net, fixed[t], shares * dispatch[t])
        return solve_ac(net, injections), injections

    solved = parallel_map(realize, list(range(steps)), max_workers=max_workers)
    realized = _exchange(solved, net)
    gap = float("inf")
    for iteration in range(1, max_iterations + 1):
        models = [
            build_lin_ac(
                net,
                BasePoint(state=state, injections=injections, label=f"ac-iter-{iteration}"),
                fixed[t],
                dt=prob.dt,
            )
            for t, (state, injections) in enumerate(solved)
        ]
        linear = schedule_full_linear(prob, models, proportional_split=True)
        if not linear.ok:
            logger.warning("AC benchmark QP failed at iteration %d", iteration)
            return ScheduleResult(
                status=linear.status,
                model_kind=AC_LABEL,
                dt=prob.dt,
                iterations=iteration,
            )
        dispatch = linear.aggregate_storage_power(prob.e_init)
        solved = parallel_map(realize, list(range(steps)), max_workers=max_workers)
        updated = _exchange(solved, net)
        gap = float(np.max(np.abs(updated - realized), initial=0.0))
        realized = updated
        logger.debug("AC benchmark iteration %d: PCC change %.3e", iteration, gap)
        if gap < tolerance:
            logger.info("AC benchmark converged in %d iterations", iteration)
            return build_result(
                prob,
                AC_LABEL,
                realized,
                linear.e_agg,
                storage_power=np.outer(dispatch, shares),
                iterations=iteration,
                kkt_residual=linear.kkt_residual,
            )
    raise ConvergenceError(
        f"AC benchmark did not settle after {max_iterations} iterations (last gap {gap:.3e}).",
        iterations=max_iterations,
        mismatch=gap,
    )


def _exchange(solved: list[tuple[PowerFlowState, StepInjections]], net: Network) -> np.ndarray:
    return np.array([pcc_exchange(state, injections, net) for state, injections in solved])
