"""Linearization anchor for the loss-aware linear models."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from ..network.model import Network
from ..network.profiles import StepInjections
from ..powerflow.ac import solve_ac
from ..powerflow.state import PowerFlowState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BasePoint:
    """Converged AC state ``x0`` and the injections it was solved at."""

    state: PowerFlowState
    injections: StepInjections
    label: str = "base"

    @classmethod
    def solve(cls, net: Network, injections: StepInjections, *, label: str = "base") -> BasePoint:
        """Run the AC power flow at ``injections`` and wrap the result.

        Raises:
            ConvergenceError: If the AC power flow fails.
        """
        state = solve_ac(net, injections)
        logger.info("Base point '%s' solved in %d iterations", label, state.iterations)
        return cls(state=state, injections=injections, label=label)
