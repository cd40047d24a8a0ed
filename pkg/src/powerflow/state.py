"""Operating-point containers returned by the exact power-flow solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BranchFlows:
    """Directed flows of every branch, from side and to side, plus ``|I|^2``."""

    p_from: np.ndarray
    q_from: np.ndarray
    p_to: np.ndarray
    q_to: np.ndarray
    ell: np.ndarray

    @classmethod
    def zeros(cls, n_branch: int) -> BranchFlows:
        return cls(*(np.zeros(n_branch) for _ in range(5)))


@dataclass(frozen=True)
class PowerFlowState:
    """Polar operating point.

    ``p``/``q`` are the net bus injections realized by the voltages
    (generation positive), so at a solution ``p[slack]`` is whatever the
    slack bus must inject to close the balance.
    """

    v: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    flows: BranchFlows
    iterations: int = 0
    mismatch: float = 0.0

    @property
    def n_bus(self) -> int:
        return int(self.v.shape[0])

    @property
    def u(self) -> np.ndarray:
        return self.v**2

    @property
    def voltage(self) -> np.ndarray:
        return self.v * np.exp(1j * self.theta)

    @property
    def branch_p(self) -> np.ndarray:
        return self.flows.p_from

    @property
    def branch_q(self) -> np.ndarray:
        return self.flows.q_from

    @property
    def ell(self) -> np.ndarray:
        return self.flows.ell

    @classmethod
    def flat(cls, n_bus: int, n_branch: int, *, v_set: float = 1.0) -> PowerFlowState:
        """Flat profile ``v = v_set``, ``θ = 0`` with no flows."""
        return cls(
            v=np.full(n_bus, float(v_set)),
            theta=np.zeros(n_bus),
            p=np.zeros(n_bus),
            q=np.zeros(n_bus),
            flows=BranchFlows.zeros(n_branch),
        )


@dataclass(frozen=True)
class DistFlowState:
    """Branch-flow operating point in squared magnitudes.

    ``branch_p``/``branch_q`` are sending-end flows along each branch's
    ``from -> to`` orientation.
    """

    branch_p: np.ndarray
    branch_q: np.ndarray
    ell: np.ndarray
    u: np.ndarray
    slack_p: float = 0.0
    slack_q: float = 0.0
    iterations: int = 0
    mismatch: float = 0.0

    @property
    def v(self) -> np.ndarray:
        return np.sqrt(self.u)
