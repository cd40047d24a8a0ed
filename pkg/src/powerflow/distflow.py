"""DistFlow branch-flow equations solved by Newton-Raphson.

Unknowns are the sending-end flows ``P``, ``Q``, the squared currents ``ell``
of every branch and the squared voltages ``u`` of every non-slack bus. For a
branch ``i -> k`` with impedance ``r + jx``::

    p_k = Σ_{k->m} P_km - Σ_{i->k} (P_ik - r_ik ell_ik)
    q_k = Σ_{k->m} Q_km - Σ_{i->k} (Q_ik - x_ik ell_ik)
    u_k = u_i - 2 (r P + x Q) + (r^2 + x^2) ell
    ell u_i = P^2 + Q^2

The equations hold for any branch orientation, so the network's own
from/to convention is used as is.
"""

from __future__ import annotations

import logging

import numpy as np

from ..network.model import Network
from ..network.profiles import StepInjections
from ..network.topology import check_radial
from ..solvers.linalg import solve
from ..utils.errors import ConvergenceError, NetworkValidationError
from .ac import MAX_HALVINGS, MAX_ITERATIONS, TOLERANCE
from .state import DistFlowState

logger = logging.getLogger(__name__)


class _DistFlowSystem:
    def __init__(self, net: Network, injections: StepInjections):
        self.net = net
        self.n_branch = net.n_branch
        self.r = net.r
        self.x = net.x
        self.z2 = self.r**2 + self.x**2
        self.from_bus = np.array([branch.from_bus for branch in net.branches], dtype=int)
        self.to_bus = np.array([branch.to_bus for branch in net.branches], dtype=int)
        self.rows = net.non_slack
        self.u_slack = float(net.v_set) ** 2
        self.u_column = np.full(net.n_bus, -1, dtype=int)
        self.u_column[self.rows] = 3 * self.n_branch + np.arange(self.rows.size)
        self.p_set = np.asarray(injections.p, dtype=float)[self.rows]
        self.q_set = np.asarray(injections.q, dtype=float)[self.rows]
        self.size = 3 * self.n_branch + self.rows.size

    def unpack(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        L = self.n_branch  # noqa: N806
        u = np.full(self.net.n_bus, self.u_slack)
        u[self.rows] = z[3 * L :]
        return z[:L], z[L : 2 * L], z[2 * L : 3 * L], u

    def flat(self) -> np.ndarray:
        z = np.zeros(self.size)
        z[3 * self.n_branch :] = 1.0
        return z

    def bus_balance(
        self,
        p: np.ndarray,
        q: np.ndarray,
        ell: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Net active and reactive power leaving every bus through its branches."""
        n_bus = self.net.n_bus
        p_out = np.zeros(n_bus)
        q_out = np.zeros(n_bus)
        np.add.at(p_out, self.from_bus, p)
        np.add.at(q_out, self.from_bus, q)
        np.add.at(p_out, self.to_bus, -(p - self.r * ell))
        np.add.at(q_out, self.to_bus, -(q - self.x * ell))
        return p_out, q_out

    def residual(self, z: np.ndarray) -> np.ndarray:
        p, q, ell, u = self.unpack(z)
        p_out, q_out = self.bus_balance(p, q, ell)
        u_from, u_to = u[self.from_bus], u[self.to_bus]
        return np.concatenate(
            [
                p_out[self.rows] - self.p_set,
                q_out[self.rows] - self.q_set,
                u_to - u_from + 2.0 * (self.r * p + self.x * q) - self.z2 * ell,
                ell * u_from - p**2 - q**2,
            ],
        )

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        p, q, ell, u = self.unpack(z)
        L = self.n_branch  # noqa: N806
        n_rows = self.rows.size
        row_of = np.full(self.net.n_bus, -1, dtype=int)
        row_of[self.rows] = np.arange(n_rows)
        jac = np.zeros((self.size, self.size))
        q_offset, volt_offset, curr_offset = n_rows, 2 * n_rows, 2 * n_rows + L

        for line in range(L):
            i, k = self.from_bus[line], self.to_bus[line]
            p_col, q_col, ell_col = line, L + line, 2 * L + line
            if row_of[i] >= 0:
                jac[row_of[i], p_col] += 1.0
                jac[q_offset + row_of[i], q_col] += 1.0
            if row_of[k] >= 0:
                jac[row_of[k], p_col] -= 1.0
                jac[row_of[k], ell_col] += self.r[line]
                jac[q_offset + row_of[k], q_col] -= 1.0
                jac[q_offset + row_of[k], ell_col] += self.x[line]

            volt = volt_offset + line
            jac[volt, p_col] = 2.0 * self.r[line]
            jac[volt, q_col] = 2.0 * self.x[line]
            jac[volt, ell_col] = -self.z2[line]
            if self.u_column[k] >= 0:
                jac[volt, self.u_column[k]] += 1.0
            if self.u_column[i] >= 0:
                jac[volt, self.u_column[i]] -= 1.0

            curr = curr_offset + line
            jac[curr, p_col] = -2.0 * p[line]
            jac[curr, q_col] = -2.0 * q[line]
            jac[curr, ell_col] = u[i]
            if self.u_column[i] >= 0:
                jac[curr, self.u_column[i]] = ell[line]
        return jac


def solve_distflow(
    net: Network,
    injections: StepInjections,
    *,
    max_iterations: int = MAX_ITERATIONS,
    tolerance: float = TOLERANCE,
) -> DistFlowState:
    """Solve the DistFlow equations of a radial network.

    Newton iterations start from ``u = 1``, ``P = Q = ell = 0`` (the slack
    bus holds ``u = v_set^2``) and halve the step whenever it increases the
    residual. Ten halvings without progress stop the solver.

    Args:
        net: Radial network.
        injections: Specified per-bus injections; the slack entry is ignored.
        max_iterations: Newton iteration cap.
        tolerance: Target infinity norm of the residual.

    Returns:
        The converged :class:`DistFlowState`.

    Raises:
        NetworkValidationError: If the network is not radial.
        ConvergenceError: If the residual does not reach ``tolerance``.
        SingularMatrixError: If the Jacobian is singular.
    """
    if not check_radial(net):
        raise NetworkValidationError("DistFlow requires a radial network.")

    system = _DistFlowSystem(net, injections)
    z = system.flat()
    residual = system.residual(z)
    norm = float(np.max(np.abs(residual), initial=0.0))
    iterations = 0
    while norm > tolerance:
        if iterations >= max_iterations or not np.isfinite(norm):
            raise ConvergenceError(
                f"DistFlow did not converge after {iterations} iterations (mismatch {norm:.3e}).",
                iterations=iterations,
                mismatch=norm,
            )
        iterations += 1
        step = solve(system.jacobian(z), -residual)
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = z + scale * step
            trial_residual = system.residual(trial)
            trial_norm = float(np.max(np.abs(trial_residual)))
            if trial_norm < norm:
                break
            scale *= 0.5
        else:
            raise ConvergenceError(
                f"DistFlow stalled at iteration {iterations}: no step reduces the "
                f"mismatch {norm:.3e}.",
                iterations=iterations,
                mismatch=norm,
            )
        z, residual, norm = trial, trial_residual, trial_norm
        logger.debug("DistFlow iteration %d: mismatch %.3e", iterations, norm)

    p, q, ell, u = system.unpack(z)
    p_out, q_out = system.bus_balance(p, q, ell)
    return DistFlowState(
        branch_p=p.copy(),
        branch_q=q.copy(),
        ell=ell.copy(),
        u=u,
        slack_p=float(p_out[net.slack]),
        slack_q=float(q_out[net.slack]),
        iterations=iterations,
        mismatch=norm,
    )
