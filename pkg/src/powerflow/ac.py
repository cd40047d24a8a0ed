"""Polar AC power flow solved by Newton-Raphson.

The complex power leaving bus ``i`` over branch ``(i, j)`` is
``S_ij = V_i * conj(I_ij)`` with ``I_ij = y_ij (V_i - V_j)``; the product of
an admittance and a current that sometimes appears in print is a slip.
Bus injections are ``S = V * conj(Y V)`` where the sum runs over every bus
including ``j = i`` (``θ_ii = 0``, diagonal ``g_ii``/``b_ii``).
"""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from ..network.admittance import branch_admittances, build_ybus
from ..network.model import Network
from ..network.profiles import StepInjections
from ..solvers.linalg import solve
from ..utils.errors import ConvergenceError
from .state import BranchFlows, PowerFlowState

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 50
TOLERANCE = 1e-10
MAX_HALVINGS = 10


def bus_power(voltage: np.ndarray, ybus: np.ndarray) -> np.ndarray:
    """Complex bus injections ``V * conj(Y V)``."""
    return voltage * np.conj(ybus @ voltage)


def power_derivatives(voltage: np.ndarray, ybus: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(dS/d|V|, dS/dθ)`` for every bus pair.

    Args:
        voltage: Complex bus voltages.
        ybus: Dense bus admittance matrix.

    Returns:
        Two complex ``n x n`` matrices; real parts are the active-power
        sensitivities and imaginary parts the reactive ones.
    """
    current = ybus @ voltage
    diag_v = np.diag(voltage)
    diag_i = np.diag(current)
    diag_v_norm = np.diag(voltage / np.abs(voltage))
    ds_dvm = diag_v @ np.conj(ybus @ diag_v_norm) + np.conj(diag_i) @ diag_v_norm
    ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
    return ds_dvm, ds_dva


def full_jacobian(v: np.ndarray, theta: np.ndarray, ybus: np.ndarray) -> np.ndarray:
    """Jacobian of ``(P, Q)`` at all buses with respect to ``(θ, v)`` at all buses.

    Row blocks are ``P`` then ``Q``; column blocks are ``θ`` then ``v``.
    """
    ds_dvm, ds_dva = power_derivatives(v * np.exp(1j * theta), ybus)
    return np.block([[ds_dva.real, ds_dvm.real], [ds_dva.imag, ds_dvm.imag]])


def ac_residual(state: PowerFlowState, net: Network) -> np.ndarray:
    """Mismatch ``specified - computed`` of the bus balance at non-slack buses.

    ``state.p``/``state.q`` are read as the specified injections. The vector
    holds the active rows of all non-slack buses followed by their reactive rows.
    """
    computed = bus_power(state.voltage, build_ybus(net).values)
    rows = net.non_slack
    return np.concatenate(
        [state.p[rows] - computed.real[rows], state.q[rows] - computed.imag[rows]],
    )


def ac_jacobian(state: PowerFlowState, net: Network) -> np.ndarray:
    """Jacobian of the computed non-slack injections w.r.t. non-slack ``(θ, v)``.

    This is the negated derivative of :func:`ac_residual`.
    """
    rows = net.non_slack
    n = net.n_bus
    jacobian = full_jacobian(state.v, state.theta, build_ybus(net).values)
    keep = np.concatenate([rows, rows + n])
    return jacobian[np.ix_(keep, keep)]


def branch_flows(state: PowerFlowState, net: Network) -> BranchFlows:
    """Evaluate directed branch flows and squared currents at ``state``.

    With ``g + jb = 1/(r + jx)`` and ``θ_ij = θ_i - θ_j``::

        P_ij = g v_i^2 - v_i v_j (g cos θ_ij + b sin θ_ij)
        Q_ij = -b v_i^2 - v_i v_j (g sin θ_ij - b cos θ_ij)
        ell_ij = |y|^2 |V_i - V_j|^2

    so that ``P_ij + P_ji = r ell_ij``.
    """
    if not net.n_branch:
        return BranchFlows.zeros(0)
    y = branch_admittances(net)
    g, b = y.real, y.imag
    i = np.array([branch.from_bus for branch in net.branches])
    j = np.array([branch.to_bus for branch in net.branches])
    v_i, v_j = state.v[i], state.v[j]
    angle = state.theta[i] - state.theta[j]
    cos, sin = np.cos(angle), np.sin(angle)

    p_from = g * v_i**2 - v_i * v_j * (g * cos + b * sin)
    q_from = -b * v_i**2 - v_i * v_j * (g * sin - b * cos)
    p_to = g * v_j**2 - v_i * v_j * (g * cos - b * sin)
    q_to = -b * v_j**2 + v_i * v_j * (g * sin + b * cos)
    voltage = state.voltage
    ell = np.abs(y) ** 2 * np.abs(voltage[i] - voltage[j]) ** 2
    return BranchFlows(p_from=p_from, q_from=q_from, p_to=p_to, q_to=q_to, ell=ell)


def total_losses(state: PowerFlowState, net: Network) -> float:
    """Active losses ``Σ r_ij ell_ij`` over all branches."""
    return float(net.r @ state.flows.ell) if net.n_branch else 0.0


def solve_ac(
    net: Network,
    injections: StepInjections,
    *,
    max_iterations: int = MAX_ITERATIONS,
    tolerance: float = TOLERANCE,
) -> PowerFlowState:
    """Solve the polar AC power flow from a flat start.

    The slack bus holds ``|V| = net.v_set`` and ``θ = 0``; every other bus is
    PQ with the given injections. Whenever a full Newton step increases the
    mismatch, the step is halved (up to ten times); when no halving reduces
    it, the solver stops.

    Args:
        net: Validated network.
        injections: Specified per-bus injections; the slack entry is ignored.
        max_iterations: Newton iteration cap.
        tolerance: Target infinity norm of the mismatch.

    Returns:
        The converged :class:`PowerFlowState`, branch flows filled in.

    Raises:
        ConvergenceError: If the mismatch is still above ``tolerance`` after
            ``max_iterations`` iterations or becomes non-finite, or if no
            halved step reduces it.
        SingularMatrixError: If the Jacobian is singular.
    """
    ybus = build_ybus(net).values
    n = net.n_bus
    rows = net.non_slack
    keep = np.concatenate([rows, rows + n])
    target = np.concatenate([injections.p[rows], injections.q[rows]])

    v = np.full(n, float(net.v_set))
    theta = np.zeros(n)

    def mismatch_of(v_: np.ndarray, theta_: np.ndarray) -> np.ndarray:
        computed = bus_power(v_ * np.exp(1j * theta_), ybus)
        return np.concatenate([computed.real[rows], computed.imag[rows]]) - target

    mismatch = mismatch_of(v, theta)
    norm = float(np.max(np.abs(mismatch), initial=0.0))
    iterations = 0
    while norm > tolerance:
        if iterations >= max_iterations or not np.isfinite(norm):
            raise ConvergenceError(
                f"AC power flow did not converge after {iterations} iterations "
                f"(mismatch {norm:.3e}).",
                iterations=iterations,
                mismatch=norm,
            )
        iterations += 1
        jacobian = full_jacobian(v, theta, ybus)[np.ix_(keep, keep)]
        step = solve(jacobian, -mismatch)
        d_theta, d_v = step[: rows.size], step[rows.size :]

        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial_v, trial_theta = v.copy(), theta.copy()
            trial_theta[rows] += scale * d_theta
            trial_v[rows] += scale * d_v
            trial_mismatch = mismatch_of(trial_v, trial_theta)
            trial_norm = float(np.max(np.abs(trial_mismatch)))
            if trial_norm < norm:
                break
            scale *= 0.5
        else:
            raise ConvergenceError(
                f"AC power flow stalled at iteration {iterations}: no step reduces the "
                f"mismatch {norm:.3e}.",
                iterations=iterations,
                mismatch=norm,
            )
        v, theta, mismatch, norm = trial_v, trial_theta, trial_mismatch, trial_norm
        logger.debug("AC iteration %d: mismatch %.3e (step %.4g)", iterations, norm, scale)

    computed = bus_power(v * np.exp(1j * theta), ybus)
    p = np.array(injections.p, dtype=float)
    q = np.array(injections.q, dtype=float)
    p[net.slack] = computed.real[net.slack]
    q[net.slack] = computed.imag[net.slack]
    provisional = PowerFlowState(
        v=v,
        theta=theta,
        p=p,
        q=q,
        flows=BranchFlows.zeros(net.n_branch),
        iterations=iterations,
        mismatch=norm,
    )
    state = replace(provisional, flows=branch_flows(provisional, net))
    logger.debug("AC power flow converged in %d iterations", iterations)
    return state


def pcc_exchange(state: PowerFlowState, injections: StepInjections, net: Network) -> float:
    """Active power imported at the PCC.

    The slack bus injection minus whatever fixed injection (load, storage)
    sits on the slack bus itself.
    """
    return float(state.p[net.slack] - injections.p[net.slack])
