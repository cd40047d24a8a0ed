"""Builders for the four linear power-flow models.

All builders share one column convention. Each bus ``i`` receives the net
injection ``p_i = p_fix_i - Σ s_k (units at i) + [i is slack] p_pcc`` where
``s_k`` is the charging power of storage unit ``k``. The row
``delta_e - dt Σ s_k = 0`` ties the step's aggregate energy change to the
fleet power.
"""

from __future__ import annotations

import logging
from typing import Iterable

import numpy as np

from ..network.admittance import branch_admittances, build_ybus
from ..network.model import Network
from ..network.profiles import StepInjections
from ..network.topology import check_radial
from ..powerflow.ac import bus_power, full_jacobian
from ..solvers.linalg import lu_factor
from ..utils.errors import NetworkValidationError
from .base_point import BasePoint
from .linear_model import LinearModel, ModelKind

logger = logging.getLogger(__name__)

LOSS_ANGLE_FORMS = ("quadratic", "printed")


class _Assembler:
    def __init__(self, net: Network, injections: StepInjections):
        self.net = net
        self.p_fix = np.asarray(injections.p, dtype=float)
        self.q_fix = np.asarray(injections.q, dtype=float)
        self.labels: list[str] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.rows: list[dict[int, float]] = []
        self.rhs: list[float] = []
        self.row_labels: list[str] = []

    def add_column(self, label: str, lower: float = -np.inf, upper: float = np.inf) -> int:
        self.labels.append(label)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return len(self.labels) - 1

    def add_columns(
        self,
        prefix: str,
        count: int,
        lower: np.ndarray | float = -np.inf,
        upper: np.ndarray | float = np.inf,
    ) -> np.ndarray:
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (count,))
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (count,))
        return np.array(
            [self.add_column(f"{prefix}[{k}]", lower[k], upper[k]) for k in range(count)],
            dtype=int,
        )

    def add_row(self, label: str, terms: Iterable[tuple[int, float]], rhs: float) -> None:
        row: dict[int, float] = {}
        for column, coefficient in terms:
            row[int(column)] = row.get(int(column), 0.0) + float(coefficient)
        self.rows.append(row)
        self.rhs.append(float(rhs))
        self.row_labels.append(label)

    def add_devices(self, *, reactive: bool) -> tuple[int, int | None, np.ndarray, int]:
        """Columns for the PCC exchange, storage powers and the energy change."""
        p_pcc = self.add_column("p_pcc")
        q_pcc = self.add_column("q_pcc") if reactive else None
        p_max = self.net.storage_p_max
        storage = self.add_columns("s", len(self.net.storage), -p_max, p_max)
        delta_e = self.add_column("delta_e")
        return p_pcc, q_pcc, storage, delta_e

    def injection_terms(
        self,
        bus: int,
        storage: np.ndarray,
        pcc: int | None,
    ) -> list[tuple[int, float]]:
        """Terms of ``p_fix_i - p_i`` for bus ``bus``."""
        terms = [
            (storage[k], 1.0) for k, unit in enumerate(self.net.storage) if unit.bus == bus
        ]
        if pcc is not None and bus == self.net.slack:
            terms.append((pcc, -1.0))
        return terms

    def energy_row(self, storage: np.ndarray, delta_e: int, dt: float) -> None:
        self.add_row("energy", [(delta_e, 1.0)] + [(column, -dt) for column in storage], 0.0)

    def injection_map(self, storage: np.ndarray, p_pcc: int) -> np.ndarray:
        mapping = np.zeros((self.net.n_bus, len(self.labels)))
        for k, unit in enumerate(self.net.storage):
            mapping[unit.bus, storage[k]] -= 1.0
        mapping[self.net.slack, p_pcc] += 1.0
        return mapping

    def flow_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        limits = np.array(
            [np.inf if b.flow_limit is None else b.flow_limit for b in self.net.branches],
            dtype=float,
        )
        return -limits, limits

    def build(self, kind: ModelKind, dt: float, **extra: object) -> LinearModel:
        matrix = np.zeros((len(self.rows), len(self.labels)))
        for index, row in enumerate(self.rows):
            for column, coefficient in row.items():
                matrix[index, column] = coefficient
        model = LinearModel(
            matrix=matrix,
            rhs=np.array(self.rhs),
            lower=np.array(self.lower),
            upper=np.array(self.upper),
            labels=tuple(self.labels),
            row_labels=tuple(self.row_labels),
            kind=kind,
            dt=dt,
            **extra,  # type: ignore[arg-type]
        )
        logger.debug(
            "Built %s model with %d rows and %d columns", kind.label, model.n_rows, model.n_cols
        )
        return model


def _endpoints(net: Network) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.array([branch.from_bus for branch in net.branches], dtype=int),
        np.array([branch.to_bus for branch in net.branches], dtype=int),
    )


def build_lindistflow(net: Network, injections: StepInjections, *, dt: float = 1.0) -> LinearModel:
    """Assemble the lossless LinDistFlow model of a radial network.

    Columns are squared voltages ``u``, branch flows ``P``/``Q``, the PCC
    exchange, storage powers and the energy change. Voltage bounds become
    ``v_min^2 <= u <= v_max^2``.

    Args:
        net: Radial network.
        injections: Fixed injections of the step.
        dt: Step length in hours.

    Returns:
        The :class:`LinearModel`.

    Raises:
        NetworkValidationError: If the network is not radial.
    """
    if not check_radial(net):
        raise NetworkValidationError("LinDistFlow requires a radial network.")
    asm = _Assembler(net, injections)
    n, n_branch = net.n_bus, net.n_branch
    flow_lower, flow_upper = asm.flow_bounds()
    u = asm.add_columns("u", n, net.v_min**2, net.v_max**2)
    p_flow = asm.add_columns("P", n_branch, flow_lower, flow_upper)
    q_flow = asm.add_columns("Q", n_branch, flow_lower, flow_upper)
    p_pcc, q_pcc, storage, delta_e = asm.add_devices(reactive=True)
    assert q_pcc is not None

    for bus in range(n):
        out_p = [(p_flow[line], 1.0) for line in net.from_set[bus]]
        out_p += [(p_flow[line], -1.0) for line in net.to_set[bus]]
        out_q = [(q_flow[line], 1.0) for line in net.from_set[bus]]
        out_q += [(q_flow[line], -1.0) for line in net.to_set[bus]]
        asm.add_row(
            f"p_balance[{bus}]",
            out_p + asm.injection_terms(bus, storage, p_pcc),
            asm.p_fix[bus],
        )
        q_terms = out_q + ([(q_pcc, -1.0)] if bus == net.slack else [])
        asm.add_row(f"q_balance[{bus}]", q_terms, asm.q_fix[bus])
    for line, branch in enumerate(net.branches):
        asm.add_row(
            f"voltage[{line}]",
            [
                (u[branch.to_bus], 1.0),
                (u[branch.from_bus], -1.0),
                (p_flow[line], 2.0 * branch.r),
                (q_flow[line], 2.0 * branch.x),
            ],
            0.0,
        )
    asm.add_row("u_slack", [(u[net.slack], 1.0)], net.v_set**2)
    asm.energy_row(storage, delta_e, dt)
    return asm.build(
        ModelKind.LINDISTFLOW,
        dt,
        injection_p=asm.injection_map(storage, p_pcc),
        injection_offset=asm.p_fix.copy(),
    )


def build_dc(net: Network, injections: StepInjections, *, dt: float = 1.0) -> LinearModel:
    """Assemble the classic DC model ``p_i = Σ P_ij``, ``P_ij = (θ_i - θ_j) / x_ij``.

    Active power only; no voltage magnitudes, no reactive power, no losses.
    Meshed networks are allowed.
    """
    asm = _Assembler(net, injections)
    flow_lower, flow_upper = asm.flow_bounds()
    theta = asm.add_columns("theta", net.n_bus)
    p_flow = asm.add_columns("P", net.n_branch, flow_lower, flow_upper)
    p_pcc, _, storage, delta_e = asm.add_devices(reactive=False)

    for bus in range(net.n_bus):
        out = [(p_flow[line], 1.0) for line in net.from_set[bus]]
        out += [(p_flow[line], -1.0) for line in net.to_set[bus]]
        asm.add_row(
            f"p_balance[{bus}]", out + asm.injection_terms(bus, storage, p_pcc), asm.p_fix[bus]
        )
    for line, branch in enumerate(net.branches):
        susceptance = 1.0 / branch.x
        asm.add_row(
            f"flow[{line}]",
            [
                (p_flow[line], 1.0),
                (theta[branch.from_bus], -susceptance),
                (theta[branch.to_bus], susceptance),
            ],
            0.0,
        )
    asm.add_row("theta_slack", [(theta[net.slack], 1.0)], 0.0)
    asm.energy_row(storage, delta_e, dt)
    return asm.build(
        ModelKind.DC,
        dt,
        injection_p=asm.injection_map(storage, p_pcc),
        injection_offset=asm.p_fix.copy(),
    )


def build_enhanced_dc(
    net: Network,
    base: BasePoint,
    injections: StepInjections | None = None,
    *,
    dt: float = 1.0,
    loss_angle_form: str = "quadratic",
) -> LinearModel:
    """Assemble the enhanced DC model linearized at ``base``.

    Branch flows follow ``P_ij = g (u_i - u_j)/2 - b θ_ij + P_loss`` and
    ``Q_ij = -b (u_i - u_j)/2 - g θ_ij + Q_loss`` with ``u = |V|^2``. The
    voltage term is read as ``(u_i - u_j)/2``: squaring ``u`` a second time
    would make it quartic in ``|V|``. The loss terms
    ``P_loss = g L``, ``Q_loss = -b L`` with ``L = ((|V_i| - |V_j|)^2 + θ_ij^2)/2``
    (or ``θ_ij`` instead of ``θ_ij^2`` for ``loss_angle_form="printed"``) are
    replaced by their first-order expansion in ``(u_i, u_j, θ_ij)`` at the
    base point, with constants chosen so each flow equals the base AC flow
    exactly at the base point.

    Args:
        net: Network (meshed allowed).
        base: Converged AC base point.
        injections: Fixed injections of the step; defaults to the base's.
        dt: Step length in hours.
        loss_angle_form: ``"quadratic"`` or ``"printed"``.

    Returns:
        The :class:`LinearModel`; ``P_f + P_t`` per branch is its modeled loss.

    Raises:
        ValueError: On an unknown ``loss_angle_form``.
    """
    if loss_angle_form not in LOSS_ANGLE_FORMS:
        raise ValueError(
            f"loss_angle_form must be one of {', '.join(LOSS_ANGLE_FORMS)}, "
            f"got '{loss_angle_form}'.",
        )
    asm = _Assembler(net, base.injections if injections is None else injections)
    n, n_branch = net.n_bus, net.n_branch
    flow_lower, flow_upper = asm.flow_bounds()
    u = asm.add_columns("u", n, net.v_min**2, net.v_max**2)
    theta = asm.add_columns("theta", n)
    p_from = asm.add_columns("Pf", n_branch, flow_lower, flow_upper)
    p_to = asm.add_columns("Pt", n_branch, flow_lower, flow_upper)
    q_from = asm.add_columns("Qf", n_branch, flow_lower, flow_upper)
    q_to = asm.add_columns("Qt", n_branch, flow_lower, flow_upper)
    p_pcc, q_pcc, storage, delta_e = asm.add_devices(reactive=True)
    assert q_pcc is not None

    for bus in range(n):
        out_p = [(p_from[line], 1.0) for line in net.from_set[bus]]
        out_p += [(p_to[line], 1.0) for line in net.to_set[bus]]
        out_q = [(q_from[line], 1.0) for line in net.from_set[bus]]
        out_q += [(q_to[line], 1.0) for line in net.to_set[bus]]
        asm.add_row(
            f"p_balance[{bus}]", out_p + asm.injection_terms(bus, storage, p_pcc), asm.p_fix[bus]
        )
        q_terms = out_q + ([(q_pcc, -1.0)] if bus == net.slack else [])
        asm.add_row(f"q_balance[{bus}]", q_terms, asm.q_fix[bus])

    state = base.state
    admittance = branch_admittances(net)
    from_bus, to_bus = _endpoints(net)
    for line in range(n_branch):
        i, j = from_bus[line], to_bus[line]
        g, b = admittance[line].real, admittance[line].imag
        v_i, v_j = state.v[i], state.v[j]
        angle = state.theta[i] - state.theta[j]
        d_ui = 0.5 * (1.0 - v_j / v_i)
        d_uj = 0.5 * (1.0 - v_i / v_j)
        d_angle = angle if loss_angle_form == "quadratic" else 0.5

        expansions = (
            ("Pf", p_from[line], state.flows.p_from[line], 0.5 * g, -0.5 * g, -b, g),
            ("Pt", p_to[line], state.flows.p_to[line], -0.5 * g, 0.5 * g, b, g),
            ("Qf", q_from[line], state.flows.q_from[line], -0.5 * b, 0.5 * b, -g, -b),
            ("Qt", q_to[line], state.flows.q_to[line], 0.5 * b, -0.5 * b, g, -b),
        )
        for name, column, base_flow, c_ui, c_uj, c_angle, loss_scale in expansions:
            coef_ui = c_ui + loss_scale * d_ui
            coef_uj = c_uj + loss_scale * d_uj
            coef_angle = c_angle + loss_scale * d_angle
            at_base = coef_ui * v_i**2 + coef_uj * v_j**2 + coef_angle * angle
            asm.add_row(
                f"{name}[{line}]",
                [
                    (column, 1.0),
                    (u[i], -coef_ui),
                    (u[j], -coef_uj),
                    (theta[i], -coef_angle),
                    (theta[j], coef_angle),
                ],
                base_flow - at_base,
            )

    asm.add_row("u_slack", [(u[net.slack], 1.0)], net.v_set**2)
    asm.add_row("theta_slack", [(theta[net.slack], 1.0)], 0.0)
    asm.energy_row(storage, delta_e, dt)
    loss_p, loss_q = _loss_selectors(len(asm.labels), p_from, p_to, q_from, q_to)
    return asm.build(
        ModelKind.DC_ENHANCED,
        dt,
        injection_p=asm.injection_map(storage, p_pcc),
        injection_offset=asm.p_fix.copy(),
        loss_p=loss_p,
        loss_q=loss_q,
        base_id=base.label,
    )


def _flow_gradients(
    g: float,
    b: float,
    v_i: float,
    v_j: float,
    angle: float,
) -> dict[str, tuple[float, float, float]]:
    """Partial derivatives ``(d/dv_i, d/dv_j, d/dθ_ij)`` of the four branch flows."""
    cos, sin = np.cos(angle), np.sin(angle)
    forward = g * cos + b * sin
    forward_q = g * sin - b * cos
    backward = g * cos - b * sin
    backward_q = g * sin + b * cos
    return {
        "Pf": (2.0 * g * v_i - v_j * forward, -v_i * forward, v_i * v_j * forward_q),
        "Qf": (-2.0 * b * v_i - v_j * forward_q, -v_i * forward_q, -v_i * v_j * forward),
        "Pt": (-v_j * backward, 2.0 * g * v_j - v_i * backward, v_i * v_j * backward_q),
        "Qt": (v_j * backward_q, -2.0 * b * v_j + v_i * backward_q, v_i * v_j * backward),
    }


def build_lin_ac(
    net: Network,
    base: BasePoint,
    injections: StepInjections | None = None,
    *,
    dt: float = 1.0,
) -> LinearModel:
    """Assemble the AC power flow linearized at ``base``.

    The bus balance ``S(v, θ) - (p + jq) = 0`` and the four branch-flow
    equations are replaced by their first-order Taylor expansions around the
    base state, with the constants absorbing ``x0`` so the base state solves
    the model exactly.

    Args:
        net: Network (meshed allowed).
        base: Converged AC base point.
        injections: Fixed injections of the step; defaults to the base's.
        dt: Step length in hours.

    Returns:
        The :class:`LinearModel`.

    Raises:
        SingularMatrixError: If the power-flow Jacobian at the base is singular.
    """
    asm = _Assembler(net, base.injections if injections is None else injections)
    n, n_branch = net.n_bus, net.n_branch
    state = base.state
    ybus = build_ybus(net).values
    jacobian = full_jacobian(state.v, state.theta, ybus)
    rows = net.non_slack
    keep = np.concatenate([rows, rows + n])
    lu_factor(jacobian[np.ix_(keep, keep)])
    computed = bus_power(state.voltage, ybus)

    flow_lower, flow_upper = asm.flow_bounds()
    v = asm.add_columns("v", n, net.v_min, net.v_max)
    theta = asm.add_columns("theta", n)
    p_bus = asm.add_columns("p", n)
    q_bus = asm.add_columns("q", n)
    p_from = asm.add_columns("Pf", n_branch, flow_lower, flow_upper)
    q_from = asm.add_columns("Qf", n_branch, flow_lower, flow_upper)
    p_to = asm.add_columns("Pt", n_branch, flow_lower, flow_upper)
    q_to = asm.add_columns("Qt", n_branch, flow_lower, flow_upper)
    p_pcc, q_pcc, storage, delta_e = asm.add_devices(reactive=True)
    assert q_pcc is not None

    x0 = np.concatenate([state.theta, state.v])
    state_columns = np.concatenate([theta, v])
    base_power = np.concatenate([computed.real, computed.imag])
    injection_columns = np.concatenate([p_bus, q_bus])
    for k in range(2 * n):
        name = "p_balance" if k < n else "q_balance"
        terms = [(state_columns[m], jacobian[k, m]) for m in np.flatnonzero(jacobian[k])]
        terms.append((injection_columns[k], -1.0))
        asm.add_row(f"{name}[{k % n}]", terms, float(jacobian[k] @ x0) - base_power[k])

    for bus in range(n):
        asm.add_row(
            f"p_inj[{bus}]",
            [(p_bus[bus], 1.0)] + asm.injection_terms(bus, storage, p_pcc),
            asm.p_fix[bus],
        )
        q_terms = [(q_bus[bus], 1.0)] + ([(q_pcc, -1.0)] if bus == net.slack else [])
        asm.add_row(f"q_inj[{bus}]", q_terms, asm.q_fix[bus])
    asm.add_row("v_slack", [(v[net.slack], 1.0)], net.v_set)
    asm.add_row("theta_slack", [(theta[net.slack], 1.0)], 0.0)

    admittance = branch_admittances(net)
    from_bus, to_bus = _endpoints(net)
    flow_columns = {"Pf": p_from, "Qf": q_from, "Pt": p_to, "Qt": q_to}
    base_flows = {
        "Pf": state.flows.p_from,
        "Qf": state.flows.q_from,
        "Pt": state.flows.p_to,
        "Qt": state.flows.q_to,
    }
    for line in range(n_branch):
        i, j = from_bus[line], to_bus[line]
        angle = state.theta[i] - state.theta[j]
        gradients = _flow_gradients(
            admittance[line].real, admittance[line].imag, state.v[i], state.v[j], angle
        )
        for name, (d_vi, d_vj, d_angle) in gradients.items():
            at_base = d_vi * state.v[i] + d_vj * state.v[j] + d_angle * angle
            asm.add_row(
                f"{name}[{line}]",
                [
                    (flow_columns[name][line], 1.0),
                    (v[i], -d_vi),
                    (v[j], -d_vj),
                    (theta[i], -d_angle),
                    (theta[j], d_angle),
                ],
                base_flows[name][line] - at_base,
            )
    asm.energy_row(storage, delta_e, dt)

    injection_p = np.zeros((n, len(asm.labels)))
    injection_p[np.arange(n), p_bus] = 1.0
    loss_p, loss_q = _loss_selectors(len(asm.labels), p_from, p_to, q_from, q_to)
    return asm.build(
        ModelKind.LIN_AC,
        dt,
        injection_p=injection_p,
        loss_p=loss_p,
        loss_q=loss_q,
        base_id=base.label,
    )


def _loss_selectors(
    n_cols: int,
    p_from: np.ndarray,
    p_to: np.ndarray,
    q_from: np.ndarray,
    q_to: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    n_branch = p_from.size
    lines = np.arange(n_branch)
    loss_p = np.zeros((n_branch, n_cols))
    loss_q = np.zeros((n_branch, n_cols))
    loss_p[lines, p_from] = 1.0
    loss_p[lines, p_to] = 1.0
    loss_q[lines, q_from] = 1.0
    loss_q[lines, q_to] = 1.0
    return loss_p, loss_q


def build_model(
    kind: ModelKind,
    net: Network,
    injections: StepInjections,
    base: BasePoint | None = None,
    *,
    dt: float = 1.0,
    loss_angle_form: str = "quadratic",
) -> LinearModel:
    """Dispatch to the builder of ``kind``.

    Raises:
        ValueError: If a loss-aware kind is requested without a base point.
    """
    if kind is ModelKind.LINDISTFLOW:
        return build_lindistflow(net, injections, dt=dt)
    if kind is ModelKind.DC:
        return build_dc(net, injections, dt=dt)
    if base is None:
        raise ValueError(f"Model kind '{kind.label}' needs a base point.")
    if kind is ModelKind.DC_ENHANCED:
        return build_enhanced_dc(
            net, base, injections, dt=dt, loss_angle_form=loss_angle_form
        )
    return build_lin_ac(net, base, injections, dt=dt)
