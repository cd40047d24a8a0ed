from __future__ import annotations

import numpy as np
import pytest

from src.models.base_point import BasePoint
from src.models.builders import (
    build_dc,
    build_enhanced_dc,
    build_lin_ac,
    build_lindistflow,
    build_model,
)
from src.models.linear_model import (
    FEATURE_HEADER,
    FeatureRow,
    LinearModel,
    ModelKind,
    detect_negative_losses,
    feature_matrix,
)
from src.network.model import Branch, Bus, BusKind, Network, StorageUnit
from src.network.profiles import StepInjections, nominal_injections, step_injections
from src.powerflow.ac import solve_ac, total_losses
from src.powerflow.distflow import solve_distflow
from src.utils.errors import InfeasibleModelError, NetworkValidationError


def _values(model: LinearModel, z: np.ndarray, prefix: str, count: int) -> np.ndarray:
    return np.array([z[model.column(f"{prefix}[{k}]")] for k in range(count)])


def _storage_at_zero(net: Network) -> dict[str, float]:
    return {f"s[{k}]": 0.0 for k in range(len(net.storage))}


def test_lindistflow_voltage_drop_on_two_bus(make_two_bus) -> None:
    net = make_two_bus(r=0.01, x=0.1, p_load=0.5, q_load=0.1, v_min=0.9)
    model = build_lindistflow(net, nominal_injections(net))
    z = model.complete({})
    assert z[model.column("P[0]")] == pytest.approx(0.5)
    assert z[model.column("Q[0]")] == pytest.approx(0.1)
    assert z[model.column("u[1]")] == pytest.approx(0.97)
    assert z[model.column("p_pcc")] == pytest.approx(0.5)
    assert model.is_feasible(z)


def test_lindistflow_injections_telescope(ieee33: Network) -> None:
    model = build_lindistflow(ieee33, nominal_injections(ieee33))
    z = model.complete({"s[0]": 0.01, "s[1]": -0.02})
    assert model.bus_injections(z).sum() == pytest.approx(0.0, abs=1e-10)
    assert z[model.column("delta_e")] == pytest.approx(-0.01)
    assert z[model.column("p_pcc")] == pytest.approx(0.3715 - 0.01)


def test_lindistflow_flat_case(ieee33: Network) -> None:
    model = build_lindistflow(ieee33, StepInjections.zeros(ieee33.n_bus))
    z = model.complete(_storage_at_zero(ieee33))
    np.testing.assert_allclose(_values(model, z, "u", ieee33.n_bus), 1.0, atol=1e-12)


def test_lindistflow_rejects_meshed_network(triangle: Network) -> None:
    with pytest.raises(NetworkValidationError, match="radial"):
        build_lindistflow(triangle, nominal_injections(triangle))


def test_lindistflow_overestimates_voltages_of_pure_loads(campus: Network) -> None:
    for load in (0.15, 0.25, 0.35):
        injections = step_injections(campus, load, 0.0)
        model = build_lindistflow(campus, injections)
        z = model.complete(_storage_at_zero(campus))
        exact = solve_distflow(campus, injections)
        u_lin = _values(model, z, "u", campus.n_bus)
        assert np.all(u_lin >= exact.u - 1e-12)


def test_dc_flow_from_angle_difference(make_two_bus) -> None:
    net = make_two_bus(r=0.0, x=0.1, p_load=0.1)
    model = build_dc(net, nominal_injections(net))
    z = model.complete({})
    assert z[model.column("theta[1]")] == pytest.approx(-0.01)
    assert z[model.column("P[0]")] == pytest.approx(0.1)


def test_dc_triangle_splits_flows(triangle: Network) -> None:
    injections = StepInjections(p=np.array([0.0, -1.0, 0.0]), q=np.zeros(3))
    model = build_dc(triangle, injections)
    z = model.complete({})
    np.testing.assert_allclose(_values(model, z, "P", 3), [2 / 3, -1 / 3, 1 / 3], atol=1e-12)
    assert model.bus_injections(z).sum() == pytest.approx(0.0, abs=1e-10)


def test_dc_is_lossless(triangle: Network) -> None:
    model = build_dc(triangle, nominal_injections(triangle))
    report = model.losses(model.complete({}))
    assert report.total_p == 0.0
    assert not report.any_negative
    assert model.lossless


@pytest.mark.slow
@pytest.mark.parametrize("kind", [ModelKind.DC, ModelKind.LINDISTFLOW])
def test_lossless_models_balance_at_random_points(campus: Network, kind: ModelKind) -> None:
    rng = np.random.default_rng(5)
    p_max = np.array([unit.p_max for unit in campus.storage])
    for _ in range(10):
        injections = step_injections(campus, rng.uniform(0.1, 0.4), rng.uniform(0.0, 0.1))
        model = build_model(kind, campus, injections)
        for _ in range(100):
            powers = rng.uniform(-p_max, p_max)
            z = model.complete({f"s[{k}]": float(power) for k, power in enumerate(powers)})
            assert abs(model.bus_injections(z).sum()) <= 1e-10


def test_enhanced_dc_reproduces_base_point(triangle: Network) -> None:
    base = BasePoint.solve(triangle, nominal_injections(triangle))
    model = build_enhanced_dc(triangle, base)
    z = model.complete({})
    flows = base.state.flows
    np.testing.assert_allclose(_values(model, z, "Pf", 3), flows.p_from, atol=1e-8)
    np.testing.assert_allclose(_values(model, z, "Pt", 3), flows.p_to, atol=1e-8)
    np.testing.assert_allclose(_values(model, z, "Qf", 3), flows.q_from, atol=1e-8)
    np.testing.assert_allclose(_values(model, z, "u", 3), base.state.v**2, atol=1e-8)
    report = model.losses(z)
    assert report.total_p == pytest.approx(total_losses(base.state, triangle), abs=1e-8)
    assert report.total_p > 0.0
    assert not report.any_negative
    assert model.base_id == "base"


def test_enhanced_dc_on_lossless_lines_models_no_losses(make_two_bus) -> None:
    net = make_two_bus(r=0.0, x=0.1, storage=(StorageUnit.sized(1, 0.1),))
    base = BasePoint.solve(net, nominal_injections(net))
    model = build_enhanced_dc(net, base)
    for charging in (-0.1, 0.0, 0.05):
        report = model.losses(model.complete({"s[0]": charging}))
        np.testing.assert_allclose(report.p_loss, 0.0, atol=1e-12)


def test_enhanced_dc_flags_negative_losses_for_reversed_flow(make_two_bus) -> None:
    net = make_two_bus(r=0.01, x=0.1, p_load=0.2)
    base = BasePoint.solve(net, nominal_injections(net))
    exporting = StepInjections(p=np.array([0.0, 0.3]), q=np.zeros(2))
    model = build_enhanced_dc(net, base, exporting)
    z = model.complete({})
    report = detect_negative_losses(model, z)
    expected = model.loss_p @ z + model.loss_offset_p
    np.testing.assert_allclose(report.p_loss, expected)
    np.testing.assert_array_equal(report.negative_loss_flags, expected < -1e-9)
    assert report.any_negative


def test_enhanced_dc_loss_angle_forms(triangle: Network) -> None:
    base = BasePoint.solve(triangle, nominal_injections(triangle))
    quadratic = build_enhanced_dc(triangle, base)
    printed = build_enhanced_dc(triangle, base, loss_angle_form="printed")
    assert not np.allclose(quadratic.matrix, printed.matrix)
    with pytest.raises(ValueError, match="loss_angle_form"):
        build_enhanced_dc(triangle, base, loss_angle_form="cubic")


def test_lin_ac_is_exact_at_base_point(triangle: Network) -> None:
    base = BasePoint.solve(triangle, nominal_injections(triangle))
    model = build_lin_ac(triangle, base)
    z = model.complete({})
    np.testing.assert_allclose(_values(model, z, "v", 3), base.state.v, atol=1e-8)
    np.testing.assert_allclose(_values(model, z, "theta", 3), base.state.theta, atol=1e-8)
    np.testing.assert_allclose(_values(model, z, "Pf", 3), base.state.flows.p_from, atol=1e-8)
    np.testing.assert_allclose(model.bus_injections(z), base.state.p, atol=1e-8)
    assert np.max(np.abs(model.residual(z))) < 1e-10


def test_lin_ac_error_is_second_order(make_two_bus) -> None:
    net = make_two_bus(r=0.01, x=0.1, p_load=0.2, q_load=0.05)
    base = BasePoint.solve(net, nominal_injections(net))

    def error(delta: float) -> float:
        injections = StepInjections(p=np.array([0.0, -0.2 - delta]), q=np.array([0.0, -0.05]))
        model = build_lin_ac(net, base, injections)
        z = model.complete({})
        exact = solve_ac(net, injections)
        return max(
            float(np.max(np.abs(_values(model, z, "v", 2) - exact.v))),
            float(np.max(np.abs(_values(model, z, "theta", 2) - exact.theta))),
        )

    ratio = error(0.01) / error(0.005)
    assert 3.5 <= ratio <= 4.5


def test_lin_ac_error_is_second_order_in_random_directions(triangle: Network) -> None:
    nominal = nominal_injections(triangle)
    base = BasePoint.solve(triangle, nominal)
    rows = triangle.non_slack
    rng = np.random.default_rng(11)

    def error(direction: np.ndarray, size: float) -> float:
        p, q = nominal.p.copy(), nominal.q.copy()
        p[rows] += size * direction[: rows.size]
        q[rows] += size * direction[rows.size :]
        injections = StepInjections(p=p, q=q)
        model = build_lin_ac(triangle, base, injections)
        z = model.complete({})
        exact = solve_ac(triangle, injections)
        return max(
            float(np.max(np.abs(_values(model, z, "v", 3) - exact.v))),
            float(np.max(np.abs(_values(model, z, "theta", 3) - exact.theta))),
        )

    for _ in range(20):
        direction = rng.uniform(-1.0, 1.0, 2 * rows.size)
        direction /= np.max(np.abs(direction))
        ratio = error(direction, 0.01) / error(direction, 0.005)
        assert 3.5 <= ratio <= 4.5


def test_lin_ac_flat_base_and_zero_injections(ieee33: Network) -> None:
    zeros = StepInjections.zeros(ieee33.n_bus)
    base = BasePoint.solve(ieee33, zeros, label="flat")
    model = build_lin_ac(ieee33, base)
    z = model.complete(_storage_at_zero(ieee33))
    np.testing.assert_allclose(_values(model, z, "v", ieee33.n_bus), 1.0, atol=1e-10)
    np.testing.assert_allclose(_values(model, z, "theta", ieee33.n_bus), 0.0, atol=1e-10)


def test_build_model_dispatch_and_base_requirement(triangle: Network) -> None:
    injections = nominal_injections(triangle)
    assert build_model(ModelKind.DC, triangle, injections).kind is ModelKind.DC
    with pytest.raises(ValueError, match="needs a base point"):
        build_model(ModelKind.LIN_AC, triangle, injections)
    base = BasePoint.solve(triangle, injections)
    assert build_model(ModelKind.DC_ENHANCED, triangle, injections, base).kind is (
        ModelKind.DC_ENHANCED
    )


def test_model_kind_names() -> None:
    assert ModelKind.from_name("DC-Enhanced") is ModelKind.DC_ENHANCED
    assert ModelKind.from_name("lin_ac") is ModelKind.LIN_AC
    assert ModelKind.LIN_AC.label == "lin-ac"
    assert ModelKind.DC.lossless and not ModelKind.DC.needs_base
    assert ModelKind.LIN_AC.needs_base
    with pytest.raises(ValueError, match="Unknown model kind"):
        ModelKind.from_name("ac")


def test_feature_matrix_rows() -> None:
    assert FEATURE_HEADER[0] == "model"
    assert feature_matrix() == [
        FeatureRow("LinDistFlow", "radial", "squared", "-", "standard", "-"),
        FeatureRow("Classic DC PF", "meshed", "standard", "-", "-", "-"),
        FeatureRow("Enhanced DC PF", "meshed", "squared", "standard", "standard", "linearized"),
        FeatureRow("Linearized AC PF", "meshed", "standard", "standard", "standard", "linearized"),
    ]


def test_model_payload_splits_coupling_columns(two_bus: Network) -> None:
    model = build_dc(two_bus, nominal_injections(two_bus))
    payload = model.to_payload()
    assert payload["kind"] == "dc"
    assert payload["x_labels"] == ["p_pcc", "delta_e"]
    assert len(payload["A"]) == model.n_rows
    assert len(payload["A"][0]) == 2
    assert len(payload["B"][0]) == model.n_cols - 2
    assert payload["Y"]["upper"][payload["y_labels"].index("s[0]")] == pytest.approx(0.1)
    assert payload["var_index"]["p_pcc"] == model.column("p_pcc")


def test_complete_needs_enough_fixed_columns(two_bus: Network) -> None:
    model = build_dc(two_bus, nominal_injections(two_bus))
    with pytest.raises(ValueError, match="degrees of freedom"):
        model.complete({})
    with pytest.raises(ValueError, match="Unknown model variable"):
        model.complete({"s[9]": 0.0})


def test_complete_rejects_contradicting_values(make_two_bus) -> None:
    net = make_two_bus(p_load=0.1)
    model = build_dc(net, nominal_injections(net))
    with pytest.raises(InfeasibleModelError, match="contradict"):
        model.complete({"p_pcc": 0.5, "theta[1]": 0.0, "P[0]": 0.0, "theta[0]": 0.0})


def test_storage_energy_row(two_bus: Network) -> None:
    model = build_dc(two_bus, nominal_injections(two_bus), dt=0.5)
    z = model.complete({"s[0]": 0.08})
    assert z[model.column("delta_e")] == pytest.approx(0.04)
    assert z[model.column("p_pcc")] == pytest.approx(0.28)
    np.testing.assert_array_equal(model.storage_columns, [model.column("s[0]")])


def test_meshed_network_model_with_slack_injection() -> None:
    net = Network(
        buses=(Bus(id=0, kind=BusKind.SLACK, p_inj=-0.05), Bus(id=1, p_inj=-0.1)),
        branches=(Branch(0, 1, 0.01, 0.1), Branch(0, 1, 0.02, 0.2)),
    )
    model = build_dc(net, nominal_injections(net))
    z = model.complete({})
    assert z[model.column("p_pcc")] == pytest.approx(0.15)
    assert z[model.column("P[0]")] == pytest.approx(2 * z[model.column("P[1]")])
