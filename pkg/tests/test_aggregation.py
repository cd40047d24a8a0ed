from __future__ import annotations

import numpy as np
import pytest

from src.aggregation.builder import build_envelope, lift_step_envelopes
from src.aggregation.envelope import CouplingSpace, EnvelopeKind, FlexibilityEnvelope
from src.aggregation.projection import (
    axis_directions,
    evenly_spaced_directions,
    project_fourier_motzkin,
    project_support,
    remove_redundant,
)
from src.models.builders import build_dc, build_lindistflow
from src.models.linear_model import LinearModel
from src.network.model import Network, StorageUnit
from src.network.profiles import Profile, load_profiles, nominal_injections, step_injections
from src.utils.errors import InfeasibleModelError, InstanceTooLargeError


def _sum_model() -> LinearModel:
    # x = y1 + y2 with y1 in [0, 1], y2 in [0, 2]
    return LinearModel(
        matrix=np.array([[1.0, -1.0, -1.0]]),
        rhs=np.zeros(1),
        lower=np.array([-np.inf, 0.0, 0.0]),
        upper=np.array([np.inf, 1.0, 2.0]),
        labels=("x", "y1", "y2"),
        coupling=("x",),
    )


def _box_slice(p_range: tuple[float, float], e_range: tuple[float, float]) -> FlexibilityEnvelope:
    return FlexibilityEnvelope(
        space=CouplingSpace.step(),
        normals=axis_directions(2),
        offsets=np.array([p_range[1], e_range[1], -p_range[0], -e_range[0]]),
    )


def test_evenly_spaced_directions_are_unit_vectors() -> None:
    directions = evenly_spaced_directions(8)
    assert directions.shape == (8, 2)
    np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)
    np.testing.assert_array_equal(directions[2], [0.0, 1.0])
    with pytest.raises(ValueError, match="three directions"):
        evenly_spaced_directions(2)


def test_coupling_space_labels() -> None:
    space = CouplingSpace.horizon(3, dt=0.5)
    assert space.labels[:3] == ("P_pcc[1]", "P_pcc[2]", "P_pcc[3]")
    assert space.labels[3:] == ("E_agg[1]", "E_agg[2]", "E_agg[3]")
    assert space.steps == 3
    assert space.index("E_agg[2]") == 4
    with pytest.raises(ValueError, match="Unknown coupling label"):
        space.index("Q_pcc[1]")
    with pytest.raises(ValueError, match="at least one step"):
        CouplingSpace.horizon(0)
    with pytest.raises(ValueError, match="unique"):
        CouplingSpace(("a", "a"))


def test_copper_plate_interval_from_axis_directions(make_two_bus) -> None:
    net = make_two_bus(r=0.0, x=0.1, p_load=0.5, storage=(StorageUnit.sized(1, 1.0),))
    model = build_dc(net, nominal_injections(net))
    envelope = project_support(model, CouplingSpace.step(), axis_directions(2))
    assert envelope.kind is EnvelopeKind.OUTER
    assert envelope.model_kind == "dc"
    low, high = envelope.interval("p_pcc")
    assert low == pytest.approx(-0.5, abs=1e-9)
    assert high == pytest.approx(1.5, abs=1e-9)


def test_support_envelope_contains_sampled_dispatches(ieee33: Network) -> None:
    model = build_lindistflow(ieee33, step_injections(ieee33, 0.3, 0.05))
    envelope = project_support(model, CouplingSpace.step(), evenly_spaced_directions(64))
    assert envelope.n_halfspaces == 64
    assert envelope.dropped_directions == 0

    condensation = model.condense()
    free_storage = [
        int(np.flatnonzero(condensation.free == column)[0]) for column in model.storage_columns
    ]
    assert len(free_storage) == condensation.n_free

    rng = np.random.default_rng(11)
    p_max = ieee33.storage_p_max
    p_col, e_col = model.column("p_pcc"), model.column("delta_e")
    checked = 0
    for _ in range(1000):
        z_free = np.zeros(condensation.n_free)
        z_free[free_storage] = rng.uniform(-p_max, p_max)
        z = condensation.expand(z_free)
        if not model.is_feasible(z):
            continue
        checked += 1
        assert envelope.contains(np.array([z[p_col], z[e_col]]), tolerance=1e-7)
    assert checked > 900


def test_more_directions_never_enlarge_the_envelope(ieee33: Network) -> None:
    model = build_lindistflow(ieee33, step_injections(ieee33, 0.25, 0.0))
    coarse = project_support(model, CouplingSpace.step(), evenly_spaced_directions(8))
    fine = project_support(model, CouplingSpace.step(), evenly_spaced_directions(64))
    rng = np.random.default_rng(5)
    for direction in rng.normal(size=(20, 2)):
        assert fine.support(direction) <= coarse.support(direction) + 1e-9


def test_project_support_parallel_matches_serial(two_bus: Network) -> None:
    model = build_lindistflow(two_bus, nominal_injections(two_bus))
    serial = project_support(model, CouplingSpace.step(), max_workers=1)
    threaded = project_support(model, CouplingSpace.step(), max_workers=4)
    np.testing.assert_allclose(serial.offsets, threaded.offsets)
    np.testing.assert_array_equal(serial.normals, threaded.normals)


def test_project_support_drops_unbounded_directions() -> None:
    model = LinearModel(
        matrix=np.array([[1.0, -1.0]]),
        rhs=np.zeros(1),
        lower=np.array([-np.inf, 0.0]),
        upper=np.array([np.inf, np.inf]),
        labels=("x", "y"),
        coupling=("x",),
    )
    envelope = project_support(model, CouplingSpace(("x",)), axis_directions(1))
    assert envelope.dropped_directions == 1
    assert envelope.n_halfspaces == 1
    np.testing.assert_allclose(envelope.normals, [[-1.0]])
    assert envelope.offsets[0] == pytest.approx(0.0, abs=1e-12)
    assert envelope.support(np.array([1.0])) == float("inf")


def test_project_support_rejects_infeasible_model(make_two_bus) -> None:
    net = make_two_bus(r=0.1, x=0.1, p_load=2.0, storage=(StorageUnit.sized(1, 0.1),))
    with pytest.raises(InfeasibleModelError):
        project_support(build_lindistflow(net, nominal_injections(net)), CouplingSpace.step())


def test_fourier_motzkin_sum_of_intervals() -> None:
    envelope = project_fourier_motzkin(_sum_model(), CouplingSpace(("x",)))
    assert envelope.kind is EnvelopeKind.EXACT
    low, high = envelope.interval("x")
    assert low == pytest.approx(0.0, abs=1e-12)
    assert high == pytest.approx(3.0, abs=1e-12)
    assert envelope.n_halfspaces == 2


def test_fourier_motzkin_fixed_point_is_two_opposing_halfspaces() -> None:
    model = LinearModel(
        matrix=np.array([[1.0, 0.0]]),
        rhs=np.array([1.0]),
        lower=np.array([-np.inf, 0.0]),
        upper=np.array([np.inf, 1.0]),
        labels=("x", "y"),
        coupling=("x",),
    )
    envelope = project_fourier_motzkin(model, CouplingSpace(("x",)))
    assert envelope.n_halfspaces == 2
    np.testing.assert_allclose(sorted(envelope.normals.ravel()), [-1.0, 1.0])
    assert envelope.interval("x") == pytest.approx((1.0, 1.0))


def test_fourier_motzkin_instance_cap() -> None:
    with pytest.raises(InstanceTooLargeError, match="limited to 2 variables"):
        project_fourier_motzkin(_sum_model(), CouplingSpace(("x",)), max_variables=2)


def test_fourier_motzkin_detects_infeasible_model() -> None:
    model = LinearModel(
        matrix=np.array([[1.0, -1.0, -1.0]]),
        rhs=np.zeros(1),
        lower=np.array([5.0, 0.0, 0.0]),
        upper=np.array([np.inf, 1.0, 2.0]),
        labels=("x", "y1", "y2"),
        coupling=("x",),
    )
    with pytest.raises(InfeasibleModelError):
        project_fourier_motzkin(model, CouplingSpace(("x",)))


def test_voltage_limited_interval_matches_grid_scan(make_two_bus) -> None:
    # u1 = 1 - 0.2 * p_pcc must stay within [0.95^2, 1.05^2]; s in [-0.5, 0.5].
    net = make_two_bus(r=0.1, x=0.1, p_load=0.2, storage=(StorageUnit.sized(1, 0.5),))
    model = build_lindistflow(net, nominal_injections(net))
    exact = project_fourier_motzkin(model, CouplingSpace.step())
    low, high = exact.interval("p_pcc")
    assert low == pytest.approx(-0.3, abs=1e-9)
    assert high == pytest.approx(0.4875, abs=1e-9)

    feasible = []
    for power in np.linspace(-0.5, 0.5, 1001):
        z = model.complete({"s[0]": power})
        if model.is_feasible(z):
            feasible.append(z[model.column("p_pcc")])
    assert min(feasible) == pytest.approx(low, abs=1e-3)
    assert max(feasible) == pytest.approx(high, abs=1e-3)

    outer = project_support(model, CouplingSpace.step(), evenly_spaced_directions(64))
    np.testing.assert_allclose(outer.interval("p_pcc"), (low, high), atol=1e-6)
    np.testing.assert_allclose(outer.interval("delta_e"), exact.interval("delta_e"), atol=1e-6)


def test_remove_redundant_drops_implied_rows() -> None:
    normals = np.array([[1.0], [1.0], [-1.0]])
    offsets = np.array([1.0, 2.0, 0.0])
    kept_normals, kept_offsets = remove_redundant(normals, offsets)
    np.testing.assert_allclose(kept_normals, [[1.0], [-1.0]])
    np.testing.assert_allclose(kept_offsets, [1.0, 0.0])
    with pytest.raises(InfeasibleModelError, match="no common point"):
        remove_redundant(np.array([[1.0], [-1.0]]), np.array([0.0, -1.0]))


def test_lift_step_envelopes_couples_energy() -> None:
    step = _box_slice((0.0, 1.0), (-0.1, 0.1))
    envelope = lift_step_envelopes([step, step], e_init=0.5, e_final=0.5, e_cap=1.0)
    assert envelope.space.labels == ("P_pcc[1]", "P_pcc[2]", "E_agg[1]", "E_agg[2]")
    assert envelope.metadata["step_halfspaces"] == [4, 4]
    assert envelope.n_halfspaces == 8 + 4 + 2
    assert envelope.interval("E_agg[1]") == pytest.approx((0.4, 0.6))
    assert envelope.interval("E_agg[2]") == pytest.approx((0.5, 0.5))
    assert envelope.contains(np.array([0.3, 0.7, 0.6, 0.5]))
    assert not envelope.contains(np.array([0.3, 0.7, 0.6, 0.4]))


def test_lift_step_envelopes_validates_slices() -> None:
    with pytest.raises(ValueError, match="At least one"):
        lift_step_envelopes([], e_init=0.0, e_final=0.0, e_cap=0.0)
    wrong = FlexibilityEnvelope(
        space=CouplingSpace(("a", "b")), normals=np.eye(2), offsets=np.ones(2)
    )
    with pytest.raises(ValueError, match="not over"):
        lift_step_envelopes([wrong], e_init=0.0, e_final=0.0, e_cap=0.0)


def test_storage_only_envelope_follows_ramp_cones(make_two_bus) -> None:
    unit = StorageUnit(bus=1, p_max=0.05, e_cap=0.2)
    net = make_two_bus(r=0.0, x=0.1, p_load=0.0, storage=(unit,))
    envelope = build_envelope(net, "dc", None, Profile.constant(0.0, horizon=4), 4)
    assert envelope.interval("E_agg[1]") == pytest.approx((0.05, 0.15), abs=1e-7)
    assert envelope.interval("E_agg[2]") == pytest.approx((0.0, 0.2), abs=1e-7)
    assert envelope.interval("E_agg[3]") == pytest.approx((0.05, 0.15), abs=1e-7)
    assert envelope.interval("E_agg[4]") == pytest.approx((0.1, 0.1), abs=1e-7)
    assert envelope.interval("P_pcc[1]") == pytest.approx((-0.05, 0.05), abs=1e-7)


def test_single_step_without_storage_collapses_to_net_load(make_two_bus) -> None:
    net = make_two_bus(r=0.0, x=0.1, p_load=0.2)
    envelope = build_envelope(net, "dc", None, Profile.constant(0.2, horizon=1), 1)
    assert envelope.interval("P_pcc[1]") == pytest.approx((0.2, 0.2), abs=1e-9)
    assert envelope.interval("E_agg[1]") == pytest.approx((0.0, 0.0), abs=1e-12)


def test_exact_and_outer_envelopes_agree_on_two_bus(make_two_bus) -> None:
    net = make_two_bus(r=0.1, x=0.1, p_load=0.2, storage=(StorageUnit.sized(1, 0.5),))
    profile = Profile.from_series([0.2, 0.4], [0.0, 0.0])
    outer = build_envelope(net, "lindistflow", None, profile, 2)
    exact = build_envelope(net, "lindistflow", None, profile, 2, method="fourier_motzkin")
    assert exact.kind is EnvelopeKind.EXACT
    for label in outer.space.labels:
        np.testing.assert_allclose(outer.interval(label), exact.interval(label), atol=1e-6)


def test_build_envelope_contains_idle_storage_trajectory(ieee33: Network) -> None:
    profile = load_profiles()
    envelope = build_envelope(ieee33, "lindistflow", None, profile, 3, directions=16)
    assert envelope.space.steps == 3
    assert envelope.metadata["step_halfspaces"] == [16, 16, 16]
    idle = np.concatenate([profile.net_load[:3], np.full(3, ieee33.e_agg_init)])
    assert envelope.contains(idle)


def test_build_envelope_rejects_unknown_method(two_bus: Network) -> None:
    with pytest.raises(ValueError, match="Unknown projection method"):
        build_envelope(two_bus, "dc", None, Profile.constant(0.2, horizon=1), 1, method="vertex")


def test_envelope_payload_round_trip(two_bus: Network) -> None:
    envelope = build_envelope(two_bus, "dc", None, Profile.constant(0.2, horizon=2), 2)
    payload = envelope.to_payload()
    assert payload["labels"] == ["P_pcc[1]", "P_pcc[2]", "E_agg[1]", "E_agg[2]"]
    assert payload["provenance"]["model_kind"] == "dc"
    assert set(payload["halfspaces"][0]) == {"n", "h"}
    restored = FlexibilityEnvelope.from_payload(payload)
    np.testing.assert_allclose(restored.normals, envelope.normals)
    np.testing.assert_allclose(restored.offsets, envelope.offsets)
    assert restored.kind is envelope.kind
    with pytest.raises(ValueError, match="missing key"):
        FlexibilityEnvelope.from_payload({"labels": payload["labels"]})


def test_empty_envelope_support_raises() -> None:
    envelope = FlexibilityEnvelope(
        space=CouplingSpace(("x",)), normals=np.array([[1.0], [-1.0]]), offsets=[0.0, -1.0]
    )
    with pytest.raises(InfeasibleModelError, match="empty"):
        envelope.support(np.array([1.0]))
