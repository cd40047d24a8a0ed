from __future__ import annotations

import numpy as np
import pytest

from src.aggregation.builder import build_envelope, build_step_models
from src.models.base_point import BasePoint
from src.models.builders import build_dc, build_enhanced_dc, build_lindistflow
from src.network.model import Network, StorageUnit
from src.network.profiles import (
    Profile,
    StepInjections,
    load_profiles,
    nominal_injections,
    profile_injections,
)
from src.powerflow.ac import pcc_exchange, solve_ac
from src.scheduling.benchmark import schedule_ac_benchmark
from src.scheduling.dispatch import schedule_full_linear, schedule_over_envelope
from src.scheduling.losses import evaluate_step_losses
from src.scheduling.problem import ScheduleProblem
from src.solvers.lp import SolverStatus
from src.utils.errors import ConvergenceError

PEAK_PROFILE = Profile.from_series([2.0, 0.0], [0.0, 0.0])
FLAT_PROFILE = Profile.from_series([0.3, 0.1, 0.2, 0.2], [0.0, 0.0, 0.0, 0.0])


def _battery_two_bus(make_two_bus, *, r: float = 0.0, **unit: float) -> Network:
    storage = StorageUnit(bus=1, p_max=unit.get("p_max", 1.0), e_cap=unit.get("e_cap", 2.0))
    return make_two_bus(r=r, x=0.1, p_load=1.0, storage=(storage,), v_min=0.8)


def _dc_models(net: Network, profile: Profile):
    return [build_dc(net, injections) for injections in profile_injections(net, profile)]


def test_problem_validation_and_helpers(two_bus: Network) -> None:
    with pytest.raises(ValueError, match="alpha"):
        ScheduleProblem(profile=FLAT_PROFILE, alpha=-1.0)
    with pytest.raises(ValueError, match="Storage weight"):
        ScheduleProblem(profile=FLAT_PROFILE, storage_weight=-0.1)
    prob = ScheduleProblem.for_network(two_bus, load_profiles(), horizon=24)
    assert prob.is_day_ahead
    assert prob.e_init == pytest.approx(0.1)
    assert prob.e_final == pytest.approx(0.1)
    np.testing.assert_allclose(prob.shares, [1.0])
    short = ScheduleProblem.for_network(two_bus, load_profiles(), horizon=3)
    assert not short.is_day_ahead
    costs = short.step_costs(np.array([1.0, 2.0, 0.0]), np.array([0.1, 0.1, 0.1]))
    np.testing.assert_allclose(costs, [1.0, 4.0, 0.0])


def test_envelope_schedule_shaves_peak(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus)
    prob = ScheduleProblem.for_network(net, PEAK_PROFILE)
    envelope = build_envelope(net, "dc", None, PEAK_PROFILE, 2)
    result = schedule_over_envelope(prob, envelope)
    assert result.ok
    assert result.model_kind == "dc"
    np.testing.assert_allclose(result.p_pcc, [1.0, 1.0], atol=1e-6)
    np.testing.assert_allclose(result.e_agg, [0.0, 1.0], atol=1e-6)
    assert result.objective == pytest.approx(2.0, abs=1e-6)
    np.testing.assert_allclose(result.step_costs, [1.0, 1.0], atol=1e-6)


def test_full_linear_schedule_matches_envelope_schedule(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus)
    prob = ScheduleProblem.for_network(net, PEAK_PROFILE)
    result = schedule_full_linear(prob, _dc_models(net, PEAK_PROFILE))
    assert result.ok
    np.testing.assert_allclose(result.p_pcc, [1.0, 1.0], atol=1e-6)
    assert result.storage_power is not None
    np.testing.assert_allclose(result.storage_power, [[-1.0], [1.0]], atol=1e-6)
    np.testing.assert_allclose(result.model_losses, 0.0, atol=1e-9)


def test_ample_storage_flattens_import(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus)
    prob = ScheduleProblem.for_network(net, FLAT_PROFILE)
    result = schedule_full_linear(prob, _dc_models(net, FLAT_PROFILE))
    assert result.ok
    np.testing.assert_allclose(result.p_pcc, 0.2, atol=1e-6)
    np.testing.assert_allclose(result.e_agg, [0.9, 1.0, 1.0, 1.0], atol=1e-6)
    assert result.kkt_residual < 1e-6


def test_storage_dynamics_hold_in_every_result(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus)
    prob = ScheduleProblem.for_network(net, FLAT_PROFILE, dt=1.0)
    result = schedule_full_linear(prob, _dc_models(net, FLAT_PROFILE))
    assert result.storage_power is not None
    delta = np.diff(np.concatenate([[prob.e_init], result.e_agg]))
    np.testing.assert_allclose(delta - prob.dt * result.storage_power.sum(axis=1), 0.0, atol=1e-9)
    assert result.e_agg[-1] / prob.e_cap == pytest.approx(0.5)


def test_without_storage_import_equals_net_load(make_two_bus) -> None:
    net = make_two_bus(r=0.0, x=0.1, p_load=1.0)
    profile = Profile.from_series([0.5, 0.8], [0.0, 0.0])
    prob = ScheduleProblem.for_network(net, profile)
    full = schedule_full_linear(prob, _dc_models(net, profile))
    envelope = schedule_over_envelope(prob, build_envelope(net, "dc", None, profile, 2))
    np.testing.assert_allclose(full.p_pcc, [0.5, 0.8], atol=1e-7)
    np.testing.assert_allclose(envelope.p_pcc, [0.5, 0.8], atol=1e-6)


def test_zero_cost_accepts_any_feasible_point(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus)
    prob = ScheduleProblem.for_network(net, FLAT_PROFILE, alpha=0.0, beta=0.0)
    result = schedule_full_linear(prob, _dc_models(net, FLAT_PROFILE))
    assert result.status is SolverStatus.OPTIMAL
    assert result.objective == pytest.approx(0.0, abs=1e-12)


def test_unreachable_final_energy_is_infeasible(make_two_bus) -> None:
    unit = StorageUnit(bus=1, p_max=0.1, e_cap=2.0, soc_init=0.0, soc_final=1.0)
    net = make_two_bus(r=0.0, x=0.1, p_load=1.0, storage=(unit,))
    prob = ScheduleProblem.for_network(net, PEAK_PROFILE)
    result = schedule_full_linear(prob, _dc_models(net, PEAK_PROFILE))
    assert result.status is SolverStatus.INFEASIBLE
    assert not result.ok
    assert result.horizon == 0


def test_schedule_input_checks(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus)
    prob = ScheduleProblem.for_network(net, PEAK_PROFILE)
    with pytest.raises(ValueError, match="Expected 2 step models"):
        schedule_full_linear(prob, _dc_models(net, PEAK_PROFILE)[:1])
    envelope = build_envelope(net, "dc", None, FLAT_PROFILE, 4)
    with pytest.raises(ValueError, match="2-step horizon"):
        schedule_over_envelope(prob, envelope)


def test_exact_envelope_preserves_full_linear_optimum(make_two_bus) -> None:
    unit = StorageUnit.sized(1, 0.5)
    net = make_two_bus(r=0.1, x=0.1, p_load=0.2, storage=(unit,))
    profile = Profile.from_series([0.2, 0.4, 0.1], [0.0, 0.0, 0.0])
    prob = ScheduleProblem.for_network(net, profile)
    exact = build_envelope(net, "lindistflow", None, profile, 3, method="fourier_motzkin")
    over_envelope = schedule_over_envelope(prob, exact)
    models = [build_lindistflow(net, inj) for inj in profile_injections(net, profile)]
    full = schedule_full_linear(prob, models)
    assert over_envelope.ok and full.ok
    assert abs(over_envelope.objective - full.objective) <= 1e-5
    np.testing.assert_allclose(over_envelope.p_pcc, full.p_pcc, atol=1e-4)


def test_proportional_split_follows_p_max(make_two_bus) -> None:
    storage = (StorageUnit.sized(1, 0.25), StorageUnit.sized(1, 0.75))
    net = make_two_bus(r=0.0, x=0.1, p_load=1.0, storage=storage)
    prob = ScheduleProblem.for_network(net, PEAK_PROFILE)
    result = schedule_full_linear(prob, _dc_models(net, PEAK_PROFILE), proportional_split=True)
    assert result.ok and result.storage_power is not None
    np.testing.assert_allclose(result.storage_power[:, 1], 3.0 * result.storage_power[:, 0])


def test_payload_lists_trajectories(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus)
    result = schedule_full_linear(
        ScheduleProblem.for_network(net, PEAK_PROFILE), _dc_models(net, PEAK_PROFILE)
    )
    payload = result.to_payload()
    assert payload["model"] == "dc"
    assert payload["status"] == "optimal"
    assert payload["horizon"] == 2
    assert len(payload["p_pcc"]) == 2


def test_ac_benchmark_on_lossless_line_matches_dc(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus)
    prob = ScheduleProblem.for_network(net, PEAK_PROFILE)
    benchmark = schedule_ac_benchmark(prob, net)
    dc = schedule_full_linear(prob, _dc_models(net, PEAK_PROFILE))
    assert benchmark.ok
    assert benchmark.model_kind == "ac"
    np.testing.assert_allclose(benchmark.p_pcc, dc.p_pcc, atol=1e-5)
    assert benchmark.objective == pytest.approx(dc.objective, abs=1e-5)


def test_ac_benchmark_is_ac_consistent(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus, r=0.05)
    prob = ScheduleProblem.for_network(net, FLAT_PROFILE)
    benchmark = schedule_ac_benchmark(prob, net, max_workers=2)
    assert benchmark.ok
    assert benchmark.iterations >= 1
    assert benchmark.storage_power is not None
    for t, injections in enumerate(profile_injections(net, FLAT_PROFILE)):
        injections.p[1] -= benchmark.storage_power[t, 0]
        state = solve_ac(net, injections)
        assert pcc_exchange(state, injections, net) == pytest.approx(benchmark.p_pcc[t], abs=1e-6)
    assert np.all(benchmark.model_losses > 0.0)


def test_ac_benchmark_without_storage_reports_ac_exchange(ieee33: Network) -> None:
    net = ieee33.without_storage()
    profile = load_profiles().head(3)
    result = schedule_ac_benchmark(ScheduleProblem.for_network(net, profile), net)
    assert result.ok
    for t, injections in enumerate(profile_injections(net, profile)):
        expected = pcc_exchange(solve_ac(net, injections), injections, net)
        assert result.p_pcc[t] == pytest.approx(expected, abs=1e-8)
        assert result.p_pcc[t] > profile.net_load[t]


def test_ac_benchmark_zero_profile(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus, r=0.01)
    profile = Profile.constant(0.0, horizon=2)
    result = schedule_ac_benchmark(ScheduleProblem.for_network(net, profile), net)
    assert result.ok
    np.testing.assert_allclose(result.p_pcc, 0.0, atol=1e-9)
    assert result.objective == pytest.approx(0.0, abs=1e-12)


def test_ac_benchmark_reports_non_convergence(make_two_bus) -> None:
    net = _battery_two_bus(make_two_bus, r=0.05)
    prob = ScheduleProblem.for_network(net, PEAK_PROFILE)
    with pytest.raises(ConvergenceError, match="did not settle after 1 iterations"):
        schedule_ac_benchmark(prob, net, max_iterations=1)


@pytest.mark.slow
def test_lossless_schedules_import_less_than_ac_benchmark(ieee33: Network) -> None:
    profile = load_profiles().head(4)
    prob = ScheduleProblem.for_network(ieee33, profile)
    dc = schedule_full_linear(prob, _dc_models(ieee33, profile))
    benchmark = schedule_ac_benchmark(prob, ieee33)
    assert dc.ok and benchmark.ok
    assert benchmark.p_pcc.sum() > dc.p_pcc.sum()
    assert benchmark.objective > dc.objective


def test_envelope_schedule_reports_step_model_losses(make_two_bus) -> None:
    net = make_two_bus(r=0.05, x=0.1, p_load=0.2, storage=(StorageUnit.sized(1, 0.1),))
    profile = Profile.from_series([0.2, 0.3, 0.1], [0.0, 0.0, 0.0])
    prob = ScheduleProblem.for_network(net, profile)
    models = build_step_models(net, "dc-enhanced", None, profile, 3)
    envelope = build_envelope(net, "dc-enhanced", None, profile, 3)
    result = schedule_over_envelope(prob, envelope, models)
    assert result.ok and result.storage_power is not None

    expected = [
        model.losses(model.complete({"s[0]": float(power)})).total_p
        for model, power in zip(models, result.storage_power[:, 0])
    ]
    np.testing.assert_allclose(result.model_losses, expected, atol=1e-12)
    assert np.all(result.model_losses > 0.0)
    assert result.negative_loss_steps == ()
    assert result.negative_branch_steps == ()


def test_full_linear_losses_match_the_solved_points(make_two_bus) -> None:
    net = make_two_bus(r=0.05, x=0.1, p_load=0.2, storage=(StorageUnit.sized(1, 0.1),))
    profile = Profile.from_series([0.2, 0.3, 0.1], [0.0, 0.0, 0.0])
    prob = ScheduleProblem.for_network(net, profile)
    models = build_step_models(net, "lin-ac", None, profile, 3)
    result = schedule_full_linear(prob, models)
    assert result.ok and result.storage_power is not None
    charging = result.storage_power.sum(axis=1)
    np.testing.assert_allclose(
        result.p_pcc - profile.net_load - charging, result.model_losses, atol=1e-9
    )


def test_step_losses_flag_dispatch_far_from_base(make_two_bus) -> None:
    net = make_two_bus(r=0.01, x=0.1, p_load=0.2)
    base = BasePoint.solve(net, nominal_injections(net))
    exporting = StepInjections(p=np.array([0.0, 0.3]), q=np.zeros(2))
    models = [build_enhanced_dc(net, base), build_enhanced_dc(net, base, exporting)]
    losses = evaluate_step_losses(models, np.zeros((2, 0)))
    assert losses.total[0] > 0.0
    assert losses.total[1] < 0.0
    assert losses.negative_steps == (2,)
    assert losses.negative_branch_steps == (2,)
    with pytest.raises(ValueError, match="storage powers for 2 steps"):
        evaluate_step_losses(models, np.zeros((1, 0)))
    with pytest.raises(ValueError, match="0 storage columns"):
        evaluate_step_losses(models, np.zeros((2, 1)))


@pytest.mark.slow
def test_full_linear_day_ahead_on_campus_feeder(campus: Network) -> None:
    profile = load_profiles().head(24)
    prob = ScheduleProblem.for_network(campus, profile)
    models = build_step_models(campus, "dc", None, profile, 24)
    full = schedule_full_linear(prob, models)
    assert full.status is SolverStatus.OPTIMAL
    assert full.kkt_residual < 1e-6
    assert full.e_agg[-1] == pytest.approx(prob.e_final, abs=1e-8)

    envelope = schedule_over_envelope(prob, build_envelope(campus, "dc", None, profile, 24))
    assert envelope.ok
    assert envelope.objective <= full.objective + 1e-6
