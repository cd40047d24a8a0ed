from __future__ import annotations

import numpy as np
import pytest

from src.models.base_point import BasePoint
from src.models.builders import build_dc, build_enhanced_dc, build_lin_ac, build_lindistflow
from src.models.linear_model import feature_matrix
from src.network.model import Network, StorageUnit
from src.network.profiles import Profile, nominal_injections, profile_injections
from src.scheduling.benchmark import schedule_ac_benchmark
from src.scheduling.dispatch import schedule_full_linear
from src.scheduling.losses import attach_model_losses
from src.scheduling.problem import ScheduleProblem, ScheduleResult, build_result
from src.solvers.lp import SolverStatus
from src.verification.comparison import AC_FEATURES, comparison_report
from src.verification.replay import verify_schedule
from src.verification.report import ViolationKind, loss_error_series

PROFILE = Profile.from_series([0.3, 0.1, 0.2, 0.2], [0.0, 0.0, 0.0, 0.0])
PEAK_PROFILE = Profile.from_series([2.0, 0.0], [0.0, 0.0])


def _battery_net(make_two_bus, r: float) -> Network:
    unit = StorageUnit(bus=1, p_max=1.0, e_cap=2.0)
    return make_two_bus(r=r, x=0.1, p_load=1.0, storage=(unit,), v_min=0.8)


def _linear_schedule(net: Network, profile: Profile, builder=build_dc) -> ScheduleResult:
    prob = ScheduleProblem.for_network(net, profile)
    models = [builder(net, injections) for injections in profile_injections(net, profile)]
    result = schedule_full_linear(prob, models)
    assert result.ok
    return result


def test_lossless_network_keeps_soc_on_plan(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.0)
    schedule = _linear_schedule(net, PROFILE)
    report = verify_schedule(net, schedule, PROFILE)
    np.testing.assert_allclose(report.loss_error, 0.0, atol=1e-10)
    np.testing.assert_allclose(report.soc_agg, schedule.e_agg / net.e_agg_cap, atol=1e-8)
    assert report.final_soc == pytest.approx(0.5, abs=1e-8)
    assert report.violations == ()
    assert report.has_negative_losses is None


def test_lossless_schedule_on_lossy_network_drifts_low(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.05)
    schedule = _linear_schedule(net, PROFILE)
    report = verify_schedule(net, schedule, PROFILE)
    assert report.final_soc < report.soc_target
    assert report.final_soc_miss < -0.1
    per_step, cumulative = loss_error_series(report)
    assert np.all(per_step > 0.0)
    assert np.all(np.diff(cumulative) > 0.0)
    assert cumulative[-1] == pytest.approx(per_step.sum() * report.dt)
    misses = report.violations_of(ViolationKind.FINAL_SOC_MISS)
    assert len(misses) == 1
    assert misses[0].step == 4


def test_energy_balance_holds_at_every_verified_step(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.05)
    schedule = _linear_schedule(net, PROFILE)
    report = verify_schedule(net, schedule, PROFILE)
    balance = (
        report.p_pcc - PROFILE.net_load - report.storage_power - report.realized_losses
    )
    np.testing.assert_allclose(balance, 0.0, atol=1e-7)


def test_soc_integration_is_exact(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.05)
    report = verify_schedule(net, _linear_schedule(net, PROFILE), PROFILE)
    energy = net.e_agg_init + np.cumsum(report.storage_power * report.dt)
    np.testing.assert_allclose(report.soc_agg, energy / net.e_agg_cap, rtol=0.0, atol=1e-15)
    np.testing.assert_allclose(report.soc_units[:, 0], report.soc_agg, atol=1e-15)


def test_drained_storage_reports_soc_below_zero(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.05)
    schedule = _linear_schedule(net, PEAK_PROFILE)
    report = verify_schedule(net, schedule, PEAK_PROFILE)
    below = report.violations_of(ViolationKind.SOC_BELOW_ZERO)
    assert [violation.step for violation in below] == [1]
    assert below[0].magnitude == pytest.approx(-report.soc_agg[0])
    steps = [violation.step for violation in report.violations]
    assert steps == sorted(steps)
    assert report.to_payload()["violations"][0]["kind"] == "soc_below_zero"


def test_ac_benchmark_schedule_verifies_cleanly(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.05)
    prob = ScheduleProblem.for_network(net, PROFILE)
    schedule = schedule_ac_benchmark(prob, net)
    report = verify_schedule(net, schedule, PROFILE)
    assert abs(report.final_soc_miss) <= 0.1
    assert report.violations == ()
    assert abs(report.cumulative_loss_error[-1]) <= 1e-5
    assert report.has_negative_losses is False


def test_voltage_violations_are_recorded_not_clipped(make_two_bus) -> None:
    unit = StorageUnit(bus=1, p_max=1.0, e_cap=2.0)
    net = make_two_bus(r=0.05, x=0.1, p_load=1.0, storage=(unit,), v_min=0.995)
    schedule = _linear_schedule(net, PROFILE)
    report = verify_schedule(net, schedule, PROFILE)
    voltage = report.violations_of(ViolationKind.VOLTAGE)
    assert len(voltage) == 4
    assert report.max_voltage_excursion > 0.0
    np.testing.assert_allclose(report.p_pcc, schedule.p_pcc)


def test_failed_schedule_is_rejected(two_bus: Network) -> None:
    failed = ScheduleResult(status=SolverStatus.INFEASIBLE, model_kind="dc")
    with pytest.raises(ValueError, match="infeasible"):
        verify_schedule(two_bus, failed, PROFILE)


def test_comparison_report_columns(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.05)
    dc = verify_schedule(net, _linear_schedule(net, PROFILE), PROFILE)
    lindistflow = verify_schedule(
        net, _linear_schedule(net, PROFILE, build_lindistflow), PROFILE
    )
    ac = verify_schedule(
        net, schedule_ac_benchmark(ScheduleProblem.for_network(net, PROFILE), net), PROFILE
    )
    rows = comparison_report({"dc": dc, "lindistflow": lindistflow, "ac": ac})
    assert [row.name for row in rows] == ["dc", "lindistflow", "ac"]
    assert [row.negative_loss for row in rows] == ["n/a", "n/a", "no"]
    assert rows[0].features.model == "Classic DC PF"
    assert rows[2].features == AC_FEATURES
    assert rows[0].cumulative_loss_error > rows[2].cumulative_loss_error
    assert len(rows[0].as_tuple()) == 11


def test_comparison_report_needs_two_campaigns(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.0)
    report = verify_schedule(net, _linear_schedule(net, PROFILE), PROFILE)
    with pytest.raises(ValueError, match="need ≥ 2 campaigns"):
        comparison_report([report])


def test_dispatch_far_from_base_reports_negative_losses(make_two_bus) -> None:
    unit = StorageUnit.sized(1, 0.5)
    net = make_two_bus(r=0.01, x=0.1, p_load=0.2, storage=(unit,), v_min=0.8, v_max=1.2)
    base = BasePoint.solve(net, nominal_injections(net))
    profile = Profile.from_series([0.05, 0.05], [0.0, 0.0])
    prob = ScheduleProblem.for_network(net, profile)
    charging = np.array([-0.4, 0.4])
    exporting = build_result(
        prob,
        "dc-enhanced",
        profile.net_load + charging,
        prob.e_init + np.cumsum(charging),
    )
    models = [
        build_enhanced_dc(net, base, injections)
        for injections in profile_injections(net, profile)
    ]
    schedule = attach_model_losses(exporting, models)
    assert schedule.negative_loss_steps == (1,)
    assert schedule.model_losses[1] > 0.0

    report = verify_schedule(net, schedule, profile)
    assert report.has_negative_losses is True
    assert report.negative_branch_steps == (1,)
    assert report.to_payload()["negative_loss_steps"] == [1]

    ac = verify_schedule(net, schedule_ac_benchmark(prob, net), profile)
    rows = comparison_report({"dc-enhanced": report, "ac": ac})
    assert [row.negative_loss for row in rows] == ["yes", "no"]


def test_linearized_schedule_near_base_reports_no_negative_losses(make_two_bus) -> None:
    net = _battery_net(make_two_bus, r=0.05)
    base = BasePoint.solve(net, nominal_injections(net))
    profile = Profile.from_series([0.9, 1.1, 1.0], [0.0, 0.0, 0.0])
    models = [build_lin_ac(net, base, injections) for injections in profile_injections(net, profile)]
    schedule = schedule_full_linear(ScheduleProblem.for_network(net, profile), models)
    assert schedule.ok
    report = verify_schedule(net, schedule, profile)
    assert report.has_negative_losses is False
    assert report.negative_branch_steps == ()
    np.testing.assert_allclose(report.model_losses, schedule.model_losses)


def test_feature_rows_match_the_model_table() -> None:
    rows = [row.as_tuple() for row in feature_matrix()] + [AC_FEATURES.as_tuple()]
    assert rows == [
        ("LinDistFlow", "radial", "squared", "-", "standard", "-"),
        ("Classic DC PF", "meshed", "standard", "-", "-", "-"),
        ("Enhanced DC PF", "meshed", "squared", "standard", "standard", "linearized"),
        ("Linearized AC PF", "meshed", "standard", "standard", "standard", "linearized"),
        ("AC PF", "meshed", "standard", "standard", "standard", "exact"),
    ]
