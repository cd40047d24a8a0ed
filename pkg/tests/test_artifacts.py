from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from src.exporters.artifacts import (
    read_base_csv,
    read_envelope_json,
    read_schedule_csv,
    schedule_from_csv,
    verification_header,
    write_powerflow_csv,
    write_schedule_csv,
    write_schedule_summary,
)
from src.exporters.svg_plots import emit_svg, write_svg
from src.network.model import Network
from src.network.profiles import Profile, nominal_injections
from src.powerflow.ac import solve_ac
from src.scheduling.problem import ScheduleProblem, build_result

PROFILE = Profile.from_series([0.2, 0.3], [0.0, 0.0])


def _schedule(net: Network):
    prob = ScheduleProblem.for_network(net, PROFILE)
    return build_result(prob, "dc", np.array([0.25, 0.25]), np.array([0.05, 0.1]))


def test_emit_svg_is_deterministic_and_escaped() -> None:
    series = {"dc": [0.1, 0.2, 0.3], "a<b": [0.3, 0.2, 0.1]}
    first = emit_svg(series, title="PCC & SOC", y_label="P_pcc (p.u.)", x_values=[1, 2, 3])
    second = emit_svg(series, title="PCC & SOC", y_label="P_pcc (p.u.)", x_values=[1, 2, 3])
    assert first == second
    assert first.startswith("<svg ")
    assert first.endswith("</svg>\n")
    assert first.count("<polyline") == 2
    assert "PCC &amp; SOC" in first
    assert "a&lt;b" in first
    assert 'stroke-dasharray="6 3"' in first


def test_emit_svg_handles_flat_and_non_finite_series() -> None:
    document = emit_svg([("flat", [0.5, 0.5, float("nan")])])
    points = document.split('points="')[1].split('"')[0]
    assert len(points.split()) == 2


@pytest.mark.parametrize(
    ("series", "kwargs", "message"),
    [
        ({}, {}, "At least one series"),
        ({"a": []}, {}, "must not be empty"),
        ({"a": [1.0], "b": [1.0, 2.0]}, {}, "same length"),
        ({"a": [1.0, 2.0]}, {"x_values": [0.0]}, "x_values"),
    ],
)
def test_emit_svg_validation(series: dict, kwargs: dict, message: str) -> None:
    with pytest.raises(ValueError, match=message):
        emit_svg(series, **kwargs)


def test_write_svg_creates_parent(tmp_path: Path) -> None:
    path = tmp_path / "figs" / "fig_ppcc.svg"
    write_svg(path, emit_svg({"ac": [1.0, 2.0]}))
    assert path.read_text(encoding="utf-8").startswith("<svg")


def test_powerflow_csv_feeds_a_base_point(tmp_path: Path, ieee33: Network) -> None:
    injections = nominal_injections(ieee33)
    state = solve_ac(ieee33, injections)
    path = tmp_path / "pf.csv"
    assert write_powerflow_csv(path, state, ieee33) == 33 + 32 + 1
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["element", "index", "v", "theta", "p", "q", "ell"]
    assert rows[-1][0] == "total_losses"

    base = read_base_csv(path, ieee33, injections)
    assert base.label == "pf"
    np.testing.assert_allclose(base.state.v, state.v, atol=1e-9)
    np.testing.assert_allclose(base.state.flows.p_from, state.flows.p_from, atol=1e-7)


def test_read_base_csv_requires_every_bus(tmp_path: Path, two_bus: Network) -> None:
    path = tmp_path / "partial.csv"
    path.write_text("element,index,v,theta,p,q,ell\nbus,0,1.0,0.0,0,0,\n", encoding="utf-8")
    with pytest.raises(ValueError, match="every bus"):
        read_base_csv(path, two_bus, nominal_injections(two_bus))


def test_schedule_csv_and_summary(tmp_path: Path, two_bus: Network) -> None:
    result = _schedule(two_bus)
    path = tmp_path / "schedule.csv"
    assert write_schedule_csv(path, result) == 2
    write_schedule_summary(path.with_suffix(".json"), result)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "hour,p_pcc,e_agg,objective_contrib"

    p_pcc, e_agg = read_schedule_csv(path)
    np.testing.assert_allclose(p_pcc, [0.25, 0.25])
    np.testing.assert_allclose(e_agg, [0.05, 0.1])

    restored = schedule_from_csv(path, two_bus, PROFILE)
    assert restored.model_kind == "dc"
    np.testing.assert_allclose(restored.model_losses, result.model_losses)
    np.testing.assert_allclose(restored.storage_power, [[-0.05], [0.05]])


def test_schedule_csv_errors(tmp_path: Path) -> None:
    with pytest.raises(FileNotFoundError):
        read_schedule_csv(tmp_path / "absent.csv")
    path = tmp_path / "bad.csv"
    path.write_text("hour,p\n1,0.2\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header"):
        read_schedule_csv(path)
    path.write_text("hour,p_pcc,e_agg,objective_contrib\n", encoding="utf-8")
    with pytest.raises(ValueError, match="no rows"):
        read_schedule_csv(path)
    path.write_text("hour,p_pcc,e_agg,objective_contrib\n1,abc,0.1,0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="malformed"):
        read_schedule_csv(path)


def test_read_envelope_json_rejects_non_objects(tmp_path: Path) -> None:
    path = tmp_path / "envelope.json"
    path.write_text("[1, 2]\n", encoding="utf-8")
    with pytest.raises(ValueError, match="JSON object"):
        read_envelope_json(path)


def test_verification_header_lists_units() -> None:
    assert verification_header(2) == (
        "hour",
        "p_pcc",
        "soc_agg",
        "soc_unit_0",
        "soc_unit_1",
        "loss_realized",
        "loss_model",
        "loss_error",
        "cum_loss_error",
    )
