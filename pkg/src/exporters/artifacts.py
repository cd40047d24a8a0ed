"""CSV and JSON artifacts written by the command line and the campaign driver."""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..aggregation.envelope import FlexibilityEnvelope
from ..models.base_point import BasePoint
from ..network.admittance import build_ybus
from ..network.model import Network
from ..network.profiles import Profile, StepInjections
from ..powerflow.ac import branch_flows, bus_power, total_losses
from ..powerflow.state import BranchFlows, PowerFlowState
from ..scheduling.problem import ScheduleProblem, ScheduleResult, build_result
from ..utils.helpers import ensure_output_directory, format_csv_number, write_json
from ..verification.comparison import COMPARISON_HEADER, ComparisonRow
from ..verification.report import VerificationReport

POWERFLOW_HEADER = ("element", "index", "v", "theta", "p", "q", "ell")
SCHEDULE_HEADER = ("hour", "p_pcc", "e_agg", "objective_contrib")
VERIFICATION_LEADING = ("hour", "p_pcc", "soc_agg")
VERIFICATION_TRAILING = ("loss_realized", "loss_model", "loss_error", "cum_loss_error")


def _number(value: float) -> str:
    return format_csv_number(float(value))


def write_powerflow_csv(path: str | Path, state: PowerFlowState, net: Network) -> int:
    """Write bus voltages, branch flows and the total losses of one AC solution.

    Bus rows carry ``v``, ``theta`` and the bus injections, branch rows the
    from-side flow and ``ell``; a final ``total_losses`` row holds the active
    network losses in its ``p`` column.

    Returns:
        Number of rows written, header excluded.
    """
    ensure_output_directory(path)
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as file_handle:
        writer = csv.writer(file_handle)
        writer.writerow(POWERFLOW_HEADER)
        for bus in range(net.n_bus):
            writer.writerow(
                [
                    "bus",
                    bus,
                    _number(state.v[bus]),
                    _number(state.theta[bus]),
                    _number(state.p[bus]),
                    _number(state.q[bus]),
                    "",
                ],
            )
            rows += 1
        for line in range(net.n_branch):
            writer.writerow(
                [
                    "branch",
                    line,
                    "",
                    "",
                    _number(state.flows.p_from[line]),
                    _number(state.flows.q_from[line]),
                    _number(state.flows.ell[line]),
                ],
            )
            rows += 1
        writer.writerow(["total_losses", "", "", "", _number(total_losses(state, net)), "", ""])
    return rows + 1


def read_base_csv(path: str | Path, net: Network, injections: StepInjections) -> BasePoint:
    """Rebuild a base point from the bus rows of a power-flow CSV.

    Raises:
        FileNotFoundError: If the file is missing.
        ValueError: On a wrong header or a bus count that does not match ``net``.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Power-flow file not found: {file_path}")
    v = np.full(net.n_bus, np.nan)
    theta = np.full(net.n_bus, np.nan)
    with open(file_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != POWERFLOW_HEADER:
            raise ValueError(f"Power-flow file {file_path} must have header {POWERFLOW_HEADER}.")
        for row in reader:
            if row["element"] != "bus":
                continue
            bus = int(row["index"])
            if not 0 <= bus < net.n_bus:
                raise ValueError(f"Power-flow file {file_path} references unknown bus {bus}.")
            v[bus] = float(row["v"])
            theta[bus] = float(row["theta"])
    if np.isnan(v).any():
        raise ValueError(f"Power-flow file {file_path} does not list every bus.")

    computed = bus_power(v * np.exp(1j * theta), build_ybus(net).values)
    provisional = PowerFlowState(
        v=v,
        theta=theta,
        p=computed.real,
        q=computed.imag,
        flows=BranchFlows.zeros(net.n_branch),
    )
    state = replace(provisional, flows=branch_flows(provisional, net))
    return BasePoint(state=state, injections=injections, label=file_path.stem)


def write_envelope_json(path: str | Path, envelope: FlexibilityEnvelope) -> None:
    write_json(path, envelope.to_payload())


def read_envelope_json(path: str | Path) -> FlexibilityEnvelope:
    """Load an envelope written by :func:`write_envelope_json`.

    Raises:
        FileNotFoundError: If the file is missing.
        ValueError: If the payload is not an envelope.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Envelope file not found: {file_path}")
    with open(file_path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict):
        raise ValueError(f"Envelope file {file_path} must contain a JSON object.")
    return FlexibilityEnvelope.from_payload(payload)


def write_schedule_csv(path: str | Path, result: ScheduleResult) -> int:
    """Write ``hour,p_pcc,e_agg,objective_contrib``; returns the step count."""
    ensure_output_directory(path)
    with open(path, "w", newline="", encoding="utf-8") as file_handle:
        writer = csv.writer(file_handle)
        writer.writerow(SCHEDULE_HEADER)
        for hour, p_pcc, e_agg, cost in zip(
            result.hours, result.p_pcc, result.e_agg, result.step_costs
        ):
            writer.writerow([int(hour), _number(p_pcc), _number(e_agg), _number(cost)])
    return result.horizon


def read_schedule_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(p_pcc, e_agg)`` from a schedule CSV, ordered by hour.

    Raises:
        FileNotFoundError: If the file is missing.
        ValueError: On a wrong header, no rows or a malformed number.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Schedule file not found: {file_path}")
    with open(file_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != SCHEDULE_HEADER:
            raise ValueError(
                f"Schedule file {file_path} must have header {','.join(SCHEDULE_HEADER)}.",
            )
        try:
            rows = sorted(
                (int(row["hour"]), float(row["p_pcc"]), float(row["e_agg"])) for row in reader
            )
        except (TypeError, ValueError) as exc:
            raise ValueError(f"Schedule file {file_path} has a malformed row: {exc}") from exc
    if not rows:
        raise ValueError(f"Schedule file {file_path} contains no rows.")
    return np.array([row[1] for row in rows]), np.array([row[2] for row in rows])


def schedule_from_csv(
    path: str | Path,
    net: Network,
    profile: Profile,
    *,
    model_kind: str | None = None,
    dt: float = 1.0,
) -> ScheduleResult:
    """Rebuild a schedule from its CSV; model losses follow from the profile.

    The model label comes from ``model_kind``, else from the JSON summary
    written next to the CSV, else defaults to ``"schedule"``. Storage powers
    are split over the units in proportion to ``p_max``.
    """
    p_pcc, e_agg = read_schedule_csv(path)
    if model_kind is None:
        summary = Path(path).with_suffix(".json")
        if summary.exists():
            with open(summary, "r", encoding="utf-8") as handle:
                model_kind = str(json.load(handle).get("model") or "schedule")
        else:
            model_kind = "schedule"
    prob = ScheduleProblem.for_network(net, profile, horizon=p_pcc.size, dt=dt)
    return build_result(prob, model_kind, p_pcc, e_agg)


def write_schedule_summary(path: str | Path, result: ScheduleResult) -> None:
    write_json(path, result.to_payload())


def verification_header(n_units: int) -> tuple[str, ...]:
    units = tuple(f"soc_unit_{index}" for index in range(n_units))
    return VERIFICATION_LEADING + units + VERIFICATION_TRAILING


def write_verification_csv(path: str | Path, report: VerificationReport) -> int:
    """Write the per-step SOC and loss-error trajectory of a verification.

    Returns:
        Number of steps written.
    """
    loss_error = report.loss_error
    cumulative = report.cumulative_loss_error
    ensure_output_directory(path)
    with open(path, "w", newline="", encoding="utf-8") as file_handle:
        writer = csv.writer(file_handle)
        writer.writerow(verification_header(report.soc_units.shape[1]))
        for t in range(report.horizon):
            writer.writerow(
                [int(report.hours[t]), _number(report.p_pcc[t]), _number(report.soc_agg[t])]
                + [_number(value) for value in report.soc_units[t]]
                + [
                    _number(report.realized_losses[t]),
                    _number(report.model_losses[t]),
                    _number(loss_error[t]),
                    _number(cumulative[t]),
                ],
            )
    return report.horizon


def write_violations_json(path: str | Path, report: VerificationReport) -> None:
    write_json(path, report.to_payload())


def write_comparison_csv(path: str | Path, rows: Sequence[ComparisonRow]) -> int:
    """Write the comparison matrix with a leading campaign-name column."""
    ensure_output_directory(path)
    with open(path, "w", newline="", encoding="utf-8") as file_handle:
        writer = csv.writer(file_handle)
        writer.writerow(("campaign",) + COMPARISON_HEADER)
        for row in rows:
            writer.writerow([row.name] + [_cell(value) for value in row.as_tuple()])
    return len(rows)


def _cell(value: Any) -> str:
    if isinstance(value, str):
        return value
    return _number(value)
