#!/usr/bin/env python3
"""
Command line for power flow, linear models, flexibility aggregation,
day-ahead scheduling, AC verification and full campaigns.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from ..aggregation.builder import METHODS, build_envelope, build_step_models
from ..aggregation.projection import DEFAULT_DIRECTIONS
from ..models.base_point import BasePoint
from ..models.builders import LOSS_ANGLE_FORMS, build_model
from ..models.linear_model import ModelKind
from ..network.loader import load_network
from ..network.model import Network
from ..network.profiles import (
    DEFAULT_PROFILE_PATH,
    Profile,
    StepInjections,
    load_injections,
    load_profiles,
    nominal_injections,
)
from ..powerflow.ac import solve_ac, total_losses
from ..scheduling.benchmark import AC_LABEL, schedule_ac_benchmark
from ..scheduling.dispatch import schedule_full_linear, schedule_over_envelope
from ..scheduling.losses import attach_model_losses
from ..scheduling.problem import ScheduleProblem, ScheduleResult
from ..utils.errors import GridflexError, InfeasibleModelError
from ..utils.helpers import write_json
from ..utils.logging_config import configure_logging
from ..verification.replay import verify_schedule
from .artifacts import (
    read_base_csv,
    read_envelope_json,
    schedule_from_csv,
    write_envelope_json,
    write_powerflow_csv,
    write_schedule_csv,
    write_schedule_summary,
    write_verification_csv,
    write_violations_json,
)
from .campaign import load_campaign_config, run_campaign

ENVELOPE_MODEL = "envelope"
MODEL_NAMES = tuple(kind.label for kind in ModelKind)


def build_parser() -> argparse.ArgumentParser:
    """Build the ``gridflex`` argument parser with one subcommand per stage."""
    parser = argparse.ArgumentParser(
        prog="gridflex",
        description=(
            "Aggregate distribution-grid flexibility at the PCC, schedule storage "
            "day-ahead and verify schedules against the AC power flow."
        ),
    )
    parser.add_argument(
        "--log-level",
        help="Logging level (default: GRIDFLEX_LOG_LEVEL or WARNING).",
    )
    parser.add_argument(
        "--log-json",
        action="store_true",
        help="Emit log records as JSON lines.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    pf = commands.add_parser("pf", help="Solve the AC power flow of one operating point.")
    _add_net(pf)
    pf.add_argument("--injections", help="CSV with header bus,p,q (default: nominal injections).")
    pf.add_argument("--output", default="pf.csv", help="Output CSV path (default: pf.csv).")

    model = commands.add_parser("model", help="Dump a linear power-flow model as JSON.")
    model.add_argument("--kind", required=True, choices=MODEL_NAMES, help="Linear model kind.")
    _add_net(model)
    model.add_argument("--injections", help="CSV with header bus,p,q (default: nominal).")
    model.add_argument("--base", help="Power-flow CSV used as linearization point.")
    model.add_argument("--dt", type=float, default=1.0, help="Step length in hours.")
    model.add_argument(
        "--loss-angle-form",
        choices=LOSS_ANGLE_FORMS,
        default="quadratic",
        help="Angle term of the enhanced DC loss linearization.",
    )
    model.add_argument("--output", default="model.json", help="Output JSON path.")

    aggregate = commands.add_parser("aggregate", help="Build the PCC power-energy envelope.")
    _add_net(aggregate)
    aggregate.add_argument("--model", required=True, choices=MODEL_NAMES, help="Model kind.")
    _add_horizon(aggregate)
    aggregate.add_argument(
        "--directions",
        type=int,
        default=DEFAULT_DIRECTIONS,
        help=f"Support directions per step (default: {DEFAULT_DIRECTIONS}).",
    )
    aggregate.add_argument("--method", choices=METHODS, default="support")
    aggregate.add_argument("--max-workers", type=int, help="Threads for per-step projections.")
    aggregate.add_argument("--output", default="envelope.json", help="Output JSON path.")

    schedule = commands.add_parser("schedule", help="Solve the day-ahead storage schedule.")
    _add_net(schedule)
    schedule.add_argument(
        "--model",
        required=True,
        choices=MODEL_NAMES + (AC_LABEL, ENVELOPE_MODEL),
        help="Linear model (full-linear QP), ac (benchmark) or envelope (needs --envelope).",
    )
    _add_horizon(schedule)
    schedule.add_argument("--envelope", help="Envelope JSON for --model envelope.")
    schedule.add_argument("--alpha", type=float, default=1.0, help="Quadratic PCC cost.")
    schedule.add_argument("--beta", type=float, default=0.0, help="Linear PCC cost.")
    schedule.add_argument(
        "--storage-weight",
        type=float,
        default=0.0,
        help="Weight of the storage-use term on squared energy changes.",
    )
    schedule.add_argument("--output", default="schedule.csv", help="Output CSV path.")

    verify = commands.add_parser("verify", help="Replay a schedule against the AC power flow.")
    _add_net(verify)
    verify.add_argument("--schedule", required=True, help="Schedule CSV to verify.")
    verify.add_argument(
        "--profiles",
        default=str(DEFAULT_PROFILE_PATH),
        help="Profile CSV (default: bundled workday).",
    )
    verify.add_argument("--model", help="Model label of the schedule (default: from summary).")
    verify.add_argument("--output", default="verification.csv", help="Output CSV path.")
    verify.add_argument("--violations", default="violations.json", help="Output JSON path.")

    run = commands.add_parser("run", help="Run a full campaign from a configuration file.")
    run.add_argument("--config", help="Campaign YAML/JSON (default: config/campaign.yaml).")
    run.add_argument("--output-dir", help="Override the configured output directory.")
    return parser


def _add_net(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--net", required=True, help="Network JSON file.")


def _add_horizon(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--profiles",
        default=str(DEFAULT_PROFILE_PATH),
        help="Profile CSV with header hour,load_pu,pv_pu (default: bundled workday).",
    )
    parser.add_argument("--horizon", type=int, default=24, help="Number of steps (default: 24).")


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    """Parse CLI arguments."""
    return build_parser().parse_args(argv)


def _injections(args: argparse.Namespace, net: Network) -> StepInjections:
    if args.injections:
        return load_injections(args.injections, net)
    return nominal_injections(net)


def command_pf(args: argparse.Namespace) -> int:
    net = load_network(args.net)
    state = solve_ac(net, _injections(args, net))
    write_powerflow_csv(args.output, state, net)
    print(
        f"Wrote power flow ({net.n_bus} buses, {state.iterations} iterations, "
        f"losses {total_losses(state, net):.6g} p.u.) -> {args.output}",
    )
    return 0


def command_model(args: argparse.Namespace) -> int:
    net = load_network(args.net)
    kind = ModelKind.from_name(args.kind)
    injections = _injections(args, net)
    base = None
    if kind.needs_base:
        if args.base:
            base = read_base_csv(args.base, net, injections)
        else:
            base = BasePoint.solve(net, injections)
    model = build_model(
        kind, net, injections, base, dt=args.dt, loss_angle_form=args.loss_angle_form
    )
    write_json(args.output, model.to_payload())
    shape = f"{model.n_rows} rows, {model.n_cols} columns"
    print(f"Wrote {kind.label} model ({shape}) -> {args.output}")
    return 0


def command_aggregate(args: argparse.Namespace) -> int:
    net = load_network(args.net)
    profile = load_profiles(args.profiles)
    envelope = build_envelope(
        net,
        ModelKind.from_name(args.model),
        None,
        profile,
        args.horizon,
        directions=args.directions,
        method=args.method,
        max_workers=args.max_workers,
    )
    write_envelope_json(args.output, envelope)
    print(f"Wrote {envelope.n_halfspaces} halfspaces ({envelope.kind.value}) -> {args.output}")
    return 0


def command_schedule(args: argparse.Namespace) -> int:
    net = load_network(args.net)
    profile = load_profiles(args.profiles).head(args.horizon)
    prob = ScheduleProblem.for_network(
        net,
        profile,
        alpha=args.alpha,
        beta=args.beta,
        storage_weight=args.storage_weight,
    )
    result: ScheduleResult
    if args.model == AC_LABEL:
        result = schedule_ac_benchmark(prob, net)
    elif args.model == ENVELOPE_MODEL:
        if not args.envelope:
            raise ValueError("--model envelope requires --envelope.")
        result = _with_step_losses(
            schedule_over_envelope(prob, read_envelope_json(args.envelope)), net, profile
        )
    else:
        models = build_step_models(net, args.model, None, profile, args.horizon)
        result = schedule_full_linear(prob, models)
    if not result.ok:
        raise InfeasibleModelError(f"Schedule is {result.status.value}.")

    write_schedule_csv(args.output, result)
    summary_path = Path(args.output).with_suffix(".json")
    write_schedule_summary(summary_path, result)
    print(
        f"Wrote {result.horizon}-step schedule (objective {result.objective:.6g}) "
        f"-> {args.output}",
    )
    print(f"Wrote schedule summary -> {summary_path}")
    return 0


def command_verify(args: argparse.Namespace) -> int:
    net = load_network(args.net)
    profile = load_profiles(args.profiles)
    schedule = _with_step_losses(
        schedule_from_csv(args.schedule, net, profile, model_kind=args.model), net, profile
    )
    report = verify_schedule(net, schedule, profile)
    write_verification_csv(args.output, report)
    write_violations_json(args.violations, report)
    print(
        f"Verified {report.horizon} steps: final SOC {100.0 * report.final_soc:.2f}% "
        f"({len(report.violations)} violations) -> {args.output}",
    )
    print(f"Wrote violations -> {args.violations}")
    return 0


def _with_step_losses(schedule: ScheduleResult, net: Network, profile: Profile) -> ScheduleResult:
    """Model losses of a linear-model schedule, linearized at the average profile."""
    try:
        kind = ModelKind.from_name(schedule.model_kind)
    except ValueError:
        return schedule
    if not schedule.ok:
        return schedule
    return attach_model_losses(
        schedule, build_step_models(net, kind, None, profile, schedule.horizon)
    )


def command_run(args: argparse.Namespace) -> int:
    cfg = load_campaign_config(args.config)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    outcome = run_campaign(cfg)
    for path in outcome.files:
        print(f"Wrote {path}")
    failed = [name for name, branch in outcome.branches.items() if branch["status"] != "ok"]
    if failed:
        print(f"Failed branches: {', '.join(failed)}")
    return outcome.status


COMMANDS = {
    "pf": command_pf,
    "model": command_model,
    "aggregate": command_aggregate,
    "schedule": command_schedule,
    "verify": command_verify,
    "run": command_run,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    try:
        configure_logging(args.log_level, json_format=args.log_json)
        return COMMANDS[args.command](args)
    except (GridflexError, ValueError, OSError) as error:
        print(f"Error: {error}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
