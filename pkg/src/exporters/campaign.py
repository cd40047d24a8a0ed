"""Campaign configuration and the end-to-end campaign driver.

A campaign runs aggregate, schedule and verify for every configured model on
one network and profile, then writes per-model artifacts, the comparison
matrix and two figures (PCC trajectories and verified SOC trajectories).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from ..aggregation.builder import build_envelope, build_step_models
from ..aggregation.projection import DEFAULT_DIRECTIONS
from ..models.base_point import BasePoint
from ..models.linear_model import ModelKind
from ..network.loader import load_network
from ..network.model import Network
from ..network.profiles import DEFAULT_PROFILE_PATH, Profile, average_injections, load_profiles
from ..network.synthetic import generate_campus_like
from ..scheduling.benchmark import AC_LABEL, schedule_ac_benchmark
from ..scheduling.dispatch import schedule_over_envelope
from ..scheduling.problem import ScheduleProblem, ScheduleResult
from ..utils.errors import GridflexError, InfeasibleModelError
from ..utils.helpers import parallel_map, write_json
from ..verification.comparison import comparison_report
from ..verification.replay import verify_schedule
from ..verification.report import VerificationReport
from .artifacts import (
    write_comparison_csv,
    write_envelope_json,
    write_schedule_csv,
    write_schedule_summary,
    write_verification_csv,
    write_violations_json,
)
from .svg_plots import emit_svg, write_svg

logger = logging.getLogger(__name__)

DEFAULT_CAMPAIGN_CONFIG = "config/campaign.yaml"
CAMPAIGN_ENV_VAR = "GRIDFLEX_CAMPAIGN_JSON"
CAMPUS_LIKE = "campus-like"
MODEL_CHOICES = ("dc", "lindistflow", "dc-enhanced", "lin-ac", AC_LABEL)
DEFAULT_MODELS = MODEL_CHOICES


@dataclass(frozen=True)
class CampaignConfig:
    """Everything one campaign run needs.

    ``network`` is a network file path, or ``None``/``"campus-like"`` for the
    synthetic 40-bus feeder generated from ``seed``.
    """

    network: str | None = None
    profiles: str = str(DEFAULT_PROFILE_PATH)
    models: tuple[str, ...] = DEFAULT_MODELS
    horizon: int = 24
    directions: int = DEFAULT_DIRECTIONS
    alpha: float = 1.0
    beta: float = 0.0
    storage_weight: float = 0.0
    dt: float = 1.0
    output_dir: str = "output"
    seed: int = 0
    max_workers: int | None = None

    def __post_init__(self) -> None:
        if not self.models:
            raise ValueError("Campaign 'models' must list at least one model.")
        models = tuple(_normalize_model(name) for name in self.models)
        if len(set(models)) != len(models):
            raise ValueError("Campaign 'models' must not repeat a model.")
        object.__setattr__(self, "models", models)
        if self.horizon < 1:
            raise ValueError("Campaign 'horizon' must be at least 1.")
        if self.directions < 3:
            raise ValueError("Campaign 'directions' must be at least 3.")
        if self.alpha < 0.0:
            raise ValueError("Campaign 'alpha' must be non-negative.")
        if self.storage_weight < 0.0:
            raise ValueError("Campaign 'storage_weight' must be non-negative.")
        if self.max_workers is not None and self.max_workers < 1:
            raise ValueError("Campaign 'max_workers' must be positive.")


@dataclass
class CampaignOutcome:
    """Exit status plus what each model branch produced or why it failed."""

    status: int
    output_dir: Path
    branches: dict[str, dict[str, Any]] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)


def _normalize_model(name: str) -> str:
    cleaned = str(name).strip().lower()
    if cleaned == AC_LABEL:
        return AC_LABEL
    try:
        return ModelKind.from_name(cleaned).label
    except ValueError:
        raise ValueError(
            f"Campaign model '{name}' is unknown. Expected one of: {', '.join(MODEL_CHOICES)}.",
        ) from None


def load_campaign_config(config_path: str | None = None) -> CampaignConfig:
    """Load the campaign configuration from YAML/JSON or the environment.

    Sources in order: ``config_path``, the default ``config/campaign.yaml`` when
    it exists, then a JSON payload in ``GRIDFLEX_CAMPAIGN_JSON``.

    Raises:
        FileNotFoundError: If an explicit path is missing or no source exists.
        ValueError: If the configuration is malformed.
    """
    mapping = _load_mapping_from_file(config_path)
    if mapping is None:
        mapping = _load_mapping_from_env()
    if mapping is None:
        raise FileNotFoundError(
            "No campaign configuration found. Provide --config, create "
            f"{DEFAULT_CAMPAIGN_CONFIG}, or export JSON via {CAMPAIGN_ENV_VAR}.",
        )
    return campaign_config_from_mapping(mapping)


def _load_mapping_from_file(config_path: str | None) -> Any:
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"Campaign config not found: {path}")
    else:
        path = Path(DEFAULT_CAMPAIGN_CONFIG)
        if not path.exists():
            return None
    with open(path, "r", encoding="utf-8") as config_file:
        try:
            return yaml.safe_load(config_file) or {}
        except yaml.YAMLError as exc:
            raise ValueError(f"Campaign config {path} is not valid YAML/JSON.") from exc


def _load_mapping_from_env() -> Any:
    payload = os.getenv(CAMPAIGN_ENV_VAR)
    if not payload:
        return None
    try:
        return json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ValueError(
            f"Failed to parse {CAMPAIGN_ENV_VAR} environment variable as JSON.",
        ) from exc


def campaign_config_from_mapping(mapping: Any) -> CampaignConfig:
    """Validate a decoded configuration mapping (optionally under ``campaign:``).

    Raises:
        ValueError: If the mapping has unknown keys or badly typed values.
    """
    if not isinstance(mapping, Mapping):
        raise ValueError("Campaign config must be a mapping.")
    if "campaign" in mapping:
        mapping = mapping["campaign"]
        if not isinstance(mapping, Mapping):
            raise ValueError("Campaign config 'campaign' entry must be a mapping.")

    known = set(CampaignConfig.__dataclass_fields__)
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ValueError(f"Unknown campaign config keys: {', '.join(map(str, unknown))}.")

    values: dict[str, Any] = {}
    for key, raw in mapping.items():
        if raw is None and key in ("network", "max_workers"):
            values[key] = None
            continue
        try:
            values[key] = _coerce(key, raw)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"Campaign config key '{key}' has an invalid value: {raw!r}.") from exc
    return CampaignConfig(**values)


def _coerce(key: str, raw: Any) -> Any:
    if key == "models":
        if isinstance(raw, str) or not isinstance(raw, (list, tuple)):
            raise ValueError("models must be a list")
        return tuple(str(item) for item in raw)
    if key in ("horizon", "directions", "seed", "max_workers"):
        if isinstance(raw, bool) or int(raw) != raw:
            raise ValueError("integer expected")
        return int(raw)
    if key in ("alpha", "beta", "storage_weight", "dt"):
        if isinstance(raw, bool):
            raise ValueError("number expected")
        return float(raw)
    return str(raw)


def resolve_network(cfg: CampaignConfig) -> Network:
    """Load the configured network or generate the synthetic feeder.

    Raises:
        FileNotFoundError: If the network file is missing.
        NetworkValidationError: If the file is invalid.
    """
    if cfg.network is None or cfg.network == CAMPUS_LIKE:
        return generate_campus_like(cfg.seed)
    return load_network(cfg.network)


def run_campaign(cfg: CampaignConfig) -> CampaignOutcome:
    """Aggregate, schedule and verify every configured model, then write outputs.

    A failing model branch is logged and recorded in ``summary.json``; the
    others continue. The status is nonzero only when every branch fails.

    Raises:
        FileNotFoundError: If the network or profile file is missing.
        NetworkValidationError: If the network is invalid.
        ValueError: If the profile is shorter than the horizon.
    """
    net = resolve_network(cfg)
    profile = load_profiles(cfg.profiles).head(cfg.horizon)
    prob = ScheduleProblem.for_network(
        net,
        profile,
        dt=cfg.dt,
        alpha=cfg.alpha,
        beta=cfg.beta,
        storage_weight=cfg.storage_weight,
    )
    output_dir = Path(cfg.output_dir)
    base = None
    if any(name != AC_LABEL and ModelKind.from_name(name).needs_base for name in cfg.models):
        base = BasePoint.solve(net, average_injections(net, profile), label="average")

    def run_branch(name: str) -> tuple[str, dict[str, Any], VerificationReport | None, list[Path]]:
        try:
            return name, *_run_model(name, net, profile, prob, base, cfg, output_dir)
        except (GridflexError, ValueError, OSError, ArithmeticError) as exc:
            logger.error("Campaign branch %s failed: %s", name, exc)
            return name, {"status": "failed", "error": str(exc)}, None, []

    results = parallel_map(run_branch, list(cfg.models), max_workers=cfg.max_workers)

    outcome = CampaignOutcome(status=0, output_dir=output_dir)
    reports: dict[str, VerificationReport] = {}
    for name, summary, report, files in results:
        outcome.branches[name] = summary
        outcome.files.extend(files)
        if report is not None:
            reports[name] = report

    if len(reports) >= 2:
        comparison_path = output_dir / "comparison.csv"
        write_comparison_csv(comparison_path, comparison_report(reports))
        outcome.files.append(comparison_path)
    if reports:
        outcome.files.extend(_write_figures(reports, output_dir))

    summary_path = output_dir / "summary.json"
    write_json(
        summary_path,
        {
            "network": net.name,
            "horizon": cfg.horizon,
            "models": list(cfg.models),
            "branches": outcome.branches,
        },
    )
    outcome.files.append(summary_path)
    outcome.status = 0 if reports else 1
    logger.info("Campaign finished: %d of %d branches succeeded", len(reports), len(cfg.models))
    return outcome


def _run_model(
    name: str,
    net: Network,
    profile: Profile,
    prob: ScheduleProblem,
    base: BasePoint | None,
    cfg: CampaignConfig,
    output_dir: Path,
) -> tuple[dict[str, Any], VerificationReport, list[Path]]:
    branch_dir = output_dir / name
    files: list[Path] = []
    logger.info("Campaign branch %s started", name)

    schedule: ScheduleResult
    if name == AC_LABEL:
        schedule = schedule_ac_benchmark(prob, net, max_workers=cfg.max_workers)
    else:
        kind = ModelKind.from_name(name)
        envelope = build_envelope(
            net,
            kind,
            base,
            profile,
            cfg.horizon,
            directions=cfg.directions,
            dt=cfg.dt,
            max_workers=cfg.max_workers,
        )
        envelope_path = branch_dir / "envelope.json"
        write_envelope_json(envelope_path, envelope)
        files.append(envelope_path)
        models = build_step_models(net, kind, base, profile, cfg.horizon, dt=cfg.dt)
        schedule = schedule_over_envelope(prob, envelope, models)
    if not schedule.ok:
        raise InfeasibleModelError(f"Schedule for {name} is {schedule.status.value}.")

    schedule_path = branch_dir / "schedule.csv"
    write_schedule_csv(schedule_path, schedule)
    write_schedule_summary(branch_dir / "schedule.json", schedule)
    report = verify_schedule(net, schedule, profile)
    verification_path = branch_dir / "verification.csv"
    write_verification_csv(verification_path, report)
    write_violations_json(branch_dir / "violations.json", report)
    files.extend(
        [
            schedule_path,
            branch_dir / "schedule.json",
            verification_path,
            branch_dir / "violations.json",
        ],
    )
    summary = {
        "status": "ok",
        "objective": schedule.objective,
        "final_soc": report.final_soc,
        "violations": len(report.violations),
    }
    return summary, report, files


def _write_figures(reports: Mapping[str, VerificationReport], output_dir: Path) -> list[Path]:
    hours = next(iter(reports.values())).hours
    ppcc_path = output_dir / "fig_ppcc.svg"
    write_svg(
        ppcc_path,
        emit_svg(
            [(name, report.p_pcc) for name, report in reports.items()],
            title="Scheduled PCC active power",
            y_label="P_pcc (p.u.)",
            x_values=hours,
        ),
    )
    soc_path = output_dir / "fig_soc.svg"
    write_svg(
        soc_path,
        emit_svg(
            [
                (name, 100.0 * np.concatenate([[report.soc_init], report.soc_agg]))
                for name, report in reports.items()
            ],
            title="Aggregate SOC after AC verification",
            y_label="SOC (%)",
            x_values=np.concatenate([[0], hours]),
        ),
    )
    return [ppcc_path, soc_path]
