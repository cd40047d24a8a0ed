"""Cross-model comparison matrix: model features plus verification outcomes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from ..models.linear_model import FEATURE_HEADER, FeatureRow, ModelKind
from .report import VerificationReport

AC_FEATURES = FeatureRow("AC PF", "meshed", "standard", "standard", "standard", "exact")
NOT_APPLICABLE = "n/a"

COMPARISON_HEADER = FEATURE_HEADER + (
    "negative_loss",
    "final_soc",
    "final_soc_miss_pp",
    "cumulative_loss_error",
    "objective",
)


@dataclass(frozen=True)
class ComparisonRow:
    """One campaign: the model's features and what verification found."""

    name: str
    features: FeatureRow
    negative_loss: str
    final_soc: float
    final_soc_miss: float
    cumulative_loss_error: float
    objective: float

    def as_tuple(self) -> tuple[str | float, ...]:
        return self.features.as_tuple() + (
            self.negative_loss,
            self.final_soc,
            self.final_soc_miss,
            self.cumulative_loss_error,
            self.objective,
        )


def features_for(model_kind: str) -> FeatureRow:
    """Feature row of a linear model label, or of the exact AC model for ``ac``.

    Raises:
        ValueError: If the label names neither.
    """
    if model_kind.strip().lower() == "ac":
        return AC_FEATURES
    return ModelKind.from_name(model_kind).features


def comparison_report(
    reports: Mapping[str, VerificationReport] | Sequence[VerificationReport],
) -> list[ComparisonRow]:
    """Build one comparison row per campaign, in input order.

    Args:
        reports: Verification reports keyed by campaign name, or a sequence
            (named by each report's model kind).

    Returns:
        The rows. ``negative_loss`` is ``"n/a"`` for lossless models and
        ``"yes"``/``"no"`` otherwise.

    Raises:
        ValueError: If fewer than two campaigns are given.
    """
    items = (
        list(reports.items())
        if isinstance(reports, Mapping)
        else [(report.model_kind, report) for report in reports]
    )
    if len(items) < 2:
        raise ValueError("need ≥ 2 campaigns")

    rows = []
    for name, report in items:
        negative = report.has_negative_losses
        rows.append(
            ComparisonRow(
                name=name,
                features=features_for(report.model_kind),
                negative_loss=NOT_APPLICABLE if negative is None else ("yes" if negative else "no"),
                final_soc=report.final_soc,
                final_soc_miss=report.final_soc_miss,
                cumulative_loss_error=(
                    float(report.cumulative_loss_error[-1]) if report.horizon else 0.0
                ),
                objective=report.objective,
            ),
        )
    return rows
