"""Standard-form linear power-flow models ``A x + B y = c`` with box bounds.

Every model keeps all of its columns in one matrix; the coupling columns
``x`` (by default the PCC active power and the step's storage energy change)
and the local columns ``y`` are views selected by label.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np

from ..solvers.linalg import independent_rows, lu_factor
from ..solvers.reduction import Condensation, condense
from ..utils.errors import InfeasibleModelError
from ..utils.helpers import canonicalize_for_dump

logger = logging.getLogger(__name__)

STEP_COUPLING = ("p_pcc", "delta_e")
NEGATIVE_LOSS_TOLERANCE = 1e-9
FEASIBILITY_TOLERANCE = 1e-7


@dataclass(frozen=True)
class FeatureRow:
    """Model-detail columns of the linear-model comparison table."""

    model: str
    topology: str
    voltage_magnitude: str
    voltage_angle: str
    reactive_power: str
    line_loss: str

    def as_tuple(self) -> tuple[str, ...]:
        return (
            self.model,
            self.topology,
            self.voltage_magnitude,
            self.voltage_angle,
            self.reactive_power,
            self.line_loss,
        )


FEATURE_HEADER = (
    "model",
    "topology",
    "voltage_magnitude",
    "voltage_angle",
    "reactive_power",
    "line_loss",
)


class ModelKind(str, Enum):
    LINDISTFLOW = "lindistflow"
    DC = "dc"
    DC_ENHANCED = "dc_enhanced"
    LIN_AC = "lin_ac"

    @property
    def lossless(self) -> bool:
        return self in (ModelKind.LINDISTFLOW, ModelKind.DC)

    @property
    def needs_base(self) -> bool:
        return not self.lossless

    @property
    def label(self) -> str:
        """Name used on the command line and in output paths."""
        return self.value.replace("_", "-")

    @property
    def features(self) -> FeatureRow:
        return _FEATURES[self]

    @classmethod
    def from_name(cls, name: str) -> ModelKind:
        """Parse ``dc-enhanced``, ``dc_enhanced``, ``LIN-AC`` and friends.

        Raises:
            ValueError: If the name matches no linear model.
        """
        key = name.strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(kind.label for kind in cls)
            raise ValueError(f"Unknown model kind '{name}'. Expected one of: {choices}.") from None


_FEATURES = {
    ModelKind.LINDISTFLOW: FeatureRow("LinDistFlow", "radial", "squared", "-", "standard", "-"),
    ModelKind.DC: FeatureRow("Classic DC PF", "meshed", "standard", "-", "-", "-"),
    ModelKind.DC_ENHANCED: FeatureRow(
        "Enhanced DC PF", "meshed", "squared", "standard", "standard", "linearized"
    ),
    ModelKind.LIN_AC: FeatureRow(
        "Linearized AC PF", "meshed", "standard", "standard", "standard", "linearized"
    ),
}


def feature_matrix() -> list[FeatureRow]:
    """Model-detail rows for every linear model, in declaration order."""
    return [kind.features for kind in ModelKind]


@dataclass(frozen=True)
class LossReport:
    """Per-branch modeled losses and their sign flags."""

    p_loss: np.ndarray
    q_loss: np.ndarray
    negative_loss_flags: np.ndarray

    @property
    def total_p(self) -> float:
        return float(self.p_loss.sum())

    @property
    def any_negative(self) -> bool:
        return bool(self.negative_loss_flags.any())


@dataclass(frozen=True)
class LinearModel:
    """Equality system ``matrix @ z == rhs`` with ``lower <= z <= upper``.

    ``injection_p @ z + injection_offset`` gives the active bus injections the
    point implies and ``loss_p @ z + loss_offset`` the modeled active loss of
    each branch (reactive likewise). Both are empty for hand-built models.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    labels: tuple[str, ...]
    row_labels: tuple[str, ...] = ()
    coupling: tuple[str, ...] = STEP_COUPLING
    kind: ModelKind | None = None
    dt: float = 1.0
    injection_p: np.ndarray | None = None
    injection_offset: np.ndarray | None = None
    loss_p: np.ndarray | None = None
    loss_q: np.ndarray | None = None
    loss_offset_p: np.ndarray | None = None
    loss_offset_q: np.ndarray | None = None
    base_id: str | None = None
    var_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        n_cols = matrix.shape[1]
        if len(self.labels) != n_cols:
            raise ValueError(f"Model has {n_cols} columns but {len(self.labels)} labels.")
        if len(set(self.labels)) != n_cols:
            raise ValueError("Model column labels must be unique.")
        var_index = {label: index for index, label in enumerate(self.labels)}
        missing = [label for label in self.coupling if label not in var_index]
        if missing:
            raise ValueError(f"Coupling labels not among model columns: {missing}.")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "rhs", np.asarray(self.rhs, dtype=float).ravel())
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float).ravel())
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float).ravel())
        if self.rhs.shape[0] != matrix.shape[0]:
            raise ValueError("Right-hand side length does not match the model rows.")
        if self.lower.shape[0] != n_cols or self.upper.shape[0] != n_cols:
            raise ValueError("Bounds must have one entry per model column.")
        if not self.row_labels:
            object.__setattr__(
                self, "row_labels", tuple(f"row[{i}]" for i in range(matrix.shape[0]))
            )
        for name, offset_name in (
            ("injection_p", "injection_offset"),
            ("loss_p", "loss_offset_p"),
            ("loss_q", "loss_offset_q"),
        ):
            values = getattr(self, name)
            values = np.zeros((0, n_cols)) if values is None else np.asarray(values, dtype=float)
            object.__setattr__(self, name, values)
            offset = getattr(self, offset_name)
            if offset is None:
                offset = np.zeros(values.shape[0])
            object.__setattr__(self, offset_name, np.asarray(offset, dtype=float))
        object.__setattr__(self, "var_index", var_index)

    @property
    def n_cols(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def n_rows(self) -> int:
        return int(self.matrix.shape[0])

    def column(self, label: str) -> int:
        try:
            return self.var_index[label]
        except KeyError:
            raise ValueError(f"Unknown model variable '{label}'.") from None

    @property
    def coupling_columns(self) -> np.ndarray:
        return np.array([self.var_index[label] for label in self.coupling], dtype=int)

    @property
    def local_columns(self) -> np.ndarray:
        coupling = set(self.coupling_columns.tolist())
        return np.array([j for j in range(self.n_cols) if j not in coupling], dtype=int)

    @property
    def storage_columns(self) -> np.ndarray:
        return np.array(
            [index for index, label in enumerate(self.labels) if label.startswith("s[")],
            dtype=int,
        )

    @property
    def a(self) -> np.ndarray:
        return self.matrix[:, self.coupling_columns]

    @property
    def b(self) -> np.ndarray:
        return self.matrix[:, self.local_columns]

    @property
    def c(self) -> np.ndarray:
        return self.rhs

    @property
    def x_labels(self) -> tuple[str, ...]:
        return tuple(self.coupling)

    @property
    def y_labels(self) -> tuple[str, ...]:
        return tuple(self.labels[j] for j in self.local_columns)

    @property
    def lossless(self) -> bool:
        if self.kind is not None:
            return self.kind.lossless
        return not np.any(self.loss_p) and not np.any(self.loss_offset_p)

    def residual(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(z, dtype=float) - self.rhs

    def is_feasible(self, z: np.ndarray, *, tolerance: float = FEASIBILITY_TOLERANCE) -> bool:
        """True if ``z`` meets the equalities and bounds within ``tolerance``."""
        z = np.asarray(z, dtype=float)
        scale = max(1.0, float(np.max(np.abs(self.rhs), initial=0.0)))
        if float(np.max(np.abs(self.residual(z)), initial=0.0)) > tolerance * scale:
            return False
        return bool(np.all(z >= self.lower - tolerance) and np.all(z <= self.upper + tolerance))

    def complete(self, fixed: Mapping[str, float]) -> np.ndarray:
        """Solve the equalities for every column given the values of some.

        Args:
            fixed: Column label to value; the remaining columns must then be
                uniquely determined (for the network builders: all storage
                powers).

        Returns:
            The full column vector. Bounds are not enforced.

        Raises:
            ValueError: If a label is unknown or the fixed columns leave the
                others undetermined.
            InfeasibleModelError: If the fixed values contradict the equalities.
        """
        fixed_columns = np.array([self.column(label) for label in fixed], dtype=int)
        fixed_values = np.array([float(value) for value in fixed.values()])
        fixed_set = set(fixed_columns.tolist())
        others = np.array([j for j in range(self.n_cols) if j not in fixed_set], dtype=int)

        rhs = self.rhs - (self.matrix[:, fixed_columns] @ fixed_values if fixed else 0.0)
        reduced = self.matrix[:, others]
        rows = independent_rows(reduced)
        if rows.size != others.size:
            raise ValueError(
                f"Fixing {len(fixed)} columns leaves {others.size - rows.size} degrees of freedom.",
            )
        z = np.empty(self.n_cols)
        z[fixed_columns] = fixed_values
        z[others] = lu_factor(reduced[rows]).solve(rhs[rows]) if others.size else np.zeros(0)
        mismatch = float(np.max(np.abs(self.residual(z)), initial=0.0))
        if mismatch > 1e-8 * max(1.0, float(np.max(np.abs(self.rhs), initial=0.0))):
            raise InfeasibleModelError(
                f"Fixed values contradict the model equalities (residual {mismatch:.3e}).",
            )
        return z

    def condense(self, prefer_free: Sequence[int] | None = None) -> Condensation:
        """Parametrize the model by its free columns (storage powers by default)."""
        preferred = self.storage_columns if prefer_free is None else prefer_free
        return condense(self.matrix, self.rhs, self.lower, self.upper, prefer_free=preferred)

    def bus_injections(self, z: np.ndarray) -> np.ndarray:
        return self.injection_p @ np.asarray(z, dtype=float) + self.injection_offset

    def losses(self, z: np.ndarray) -> LossReport:
        return detect_negative_losses(self, z)

    def to_payload(self) -> dict[str, Any]:
        """JSON-ready dump of ``A``, ``B``, ``c``, bounds and the column index."""
        coupling, local = self.coupling_columns, self.local_columns
        return canonicalize_for_dump(
            {
                "kind": self.kind.label if self.kind else None,
                "base": self.base_id,
                "dt": self.dt,
                "x_labels": list(self.x_labels),
                "y_labels": list(self.y_labels),
                "row_labels": list(self.row_labels),
                "A": self.a.tolist(),
                "B": self.b.tolist(),
                "c": self.rhs.tolist(),
                "X": {
                    "lower": self.lower[coupling].tolist(),
                    "upper": self.upper[coupling].tolist(),
                },
                "Y": {"lower": self.lower[local].tolist(), "upper": self.upper[local].tolist()},
                "var_index": dict(self.var_index),
            },
        )


def detect_negative_losses(
    model: LinearModel,
    point: np.ndarray,
    *,
    tolerance: float = NEGATIVE_LOSS_TOLERANCE,
) -> LossReport:
    """Evaluate modeled branch losses at ``point`` and flag negative ones.

    Lossless models carry no loss expression, so every loss is zero and never
    flagged.

    Args:
        model: A network model.
        point: Column vector satisfying the model equalities.
        tolerance: A loss below ``-tolerance`` is flagged.

    Returns:
        The :class:`LossReport`.
    """
    point = np.asarray(point, dtype=float)
    p_loss = model.loss_p @ point + model.loss_offset_p
    q_loss = model.loss_q @ point + model.loss_offset_q
    flags = p_loss < -tolerance
    if flags.any():
        logger.info(
            "Model %s yields negative losses on %d branches",
            model.kind.label if model.kind else "custom",
            int(flags.sum()),
        )
    return LossReport(p_loss=p_loss, q_loss=q_loss, negative_loss_flags=flags)
