"""Coupling spaces and halfspace envelopes of the PCC flexibility."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import numpy as np

from ..solvers.lp import LpProblem, SolverStatus, solve_lp
from ..utils.errors import InfeasibleModelError
from ..utils.helpers import canonicalize_for_dump

CONTAINMENT_TOLERANCE = 1e-7


class EnvelopeKind(str, Enum):
    OUTER = "outer"
    EXACT = "exact"


@dataclass(frozen=True)
class CouplingSpace:
    """Ordered labels of the coupling variables plus the step length (h)."""

    labels: tuple[str, ...]
    dt: float = 1.0

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError("A coupling space needs at least one dimension.")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("Coupling labels must be unique.")
        if self.dt <= 0.0:
            raise ValueError("Step length must be positive.")

    @classmethod
    def step(cls, dt: float = 1.0) -> CouplingSpace:
        """Single-step slice over the PCC power and the storage energy change."""
        return cls(("p_pcc", "delta_e"), dt)

    @classmethod
    def horizon(cls, steps: int, dt: float = 1.0) -> CouplingSpace:
        """``P_pcc[1..T]`` followed by ``E_agg[1..T]``."""
        if steps < 1:
            raise ValueError("Horizon must cover at least one step.")
        labels = tuple(f"P_pcc[{t}]" for t in range(1, steps + 1))
        labels += tuple(f"E_agg[{t}]" for t in range(1, steps + 1))
        return cls(labels, dt)

    @property
    def dim(self) -> int:
        return len(self.labels)

    @property
    def steps(self) -> int:
        """Horizon length for spaces built by :meth:`horizon`."""
        return self.dim // 2

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"Unknown coupling label '{label}'.") from None


@dataclass(frozen=True)
class FlexibilityEnvelope:
    """Polyhedron ``{x : normals @ x <= offsets}`` over a coupling space."""

    space: CouplingSpace
    normals: np.ndarray
    offsets: np.ndarray
    kind: EnvelopeKind = EnvelopeKind.OUTER
    model_kind: str | None = None
    base_id: str | None = None
    dropped_directions: int = 0
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        normals = np.asarray(self.normals, dtype=float).reshape(-1, self.space.dim)
        offsets = np.asarray(self.offsets, dtype=float).ravel()
        if normals.shape[0] != offsets.shape[0]:
            raise ValueError("Envelope needs one offset per halfspace normal.")
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)

    @property
    def n_halfspaces(self) -> int:
        return int(self.offsets.shape[0])

    @property
    def halfspaces(self) -> list[tuple[np.ndarray, float]]:
        return [(normal, float(offset)) for normal, offset in zip(self.normals, self.offsets)]

    def slack(self, x: np.ndarray) -> np.ndarray:
        return self.offsets - self.normals @ np.asarray(x, dtype=float)

    def contains(self, x: np.ndarray, *, tolerance: float = CONTAINMENT_TOLERANCE) -> bool:
        return bool(np.all(self.slack(x) >= -tolerance))

    def support(self, direction: np.ndarray) -> float:
        """Maximum of ``direction @ x`` over the envelope (``inf`` if unbounded).

        Raises:
            InfeasibleModelError: If the envelope is empty.
        """
        result = solve_lp(
            LpProblem(
                c=np.asarray(direction, dtype=float),
                a_ub=self.normals,
                b_ub=self.offsets,
                maximize=True,
            ),
        )
        if result.status is SolverStatus.UNBOUNDED:
            return float("inf")
        if not result.ok:
            raise InfeasibleModelError(f"Envelope is empty ({result.status.value}).")
        return float(result.objective)

    def interval(self, label: str) -> tuple[float, float]:
        """Range of one coupling variable over the envelope."""
        direction = np.zeros(self.space.dim)
        direction[self.space.index(label)] = 1.0
        return -self.support(-direction), self.support(direction)

    def to_payload(self) -> dict[str, Any]:
        return canonicalize_for_dump(
            {
                "labels": list(self.space.labels),
                "dt": self.space.dt,
                "kind": self.kind.value,
                "provenance": {"model_kind": self.model_kind, "base": self.base_id},
                "dropped_directions": self.dropped_directions,
                "halfspaces": [
                    {"n": normal.tolist(), "h": offset} for normal, offset in self.halfspaces
                ],
            },
        )

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> FlexibilityEnvelope:
        """Rebuild an envelope written by :meth:`to_payload`.

        Raises:
            ValueError: If a required key is missing.
        """
        try:
            labels = tuple(str(label) for label in payload["labels"])
            halfspaces = payload["halfspaces"]
        except KeyError as exc:
            raise ValueError(f"Envelope payload is missing key {exc}.") from exc
        provenance = payload.get("provenance") or {}
        space = CouplingSpace(labels, float(payload.get("dt", 1.0)))
        return cls(
            space=space,
            normals=np.array([item["n"] for item in halfspaces], dtype=float),
            offsets=np.array([float(item["h"]) for item in halfspaces]),
            kind=EnvelopeKind(payload.get("kind", EnvelopeKind.OUTER.value)),
            model_kind=provenance.get("model_kind"),
            base_id=provenance.get("base"),
            dropped_directions=int(payload.get("dropped_directions", 0)),
        )
