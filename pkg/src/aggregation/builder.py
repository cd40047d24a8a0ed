"""Power-energy envelope of a network over a scheduling horizon.

Each step is projected on its own onto ``(p_pcc, delta_e)``; the per-step
slices are then lifted into ``(P_pcc[1..T], E_agg[1..T])`` with
``delta_e[t] = E_agg[t] - E_agg[t-1]`` and ``E_agg[0]`` fixed by the initial
state of charge. The storage capacity box and the final-energy target close
the description.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from ..models.base_point import BasePoint
from ..models.builders import build_model
from ..models.linear_model import LinearModel, ModelKind
from ..network.model import Network
from ..network.profiles import Profile, average_injections, profile_injections
from ..utils.helpers import parallel_map
from .envelope import CouplingSpace, EnvelopeKind, FlexibilityEnvelope
from .projection import (
    DEFAULT_DIRECTIONS,
    evenly_spaced_directions,
    project_fourier_motzkin,
    project_support,
)

logger = logging.getLogger(__name__)

METHODS = ("support", "fourier_motzkin")


def build_envelope(
    net: Network,
    kind: ModelKind | str,
    base: BasePoint | None,
    profile: Profile,
    horizon: int,
    *,
    directions: int | Sequence[Sequence[float]] | np.ndarray = DEFAULT_DIRECTIONS,
    dt: float = 1.0,
    method: str = "support",
    max_workers: int | None = None,
    loss_angle_form: str = "quadratic",
) -> FlexibilityEnvelope:
    """Aggregate the network's flexibility at the PCC over ``horizon`` steps.

    Args:
        net: Network with its storage fleet.
        kind: Linear model used for every step.
        base: Linearization point for loss-aware kinds; when omitted for such
            a kind, the AC solution at the profile's average injections is used.
        profile: Load/PV profile covering at least ``horizon`` steps.
        horizon: Number of steps ``T``.
        directions: Direction count or explicit 2-D directions for the
            support-function method.
        dt: Step length in hours.
        method: ``"support"`` (outer) or ``"fourier_motzkin"`` (exact).
        max_workers: Threads for the per-step projections.
        loss_angle_form: Angle term of the enhanced DC loss linearization.

    Returns:
        The lifted :class:`FlexibilityEnvelope` over ``CouplingSpace.horizon``.

    Raises:
        ValueError: On an unknown method or a profile shorter than ``horizon``.
        InfeasibleModelError: If a step admits no feasible dispatch.
        InstanceTooLargeError: If Fourier-Motzkin is asked for a large model.
    """
    if method not in METHODS:
        raise ValueError(f"Unknown projection method '{method}'; use one of {METHODS}.")
    model_kind = ModelKind.from_name(kind) if isinstance(kind, str) else kind
    if isinstance(directions, int):
        directions = evenly_spaced_directions(directions)
    models = build_step_models(
        net, model_kind, base, profile, horizon, dt=dt, loss_angle_form=loss_angle_form
    )
    step_space = CouplingSpace.step(dt)

    def project_step(model: LinearModel) -> FlexibilityEnvelope:
        if method == "fourier_motzkin":
            return project_fourier_motzkin(model, step_space)
        return project_support(model, step_space, directions)

    slices = parallel_map(project_step, models, max_workers=max_workers)
    envelope = lift_step_envelopes(
        slices,
        e_init=net.e_agg_init,
        e_final=net.e_agg_final,
        e_cap=net.e_agg_cap,
        dt=dt,
        kind=EnvelopeKind.EXACT if method == "fourier_motzkin" else EnvelopeKind.OUTER,
    )
    logger.info(
        "Built %s envelope for %d steps with %d halfspaces",
        model_kind.label,
        horizon,
        envelope.n_halfspaces,
    )
    return envelope


def build_step_models(
    net: Network,
    kind: ModelKind | str,
    base: BasePoint | None,
    profile: Profile,
    horizon: int,
    *,
    dt: float = 1.0,
    loss_angle_form: str = "quadratic",
) -> list[LinearModel]:
    """One linear model per step of the first ``horizon`` profile steps.

    Loss-aware kinds without a ``base`` are linearized at the AC solution of
    the profile's average injections.

    Raises:
        ValueError: If the profile is shorter than ``horizon``.
    """
    model_kind = ModelKind.from_name(kind) if isinstance(kind, str) else kind
    profile = profile.head(horizon)
    if model_kind.needs_base and base is None:
        base = BasePoint.solve(net, average_injections(net, profile), label="average")
    return [
        build_model(model_kind, net, step, base, dt=dt, loss_angle_form=loss_angle_form)
        for step in profile_injections(net, profile)
    ]


def lift_step_envelopes(
    slices: Sequence[FlexibilityEnvelope],
    *,
    e_init: float,
    e_final: float,
    e_cap: float,
    dt: float = 1.0,
    kind: EnvelopeKind = EnvelopeKind.OUTER,
) -> FlexibilityEnvelope:
    """Couple per-step ``(p_pcc, delta_e)`` slices through the aggregate energy.

    Raises:
        ValueError: If no slice is given or a slice is not over ``(p_pcc, delta_e)``.
    """
    if not slices:
        raise ValueError("At least one step envelope is needed.")
    steps = len(slices)
    space = CouplingSpace.horizon(steps, dt)
    normals: list[np.ndarray] = []
    offsets: list[float] = []

    for t, step in enumerate(slices):
        if step.space.labels != CouplingSpace.step().labels:
            raise ValueError(f"Step {t + 1} envelope is not over (p_pcc, delta_e).")
        p_col, e_col = t, steps + t
        for (n_power, n_energy), offset in zip(step.normals, step.offsets):
            row = np.zeros(space.dim)
            row[p_col] = n_power
            row[e_col] = n_energy
            offset = float(offset)
            if t == 0:
                offset += n_energy * e_init
            else:
                row[e_col - 1] = -n_energy
            normals.append(row)
            offsets.append(offset)

    eye = np.eye(space.dim)
    for t in range(steps):
        normals.extend([eye[steps + t], -eye[steps + t]])
        offsets.extend([e_cap, 0.0])
    normals.extend([eye[-1], -eye[-1]])
    offsets.extend([e_final, -e_final])

    first = slices[0]
    return FlexibilityEnvelope(
        space=space,
        normals=np.array(normals),
        offsets=np.array(offsets),
        kind=kind,
        model_kind=first.model_kind,
        base_id=first.base_id,
        dropped_directions=sum(step.dropped_directions for step in slices),
        metadata={"step_halfspaces": [step.n_halfspaces for step in slices]},
    )
