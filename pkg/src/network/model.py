"""Network data model: buses, branches, devices and the network graph."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ..utils.errors import NetworkValidationError
from .topology import check_radial, is_connected

DEFAULT_V_MIN = 0.95
DEFAULT_V_MAX = 1.05
STORAGE_HOURS = 2.0
SIZING_TOLERANCE = 1e-9


class BusKind(str, Enum):
    SLACK = "slack"
    PQ = "pq"


@dataclass(frozen=True)
class Bus:
    """A network bus.

    ``p_inj``/``q_inj`` hold the nominal fixed injection (generation minus load,
    p.u.) excluding PV and storage devices, which are listed in ``devices``.
    """

    id: int
    kind: BusKind = BusKind.PQ
    p_inj: float = 0.0
    q_inj: float = 0.0
    v_min: float = DEFAULT_V_MIN
    v_max: float = DEFAULT_V_MAX
    devices: tuple[str, ...] = ()


@dataclass(frozen=True)
class Branch:
    """Series branch ``from_bus -> to_bus`` with impedance ``r + jx`` (p.u.)."""

    from_bus: int
    to_bus: int
    r: float
    x: float
    flow_limit: float | None = None

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass(frozen=True)
class StorageUnit:
    """Battery with lossless (dis)charging; ``e_cap`` in p.u.·h."""

    bus: int
    p_max: float
    e_cap: float
    soc_init: float = 0.5
    soc_final: float = 0.5
    efficiency: float = 1.0

    @classmethod
    def sized(cls, bus: int, p_max: float, *, soc_init: float = 0.5, soc_final: float = 0.5):
        """Build a unit that charges or discharges fully in two hours at ``p_max``."""
        return cls(
            bus=bus,
            p_max=p_max,
            e_cap=STORAGE_HOURS * p_max,
            soc_init=soc_init,
            soc_final=soc_final,
        )

    @property
    def e_init(self) -> float:
        return self.soc_init * self.e_cap

    @property
    def e_final(self) -> float:
        return self.soc_final * self.e_cap


@dataclass(frozen=True)
class PvUnit:
    bus: int
    p_max: float = 0.0


@dataclass(frozen=True)
class Network:
    """Validated network graph ``S = (N, L)`` in per-unit on ``base_mva``.

    Buses are stored in id order, so a bus id is also its row in every
    per-bus array. Instances are immutable and safe to share across threads.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    storage: tuple[StorageUnit, ...] = ()
    pv: tuple[PvUnit, ...] = ()
    base_mva: float = 1.0
    v_set: float = 1.0
    name: str = "network"
    radial: bool | None = None
    from_set: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    to_set: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        _validate(self)
        from_set: list[list[int]] = [[] for _ in self.buses]
        to_set: list[list[int]] = [[] for _ in self.buses]
        for index, branch in enumerate(self.branches):
            from_set[branch.from_bus].append(index)
            to_set[branch.to_bus].append(index)
        object.__setattr__(self, "from_set", tuple(tuple(item) for item in from_set))
        object.__setattr__(self, "to_set", tuple(tuple(item) for item in to_set))

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def slack(self) -> int:
        return next(bus.id for bus in self.buses if bus.kind is BusKind.SLACK)

    @property
    def non_slack(self) -> np.ndarray:
        return np.array([bus.id for bus in self.buses if bus.kind is not BusKind.SLACK], dtype=int)

    @property
    def r(self) -> np.ndarray:
        return np.array([branch.r for branch in self.branches], dtype=float)

    @property
    def x(self) -> np.ndarray:
        return np.array([branch.x for branch in self.branches], dtype=float)

    @property
    def v_min(self) -> np.ndarray:
        return np.array([bus.v_min for bus in self.buses], dtype=float)

    @property
    def v_max(self) -> np.ndarray:
        return np.array([bus.v_max for bus in self.buses], dtype=float)

    @property
    def storage_p_max(self) -> np.ndarray:
        return np.array([unit.p_max for unit in self.storage], dtype=float)

    @property
    def storage_e_cap(self) -> np.ndarray:
        return np.array([unit.e_cap for unit in self.storage], dtype=float)

    @property
    def storage_shares(self) -> np.ndarray:
        """Proportional split of aggregate storage power across units (by ``p_max``)."""
        p_max = self.storage_p_max
        total = float(p_max.sum())
        if total <= 0.0:
            return np.zeros(len(self.storage))
        return p_max / total

    @property
    def e_agg_init(self) -> float:
        return float(sum(unit.e_init for unit in self.storage))

    @property
    def e_agg_final(self) -> float:
        return float(sum(unit.e_final for unit in self.storage))

    @property
    def e_agg_cap(self) -> float:
        return float(sum(unit.e_cap for unit in self.storage))

    def is_radial(self) -> bool:
        return check_radial(self)

    def with_storage(self, storage: tuple[StorageUnit, ...]) -> Network:
        buses = with_device_labels(self.buses, storage, self.pv)
        return replace(self, buses=buses, storage=storage)

    def without_storage(self) -> Network:
        return self.with_storage(())


def with_device_labels(
    buses: tuple[Bus, ...] | list[Bus],
    storage: tuple[StorageUnit, ...],
    pv: tuple[PvUnit, ...],
) -> tuple[Bus, ...]:
    """Return ``buses`` with their ``devices`` field filled from the device lists."""
    return tuple(replace(bus, devices=device_labels(bus, storage, pv)) for bus in buses)


def device_labels(
    bus: Bus,
    storage: tuple[StorageUnit, ...],
    pv: tuple[PvUnit, ...],
) -> tuple[str, ...]:
    """Return the device references located at ``bus``."""
    labels: list[str] = []
    if bus.p_inj < 0.0 or bus.q_inj < 0.0:
        labels.append("load")
    labels.extend(f"pv:{index}" for index, unit in enumerate(pv) if unit.bus == bus.id)
    labels.extend(f"storage:{index}" for index, unit in enumerate(storage) if unit.bus == bus.id)
    return tuple(labels)


def _validate(net: Network) -> None:
    if not net.buses:
        raise NetworkValidationError("Network must contain at least one bus.")
    if net.base_mva <= 0.0:
        raise NetworkValidationError("base_mva must be positive.")

    ids = [bus.id for bus in net.buses]
    if len(set(ids)) != len(ids):
        duplicates = sorted({bus_id for bus_id in ids if ids.count(bus_id) > 1})
        raise NetworkValidationError(f"Duplicate bus ids: {duplicates}")
    if ids != list(range(len(ids))):
        raise NetworkValidationError("Bus ids must be 0..n-1 and listed in id order.")

    slack_count = sum(bus.kind is BusKind.SLACK for bus in net.buses)
    if slack_count == 0:
        raise NetworkValidationError("Network has no slack bus.")
    if slack_count > 1:
        raise NetworkValidationError("multiple slack buses")

    for bus in net.buses:
        if bus.v_min > bus.v_max:
            raise NetworkValidationError(f"Bus {bus.id}: v_min exceeds v_max.")

    n_bus = len(net.buses)
    for index, branch in enumerate(net.branches):
        if not (0 <= branch.from_bus < n_bus and 0 <= branch.to_bus < n_bus):
            raise NetworkValidationError(f"Branch {index} references an unknown bus.")
        if branch.from_bus == branch.to_bus:
            raise NetworkValidationError(f"Branch {index} is a self-loop on bus {branch.from_bus}.")
        if branch.r < 0.0:
            raise NetworkValidationError(f"Branch {index} has negative resistance.")
        if branch.x <= 0.0:
            raise NetworkValidationError(f"Branch {index} has zero or negative reactance.")
        if branch.flow_limit is not None and branch.flow_limit <= 0.0:
            raise NetworkValidationError(f"Branch {index} has a non-positive flow limit.")

    for index, unit in enumerate(net.storage):
        if not 0 <= unit.bus < n_bus:
            raise NetworkValidationError(f"Storage unit {index} references an unknown bus.")
        if unit.p_max < 0.0:
            raise NetworkValidationError(f"Storage unit {index} has negative p_max.")
        if abs(unit.e_cap - STORAGE_HOURS * unit.p_max) > SIZING_TOLERANCE * max(1.0, unit.e_cap):
            raise NetworkValidationError(
                f"Storage unit {index}: e_cap must equal {STORAGE_HOURS:g} * p_max.",
            )
        if not (0.0 <= unit.soc_init <= 1.0 and 0.0 <= unit.soc_final <= 1.0):
            raise NetworkValidationError(f"Storage unit {index}: SOC targets must lie in [0, 1].")
        if unit.efficiency != 1.0:
            raise NetworkValidationError(f"Storage unit {index}: efficiency is fixed at 1.")

    for index, unit in enumerate(net.pv):
        if not 0 <= unit.bus < n_bus:
            raise NetworkValidationError(f"PV unit {index} references an unknown bus.")

    if not is_connected(n_bus, [(b.from_bus, b.to_bus) for b in net.branches]):
        raise NetworkValidationError("Network graph is disconnected.")

    if net.radial and len(net.branches) != n_bus - 1:
        raise NetworkValidationError("Network is declared radial but |L| != |N| - 1.")
