"""Day-ahead load/PV profiles and the per-step bus injections they imply."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import Network

logger = logging.getLogger(__name__)

PROFILE_HEADER = ("hour", "load_pu", "pv_pu")
INJECTION_HEADER = ("bus", "p", "q")
REPO_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_PROFILE_PATH = REPO_ROOT / "data" / "profiles" / "workday.csv"


@dataclass(frozen=True)
class Profile:
    """Network-total load and PV output per hour (p.u.)."""

    hours: np.ndarray
    load: np.ndarray
    pv: np.ndarray

    @property
    def horizon(self) -> int:
        return int(self.hours.shape[0])

    def head(self, horizon: int) -> Profile:
        """Return the first ``horizon`` steps.

        Raises:
            ValueError: If the profile is shorter than ``horizon``.
        """
        if horizon < 1 or horizon > self.horizon:
            raise ValueError(f"Profile covers {self.horizon} steps; cannot take {horizon}.")
        return Profile(self.hours[:horizon], self.load[:horizon], self.pv[:horizon])

    @property
    def net_load(self) -> np.ndarray:
        return self.load - self.pv

    @classmethod
    def constant(cls, load: float, pv: float = 0.0, *, horizon: int = 24) -> Profile:
        return cls.from_series([load] * horizon, [pv] * horizon)

    @classmethod
    def from_series(cls, load: list[float] | np.ndarray, pv: list[float] | np.ndarray) -> Profile:
        load_array = np.asarray(load, dtype=float)
        pv_array = np.asarray(pv, dtype=float)
        if load_array.shape != pv_array.shape or load_array.ndim != 1:
            raise ValueError("Load and PV series must be one-dimensional and equally long.")
        return cls(np.arange(load_array.shape[0]), load_array, pv_array)


@dataclass(frozen=True)
class StepInjections:
    """Fixed per-bus injections of one step (generation minus load, p.u.).

    Storage power and the PCC exchange are excluded; they are decision
    variables of the linear models and of the schedulers.
    """

    p: np.ndarray
    q: np.ndarray

    @property
    def net_load(self) -> float:
        """Total demand minus generation carried by the fixed injections."""
        return float(-self.p.sum())

    @classmethod
    def zeros(cls, n_bus: int) -> StepInjections:
        return cls(np.zeros(n_bus), np.zeros(n_bus))


def load_profiles(path: str | Path = DEFAULT_PROFILE_PATH) -> Profile:
    """Read a profile CSV with header ``hour,load_pu,pv_pu``.

    Args:
        path: CSV path; defaults to the bundled workday profile.

    Returns:
        The parsed :class:`Profile`, rows ordered by hour.

    Raises:
        FileNotFoundError: If the file is missing.
        ValueError: On a wrong header, empty file or non-numeric cell.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Profile file not found: {file_path}")

    with open(file_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = tuple(cell.strip() for cell in next(reader, ()))
        if header != PROFILE_HEADER:
            raise ValueError(
                f"Profile {file_path} must have header {','.join(PROFILE_HEADER)}, "
                f"got {','.join(header) or 'nothing'}.",
            )
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]

    if not rows:
        raise ValueError(f"Profile {file_path} contains no rows.")

    try:
        parsed = sorted((int(row[0]), float(row[1]), float(row[2])) for row in rows)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"Profile {file_path} has a malformed row: {exc}") from exc

    hours = [row[0] for row in parsed]
    if len(set(hours)) != len(hours):
        raise ValueError(f"Profile {file_path} repeats an hour.")

    profile = Profile(
        hours=np.array(hours, dtype=int),
        load=np.array([row[1] for row in parsed]),
        pv=np.array([row[2] for row in parsed]),
    )
    logger.info("Loaded %d profile steps from %s", profile.horizon, file_path)
    return profile


def nominal_injections(net: Network) -> StepInjections:
    """Injections from the buses' nominal ``p_inj``/``q_inj`` (PV idle)."""
    return StepInjections(
        p=np.array([bus.p_inj for bus in net.buses]),
        q=np.array([bus.q_inj for bus in net.buses]),
    )


def step_injections(net: Network, load_total: float, pv_total: float) -> StepInjections:
    """Distribute network totals over buses.

    Demand is split in proportion to each bus's nominal demand and keeps the
    bus's nominal power factor. PV output is split in proportion to PV
    capacity (equally when no capacity is given) and injects active power only.

    Args:
        net: Network with nominal demands.
        load_total: Total demand of the step (p.u.).
        pv_total: Total PV output of the step (p.u.).

    Returns:
        The step's :class:`StepInjections`.

    Raises:
        ValueError: If a non-zero total has nowhere to go.
    """
    p_demand = np.array([max(-bus.p_inj, 0.0) for bus in net.buses])
    q_demand = np.array([-bus.q_inj if bus.p_inj < 0.0 else 0.0 for bus in net.buses])
    demand_total = float(p_demand.sum())

    p = np.zeros(net.n_bus)
    q = np.zeros(net.n_bus)
    if load_total != 0.0:
        if demand_total <= 0.0:
            raise ValueError("Network has no nominal demand to distribute the load profile over.")
        scale = load_total / demand_total
        p -= p_demand * scale
        q -= q_demand * scale

    if pv_total != 0.0:
        if not net.pv:
            raise ValueError("Network has no PV unit to distribute the PV profile over.")
        capacities = np.array([unit.p_max for unit in net.pv])
        if capacities.sum() <= 0.0:
            capacities = np.ones(len(net.pv))
        for unit, share in zip(net.pv, capacities / capacities.sum()):
            p[unit.bus] += pv_total * share

    return StepInjections(p=p, q=q)


def profile_injections(net: Network, profile: Profile) -> list[StepInjections]:
    return [
        step_injections(net, float(load), float(pv)) for load, pv in zip(profile.load, profile.pv)
    ]


def average_injections(net: Network, profile: Profile) -> StepInjections:
    """Injections at the profile's average prosumption, used as linearization anchor."""
    return step_injections(net, float(profile.load.mean()), float(profile.pv.mean()))


def load_injections(path: str | Path, net: Network) -> StepInjections:
    """Read a per-bus injection CSV with header ``bus,p,q``.

    Buses not listed keep a zero injection.

    Raises:
        FileNotFoundError: If the file is missing.
        ValueError: On a wrong header or an unknown bus.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Injection file not found: {file_path}")

    injections = StepInjections.zeros(net.n_bus)
    with open(file_path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != INJECTION_HEADER:
            raise ValueError(f"Injection file {file_path} must have header bus,p,q.")
        for row in reader:
            bus = int(row["bus"])
            if not 0 <= bus < net.n_bus:
                raise ValueError(f"Injection file {file_path} references unknown bus {bus}.")
            injections.p[bus] = float(row["p"])
            injections.q[bus] = float(row["q"])
    return injections


def apply_storage(
    net: Network,
    injections: StepInjections,
    storage_power: np.ndarray,
) -> StepInjections:
    """Return ``injections`` with each unit's charging power drawn at its bus.

    Args:
        net: Network owning the storage fleet.
        injections: Fixed injections of the step.
        storage_power: Charging power per storage unit (positive charges).
    """
    storage_power = np.asarray(storage_power, dtype=float)
    if storage_power.shape != (len(net.storage),):
        raise ValueError(
            f"Expected {len(net.storage)} storage powers, got shape {storage_power.shape}.",
        )
    p = np.array(injections.p, dtype=float)
    for unit, power in zip(net.storage, storage_power):
        p[unit.bus] -= power
    return StepInjections(p=p, q=np.array(injections.q, dtype=float))
