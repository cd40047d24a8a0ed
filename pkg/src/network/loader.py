"""Network file ingestion and serialization."""

from __future__ import annotations

import json
import math
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Mapping

from ..utils.errors import NetworkValidationError
from .model import (
    DEFAULT_V_MAX,
    DEFAULT_V_MIN,
    STORAGE_HOURS,
    Branch,
    Bus,
    BusKind,
    Network,
    PvUnit,
    StorageUnit,
    with_device_labels,
)
from .per_unit import UNITS_PHYSICAL, UNITS_PU, from_physical, to_physical

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("buses", "branches")


def load_network(path: str | Path) -> Network:
    """Load and validate a network JSON file.

    Args:
        path: Path to the network file.

    Returns:
        A validated :class:`Network` in per-unit on ``base_mva``.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        NetworkValidationError: On schema or topology violations.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise FileNotFoundError(f"Network file not found: {file_path}")

    with open(file_path, "r", encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise NetworkValidationError(f"Network file {file_path} is not valid JSON.") from exc

    net = network_from_payload(payload, default_name=file_path.stem)
    logger.info(
        "Loaded network %s: %d buses, %d branches, %d storage units",
        net.name,
        net.n_bus,
        net.n_branch,
        len(net.storage),
    )
    return net


def network_from_payload(payload: Mapping[str, Any], *, default_name: str = "network") -> Network:
    """Build a :class:`Network` from a decoded network mapping.

    Raises:
        NetworkValidationError: On schema or topology violations.
    """
    if not isinstance(payload, Mapping):
        raise NetworkValidationError("Network data must be a mapping.")
    for key in REQUIRED_KEYS:
        if not isinstance(payload.get(key), list):
            raise NetworkValidationError(f"Network data requires a '{key}' list.")

    units = payload.get("units", UNITS_PU)
    if units == UNITS_PHYSICAL:
        try:
            payload = from_physical(payload)
        except ValueError as exc:
            raise NetworkValidationError(str(exc)) from exc
    elif units != UNITS_PU:
        raise NetworkValidationError(f"Unknown units '{units}'; expected 'pu' or 'physical'.")

    buses = sorted((_parse_bus(entry) for entry in payload["buses"]), key=lambda bus: bus.id)
    branches = tuple(_parse_branch(index, entry) for index, entry in enumerate(payload["branches"]))
    storage = tuple(
        _parse_storage(index, entry) for index, entry in enumerate(payload.get("storage", []))
    )
    pv = tuple(_parse_pv(index, entry) for index, entry in enumerate(payload.get("pv", [])))

    labelled = with_device_labels(buses, storage, pv)
    radial = payload.get("radial")
    net = Network(
        buses=labelled,
        branches=branches,
        storage=storage,
        pv=pv,
        base_mva=_number(payload.get("base_mva", 1.0), "base_mva"),
        v_set=_number(payload.get("v_set", 1.0), "v_set"),
        name=str(payload.get("name", default_name)),
        radial=None if radial is None else bool(radial),
    )
    if net.radial and not net.is_radial():
        raise NetworkValidationError("Network is declared radial but contains a cycle.")
    if net.radial is None:
        net = _with_radial_flag(net)
    return net


def network_to_payload(
    net: Network,
    *,
    units: str = UNITS_PU,
    base_kv: float | None = None,
) -> dict[str, Any]:
    """Serialize a network back to the file schema.

    Args:
        net: Network to serialize.
        units: ``"pu"`` or ``"physical"``.
        base_kv: Voltage base, required for physical units.

    Returns:
        A JSON-serializable mapping accepted by :func:`network_from_payload`.
    """
    payload: dict[str, Any] = {
        "name": net.name,
        "base_mva": net.base_mva,
        "v_set": net.v_set,
        "radial": net.radial,
        "units": UNITS_PU,
        "buses": [
            {
                "id": bus.id,
                "kind": bus.kind.value,
                "v_min": bus.v_min,
                "v_max": bus.v_max,
                "p_inj": bus.p_inj,
                "q_inj": bus.q_inj,
            }
            for bus in net.buses
        ],
        "branches": [
            {
                "from": branch.from_bus,
                "to": branch.to_bus,
                "r": branch.r,
                "x": branch.x,
                **({} if branch.flow_limit is None else {"flow_limit": branch.flow_limit}),
            }
            for branch in net.branches
        ],
        "storage": [
            {
                "bus": unit.bus,
                "p_max": unit.p_max,
                "e_cap": unit.e_cap,
                "soc_init": unit.soc_init,
                "soc_final": unit.soc_final,
            }
            for unit in net.storage
        ],
        "pv": [{"bus": unit.bus, "p_max": unit.p_max} for unit in net.pv],
    }
    if units == UNITS_PU:
        if base_kv is not None:
            payload["base_kv"] = base_kv
        return payload
    if units == UNITS_PHYSICAL:
        return to_physical(payload, base_kv)
    raise ValueError(f"Unknown units '{units}'; expected 'pu' or 'physical'.")


def _with_radial_flag(net: Network) -> Network:
    return replace(net, radial=net.is_radial())


def _parse_bus(entry: Any) -> Bus:
    if not isinstance(entry, Mapping):
        raise NetworkValidationError("Bus entries must be mappings.")
    if "id" not in entry:
        raise NetworkValidationError("Bus entry is missing 'id'.")
    bus_id = entry["id"]
    if isinstance(bus_id, bool) or not isinstance(bus_id, int):
        raise NetworkValidationError(f"Bus id {bus_id!r} must be an integer.")

    if "kind" not in entry:
        raise NetworkValidationError(f"Bus {bus_id} is missing 'kind'.")
    kind_name = entry["kind"]
    try:
        kind = BusKind(kind_name)
    except ValueError as exc:
        raise NetworkValidationError(f"Bus {bus_id}: unknown kind '{kind_name}'.") from exc

    has_load = "p_load" in entry or "q_load" in entry
    has_inj = "p_inj" in entry or "q_inj" in entry
    if has_load and has_inj:
        raise NetworkValidationError(f"Bus {bus_id}: give either p_load/q_load or p_inj/q_inj.")
    if has_load:
        p_inj = -_number(entry.get("p_load", 0.0), f"bus {bus_id} p_load")
        q_inj = -_number(entry.get("q_load", 0.0), f"bus {bus_id} q_load")
    else:
        p_inj = _number(entry.get("p_inj", 0.0), f"bus {bus_id} p_inj")
        q_inj = _number(entry.get("q_inj", 0.0), f"bus {bus_id} q_inj")

    return Bus(
        id=bus_id,
        kind=kind,
        p_inj=p_inj,
        q_inj=q_inj,
        v_min=_number(entry.get("v_min", DEFAULT_V_MIN), f"bus {bus_id} v_min"),
        v_max=_number(entry.get("v_max", DEFAULT_V_MAX), f"bus {bus_id} v_max"),
    )


def _parse_branch(index: int, entry: Any) -> Branch:
    if not isinstance(entry, Mapping):
        raise NetworkValidationError("Branch entries must be mappings.")
    missing = [key for key in ("from", "to", "r", "x") if key not in entry]
    if missing:
        raise NetworkValidationError(f"Branch {index} is missing {', '.join(missing)}.")
    flow_limit = entry.get("flow_limit")
    return Branch(
        from_bus=_integer(entry["from"], f"branch {index} from"),
        to_bus=_integer(entry["to"], f"branch {index} to"),
        r=_number(entry["r"], f"branch {index} r"),
        x=_number(entry["x"], f"branch {index} x"),
        flow_limit=(
            None if flow_limit is None else _number(flow_limit, f"branch {index} flow_limit")
        ),
    )


def _parse_storage(index: int, entry: Any) -> StorageUnit:
    if not isinstance(entry, Mapping):
        raise NetworkValidationError("Storage entries must be mappings.")
    if "bus" not in entry or "p_max" not in entry:
        raise NetworkValidationError(f"Storage unit {index} requires 'bus' and 'p_max'.")
    p_max = _number(entry["p_max"], f"storage {index} p_max")
    return StorageUnit(
        bus=_integer(entry["bus"], f"storage {index} bus"),
        p_max=p_max,
        e_cap=_number(entry.get("e_cap", STORAGE_HOURS * p_max), f"storage {index} e_cap"),
        soc_init=_number(entry.get("soc_init", 0.5), f"storage {index} soc_init"),
        soc_final=_number(entry.get("soc_final", 0.5), f"storage {index} soc_final"),
    )


def _parse_pv(index: int, entry: Any) -> PvUnit:
    if not isinstance(entry, Mapping) or "bus" not in entry:
        raise NetworkValidationError(f"PV unit {index} requires 'bus'.")
    return PvUnit(
        bus=_integer(entry["bus"], f"pv {index} bus"),
        p_max=_number(entry.get("p_max", 0.0), f"pv {index} p_max"),
    )


def _number(value: Any, label: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise NetworkValidationError(f"{label} must be a number, got {value!r}.")
    if not math.isfinite(value):
        raise NetworkValidationError(f"{label} must be finite, got {value!r}.")
    return float(value)


def _integer(value: Any, label: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise NetworkValidationError(f"{label} must be an integer, got {value!r}.")
    return value
