"""Per-unit conversion of network payloads.

Physical payloads carry impedances in ohm, powers in MW/MVAr/MVA and energy in
MWh. Per-unit payloads are normalized on ``base_mva`` and
``z_base = base_kv**2 / base_mva``.
"""

from __future__ import annotations

import copy
from typing import Any, Mapping

UNITS_PU = "pu"
UNITS_PHYSICAL = "physical"

_BUS_POWER_FIELDS = ("p_load", "q_load", "p_inj", "q_inj")
_BRANCH_IMPEDANCE_FIELDS = ("r", "x")
_STORAGE_POWER_FIELDS = ("p_max", "e_cap")


def impedance_base(base_kv: float, base_mva: float) -> float:
    """Return the impedance base in ohm.

    Raises:
        ValueError: If either base is not positive.
    """
    if base_kv <= 0.0 or base_mva <= 0.0:
        raise ValueError("base_kv and base_mva must be positive.")
    return base_kv**2 / base_mva


def from_physical(payload: Mapping[str, Any]) -> dict[str, Any]:
    """Convert a physical-unit network payload to per-unit.

    Args:
        payload: Network mapping with ``units: "physical"`` and ``base_kv``.

    Returns:
        A new mapping with ``units: "pu"``; ``base_kv`` is kept for reference.

    Raises:
        ValueError: If ``base_kv`` is missing.
    """
    return _convert(payload, to_pu=True)


def to_physical(payload: Mapping[str, Any], base_kv: float | None = None) -> dict[str, Any]:
    """Convert a per-unit network payload to physical units.

    Args:
        payload: Per-unit network mapping.
        base_kv: Voltage base; defaults to the payload's ``base_kv``.

    Returns:
        A new mapping with ``units: "physical"``.
    """
    source = dict(payload)
    if base_kv is not None:
        source["base_kv"] = base_kv
    return _convert(source, to_pu=False)


def _convert(payload: Mapping[str, Any], *, to_pu: bool) -> dict[str, Any]:
    converted = copy.deepcopy(dict(payload))
    base_kv = converted.get("base_kv")
    if base_kv is None:
        raise ValueError("Physical-unit network data requires 'base_kv'.")
    base_mva = float(converted.get("base_mva", 1.0))
    z_base = impedance_base(float(base_kv), base_mva)

    def power(value: float) -> float:
        return value / base_mva if to_pu else value * base_mva

    def impedance(value: float) -> float:
        return value / z_base if to_pu else value * z_base

    for bus in converted.get("buses", []):
        for key in _BUS_POWER_FIELDS:
            if bus.get(key) is not None:
                bus[key] = power(float(bus[key]))
    for branch in converted.get("branches", []):
        for key in _BRANCH_IMPEDANCE_FIELDS:
            branch[key] = impedance(float(branch[key]))
        if branch.get("flow_limit") is not None:
            branch["flow_limit"] = power(float(branch["flow_limit"]))
    for unit in converted.get("storage", []):
        for key in _STORAGE_POWER_FIELDS:
            if unit.get(key) is not None:
                unit[key] = power(float(unit[key]))
    for unit in converted.get("pv", []):
        if unit.get("p_max") is not None:
            unit["p_max"] = power(float(unit["p_max"]))

    converted["units"] = UNITS_PU if to_pu else UNITS_PHYSICAL
    return converted
