"""Synthetic 40-bus radial campus-like feeder."""

from __future__ import annotations

import math

import numpy as np

from .model import Branch, Bus, BusKind, Network, PvUnit, StorageUnit, with_device_labels

CAMPUS_BUSES = 40
CAMPUS_PV_BUS = 33
CAMPUS_STORAGE_BUSES = (13, 26, 39)
CAMPUS_STORAGE_P_MAX = 0.03
CAMPUS_PV_P_MAX = 0.15
R_RANGE = (0.01, 0.05)
X_RANGE = (0.02, 0.08)
LOAD_RANGE = (0.004, 0.012)
POWER_FACTOR = 0.95


def generate_campus_like(seed: int = 0) -> Network:
    """Generate the radial campus-like test network.

    Bus 0 is the slack/PCC bus. Every other bus ``k`` attaches to a parent
    drawn uniformly from ``0..k-1``, so the graph is a tree by construction.
    Branch impedances are drawn from ``R_RANGE`` and ``X_RANGE`` (p.u.), bus
    demands from ``LOAD_RANGE`` at ``POWER_FACTOR`` lagging. A PV unit sits at
    bus 33 and storage units at buses 13, 26 and 39.

    Args:
        seed: Seed for ``numpy.random.default_rng``.

    Returns:
        A validated radial :class:`Network` with ``base_mva = 1``.
    """
    rng = np.random.default_rng(seed)
    tan_phi = math.tan(math.acos(POWER_FACTOR))

    parents = [int(rng.integers(0, k)) for k in range(1, CAMPUS_BUSES)]
    resistances = rng.uniform(*R_RANGE, size=CAMPUS_BUSES - 1)
    reactances = rng.uniform(*X_RANGE, size=CAMPUS_BUSES - 1)
    demands = rng.uniform(*LOAD_RANGE, size=CAMPUS_BUSES - 1)

    branches = tuple(
        Branch(
            from_bus=parent,
            to_bus=child,
            r=round(float(resistances[child - 1]), 6),
            x=round(float(reactances[child - 1]), 6),
        )
        for child, parent in enumerate(parents, start=1)
    )
    storage = tuple(StorageUnit.sized(bus, CAMPUS_STORAGE_P_MAX) for bus in CAMPUS_STORAGE_BUSES)
    pv = (PvUnit(bus=CAMPUS_PV_BUS, p_max=CAMPUS_PV_P_MAX),)

    buses = [Bus(id=0, kind=BusKind.SLACK)]
    for bus_id in range(1, CAMPUS_BUSES):
        p_load = round(float(demands[bus_id - 1]), 6)
        buses.append(Bus(id=bus_id, p_inj=-p_load, q_inj=-round(p_load * tan_phi, 6)))
    labelled = with_device_labels(buses, storage, pv)

    return Network(
        buses=labelled,
        branches=branches,
        storage=storage,
        pv=pv,
        base_mva=1.0,
        name=f"campus-like-{seed}",
        radial=True,
    )
