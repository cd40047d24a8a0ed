from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.network.loader import load_network  # noqa: E402
from src.network.model import Branch, Bus, BusKind, Network, StorageUnit  # noqa: E402
from src.network.synthetic import generate_campus_like  # noqa: E402

FIXTURES = ROOT / "src" / "test" / "fixtures"
IEEE33_PATH = ROOT / "data" / "networks" / "ieee33.json"


def two_bus_network(
    *,
    r: float = 0.01,
    x: float = 0.1,
    p_load: float = 0.2,
    q_load: float = 0.0,
    storage: tuple[StorageUnit, ...] = (),
    v_min: float = 0.95,
    v_max: float = 1.05,
) -> Network:
    return Network(
        buses=(
            Bus(id=0, kind=BusKind.SLACK, v_min=v_min, v_max=v_max),
            Bus(id=1, p_inj=-p_load, q_inj=-q_load, v_min=v_min, v_max=v_max),
        ),
        branches=(Branch(0, 1, r, x),),
        storage=storage,
        name="two-bus",
    )


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def two_bus() -> Network:
    return load_network(FIXTURES / "two_bus.json")


@pytest.fixture
def triangle() -> Network:
    return load_network(FIXTURES / "triangle.json")


@pytest.fixture(scope="session")
def ieee33() -> Network:
    return load_network(IEEE33_PATH)


@pytest.fixture(scope="session")
def campus() -> Network:
    return generate_campus_like(0)


@pytest.fixture
def make_two_bus():
    return two_bus_network
