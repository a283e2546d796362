import numpy as np
import pytest

from storage.models import EnergyMap, GeoPoint, GridSpec

ORIGIN = GeoPoint(53.3440, -6.2670)


def make_grid(height: int, width: int, resolution: float = 0.25) -> GridSpec:
    return GridSpec(origin=ORIGIN, height=height, width=width, resolution=resolution)


def well_map(grid: GridSpec, wells, depth: float = -100.0, background: float = 1.0) -> EnergyMap:
    """Constant map with one-pixel wells at the given (i, j) pixels."""
    values = np.full(grid.shape, background, dtype=float)
    for i, j in wells:
        values[i - 1, j - 1] = depth
    return EnergyMap(grid=grid, values=values)


@pytest.fixture
def grid16() -> GridSpec:
    return make_grid(16, 16)


@pytest.fixture
def grid40() -> GridSpec:
    return make_grid(40, 40)


@pytest.fixture
def zero_map(grid40) -> EnergyMap:
    return EnergyMap(grid=grid40, values=np.zeros(grid40.shape))


@pytest.fixture
def random_map(grid40) -> EnergyMap:
    rng = np.random.default_rng(7)
    return EnergyMap(grid=grid40, values=rng.normal(size=grid40.shape))
