import sys
from pathlib import Path

import numpy as np
import pytest

# Add besovkit to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from besovkit.analysis.ensemble import gaussian_mixture_ensemble
from besovkit.analysis.grid import Grid, SampledFunction
from besovkit.analysis.partition import build_dyadic_system


def _gaussian(grid: Grid, width: float = 1.0, center: float = 0.0, vector=None) -> SampledFunction:
    """exp(-|x - c|^2 / w^2) v sampled on grid."""
    vector = np.asarray([1.0] if vector is None else vector, dtype=complex)
    envelope = np.exp(-np.sum((grid.points() - center) ** 2, axis=-1) / width**2)
    return SampledFunction(grid, envelope[..., np.newaxis] * vector)


@pytest.fixture(scope="session")
def line_grid() -> Grid:
    return Grid(1, 32, 4096)


@pytest.fixture(scope="session")
def small_grid() -> Grid:
    return Grid(1, 32, 1024)


@pytest.fixture(scope="session")
def plane_grid() -> Grid:
    return Grid(2, 16, 128)


@pytest.fixture(scope="session")
def line_system(line_grid):
    return build_dyadic_system(line_grid)


@pytest.fixture(scope="session")
def small_system(small_grid):
    return build_dyadic_system(small_grid)


@pytest.fixture(scope="session")
def small_ensemble(small_grid):
    return gaussian_mixture_ensemble(small_grid, 8, seed=0)


@pytest.fixture(scope="session")
def gaussian():
    return _gaussian
