import logging

import numpy as np

from besovkit.analysis.grid import Grid, SampledFunction

logger = logging.getLogger(__name__)


def random_unit_vector(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def gaussian_mixture(
    grid: Grid,
    rng: np.random.Generator,
    fiber_dim: int = 1,
    width_range: tuple[float, float] | None = None,
) -> SampledFunction:
    """
    Sum of 1-3 Gaussians exp(-|x - c|^2 / w^2) v with centers in [-L/4, L/4]^N,
    widths in width_range and random complex unit directions v in C^d.
    """
    if width_range is None:
        width_range = default_width_range(grid)
    points = grid.points()
    values = np.zeros(grid.shape + (fiber_dim,), dtype=complex)
    for _ in range(rng.integers(1, 4)):
        center = rng.uniform(-grid.L / 4, grid.L / 4, size=grid.N)
        width = rng.uniform(*width_range)
        amplitude = rng.uniform(0.5, 2.0)
        envelope = np.exp(-np.sum((points - center) ** 2, axis=-1) / width**2)
        values += amplitude * envelope[..., np.newaxis] * random_unit_vector(rng, fiber_dim)
    return SampledFunction(grid, values)


def default_width_range(grid: Grid) -> tuple[float, float]:
    """Widths keeping members decayed at the box boundary and resolved on the grid."""
    upper = min(2.0, grid.L / 8)
    lower = 0.5 if grid.N == 1 else 1.0
    return min(lower, upper), upper


def gaussian_mixture_ensemble(
    grid: Grid,
    size: int,
    seed: int,
    fiber_dim: int = 1,
    width_range: tuple[float, float] | None = None,
) -> list[SampledFunction]:
    """Seeded ensemble; the same (grid, size, seed, fiber_dim) always yields the same members."""
    rng = np.random.default_rng(seed)
    members = [gaussian_mixture(grid, rng, fiber_dim, width_range) for _ in range(size)]
    logger.debug(f"Generated {size} ensemble members with seed {seed} on {grid}")
    return members


def gaussian_kernel_ensemble(
    grid: Grid, size: int, seed: int, fiber_dim: int = 2
) -> list[SampledFunction]:
    """Matrix kernels exp(-|t|^2 / w^2) B with random complex d x d matrices B."""
    rng = np.random.default_rng(seed)
    points = grid.points()
    kernels = []
    for _ in range(size):
        width = rng.uniform(0.5, min(1.5, grid.L / 8))
        B = rng.standard_normal((fiber_dim, fiber_dim)) + 1j * rng.standard_normal((fiber_dim, fiber_dim))
        envelope = np.exp(-np.sum(points**2, axis=-1) / width**2)
        kernels.append(SampledFunction(grid, envelope[..., np.newaxis, np.newaxis] * B))
    return kernels
