"""
Littlewood-Paley partition of unity on the frequency grid.

The generator is built from the bump chi(s) = exp(-1/((s - 1/2)(2 - s))) on
(1/2, 2): psi(s) = chi(s) / sum_j chi(2^-j s), where at most two terms of the
denominator are nonzero. Blocks are phi_k(t) = psi(2^-k |t|) for k >= 1,
phi_0 = 1 - sum_{k>=1} phi_k, and the top block K_max absorbs every block
beyond the grid so that sum_k phi_k = 1 holds exactly on the nodes.
"""

import csv
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np
import scipy.fft

from besovkit.analysis.grid import FREQUENCY, Grid, SampledFunction, forward_ft, inverse_ft
from besovkit.errors import GridMismatchError, ResolutionError

logger = logging.getLogger(__name__)

MIN_GENERATOR_NODES = 8
_SUBCELLS = 8


def chi(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    inside = (s > 0.5) & (s < 2.0)
    out = np.zeros_like(s)
    si = s[inside]
    out[inside] = np.exp(-1.0 / ((si - 0.5) * (2.0 - si)))
    return out


def psi(s: np.ndarray) -> np.ndarray:
    """Dyadic generator: nonnegative, supported in [1/2, 2], psi(s) + psi(s/2) = 1 on [1, 2]."""
    s = np.asarray(s, dtype=float)
    numerator = chi(s)
    neighbour = np.where(s >= 1.0, chi(s / 2.0), chi(2.0 * s))
    denominator = numerator + neighbour
    out = np.zeros_like(s)
    np.divide(numerator, denominator, out=out, where=denominator > 0)
    return out


def phi_profile(k: int, t: np.ndarray) -> np.ndarray:
    """Untruncated phi_k as a function of |t|."""
    t = np.abs(np.asarray(t, dtype=float))
    if k < 0:
        return np.zeros_like(t)
    if k == 0:
        return np.where(t < 1.0, 1.0, psi(t))
    return psi(t / 2.0**k)


@dataclass(frozen=True)
class DyadicSystem:
    grid: Grid
    K_max: int

    @cached_property
    def blocks(self) -> np.ndarray:
        """phi_k on the frequency grid, shape (K_max + 1,) + grid.shape."""
        modulus = self.grid.frequency_modulus
        blocks = np.empty((self.K_max + 1,) + self.grid.shape)
        for k in range(self.K_max):
            blocks[k] = phi_profile(k, modulus)
        blocks[self.K_max] = 1.0 - blocks[: self.K_max].sum(axis=0)
        blocks.setflags(write=False)
        return blocks

    def phi(self, k: int) -> np.ndarray:
        if k < 0:
            return np.zeros(self.grid.shape)
        if k > self.K_max:
            raise ResolutionError(f"Block {k} exceeds the grid resolution K_max={self.K_max}")
        return self.blocks[k]

    def annulus_mask(self, k: int, kind: str = "J") -> np.ndarray:
        """J_k = {2^(k-1) <= |t| <= 2^k} or I_k = {2^(k-1) <= |t| <= 2^(k+1)}; J_0 and I_0 are the balls."""
        modulus = self.grid.frequency_modulus
        upper = 2.0**k if kind == "J" else 2.0 ** (k + 1)
        lower = 0.0 if k == 0 else 2.0 ** (k - 1)
        return (modulus >= lower) & (modulus <= upper)

    def partition_residual(self) -> float:
        return float(np.abs(self.blocks.sum(axis=0) - 1.0).max())


def generator_nodes(grid: Grid) -> int:
    """Number of frequency nodes n * dxi on one axis inside [1/2, 2]."""
    n = np.arange(grid.M // 2 + 1) * grid.dxi
    return int(np.count_nonzero((n >= 0.5) & (n <= 2.0)))


def build_dyadic_system(grid: Grid) -> DyadicSystem:
    nodes = generator_nodes(grid)
    if nodes < MIN_GENERATOR_NODES:
        raise ResolutionError(
            f"Frequency spacing {grid.dxi:.4g} leaves {nodes} nodes across [1/2, 2], "
            f"need at least {MIN_GENERATOR_NODES}; widen the box"
        )
    K_max = int(np.floor(np.log2(grid.xi_max)))
    if K_max < 1:
        raise ResolutionError(f"xi_max={grid.xi_max:.4g} does not reach the first dyadic block")
    system = DyadicSystem(grid, K_max)
    logger.debug(f"Built dyadic system with K_max={K_max} on {grid}")
    return system


def _check_grid(f: SampledFunction, system: DyadicSystem):
    if f.grid != system.grid:
        raise GridMismatchError(f"Function grid {f.grid} differs from partition grid {system.grid}")


def _apply_block(spectrum: SampledFunction, phi_k: np.ndarray) -> SampledFunction:
    window = phi_k.reshape(phi_k.shape + (1,) * len(spectrum.fiber_shape))
    return inverse_ft(spectrum.with_values(window * spectrum.values))


def dyadic_block(f: SampledFunction, k: int, system: DyadicSystem) -> SampledFunction:
    """k-th Littlewood-Paley block F^{-1}[phi_k Ff]."""
    _check_grid(f, system)
    phi_k = system.phi(k)
    return _apply_block(forward_ft(f), phi_k)


def dyadic_blocks(
    f: SampledFunction, system: DyadicSystem, boundary_threshold: float | None = None
) -> Iterator[tuple[int, SampledFunction]]:
    """All blocks k = 0..K_max sharing one forward transform."""
    _check_grid(f, system)
    spectrum = forward_ft(f, boundary_threshold)
    for k in range(system.K_max + 1):
        yield k, _apply_block(spectrum, system.blocks[k])


def spectral_blocks(spectrum: SampledFunction, system: DyadicSystem) -> Iterator[tuple[int, SampledFunction]]:
    """phi_k * g on the frequency side, without transforming back."""
    if spectrum.side != FREQUENCY:
        raise GridMismatchError("spectral_blocks expects a frequency-side function")
    for k in range(system.K_max + 1):
        window = system.blocks[k].reshape(system.grid.shape + (1,) * len(spectrum.fiber_shape))
        yield k, spectrum.with_values(window * spectrum.values)


def _interval_overlap(lo: np.ndarray, hi: np.ndarray, a: float, b: float) -> np.ndarray:
    return np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)


def annulus_cell_weights(grid: Grid, r_in: float, r_out: float, side: str = FREQUENCY) -> np.ndarray:
    """
    Fraction of each grid cell lying in {r_in <= |t| <= r_out}.

    Exact for N = 1; for N = 2 every cell is supersampled on an 8 x 8 sub-grid.
    Multiplying by the cell volume gives quadrature weights for annulus integrals.
    """
    h = grid.dxi if side == FREQUENCY else grid.dx
    coords = grid.frequencies() if side == FREQUENCY else grid.points()
    if grid.N == 1:
        t = coords[..., 0]
        lo, hi = t - h / 2.0, t + h / 2.0
        overlap = _interval_overlap(lo, hi, r_in, r_out) + _interval_overlap(lo, hi, -r_out, -r_in)
        return overlap / h

    offsets = (np.arange(_SUBCELLS) + 0.5) / _SUBCELLS - 0.5
    fraction = np.zeros(grid.shape)
    for dx in offsets:
        for dy in offsets:
            radius = np.hypot(coords[..., 0] + dx * h, coords[..., 1] + dy * h)
            fraction += (radius >= r_in) & (radius <= r_out)
    return fraction / _SUBCELLS**2


def write_psi_csv(path: str | Path, points: int = 1025) -> Path:
    """Generator profile on [1/4, 4]: columns s, psi, psi_plus_half_scale."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    s = np.linspace(0.25, 4.0, points)
    with open(path, "w", newline="") as csvfile:
        csv_writer = csv.writer(csvfile)
        csv_writer.writerow(["s", "psi", "psi_plus_half_scale"])
        for s_i, psi_i, telescoped in zip(s, psi(s), psi(s) + psi(s / 2.0)):
            csv_writer.writerow([repr(float(s_i)), repr(float(psi_i)), repr(float(telescoped))])
    return path


def write_blocks_csv(system: DyadicSystem, path: str | Path) -> Path:
    """phi_k along the first frequency axis in ascending order: columns xi, phi_0..phi_K."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    order = scipy.fft.fftshift(np.arange(system.grid.M))
    index = (order,) + (0,) * (system.grid.N - 1)
    xi = system.grid.frequency_axis[order]
    columns = [system.blocks[k][index] for k in range(system.K_max + 1)]
    with open(path, "w", newline="") as csvfile:
        csv_writer = csv.writer(csvfile)
        csv_writer.writerow(["xi"] + [f"phi_{k}" for k in range(system.K_max + 1)])
        for row, xi_i in enumerate(xi):
            csv_writer.writerow([repr(float(xi_i))] + [repr(float(c[row])) for c in columns])
    return path
