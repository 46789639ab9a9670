import numpy as np
import pytest

from besovkit.analysis.grid import FREQUENCY, Grid, SampledFunction, forward_ft, inverse_ft
from besovkit.analysis.partition import (
    build_dyadic_system,
    dyadic_block,
    dyadic_blocks,
    generator_nodes,
    phi_profile,
    psi,
    write_blocks_csv,
    write_psi_csv,
)
from besovkit.errors import GridMismatchError, ResolutionError


def test_system_limits(line_system):
    assert line_system.K_max == 7
    assert generator_nodes(line_system.grid) >= 8


def test_partition_of_unity(line_system, plane_grid):
    assert line_system.partition_residual() <= 1e-12
    assert build_dyadic_system(plane_grid).partition_residual() <= 1e-12
    assert line_system.blocks.min() >= -1e-12


def test_generator_support_and_telescoping():
    s = np.linspace(0.0, 5.0, 2001)
    values = psi(s)
    assert np.all(values >= 0)
    assert np.all(values[(s <= 0.5) | (s >= 2.0)] == 0)
    window = np.linspace(1.0, 2.0, 101)
    assert np.allclose(psi(window) + psi(window / 2), 1.0, atol=1e-12)


def test_block_profiles():
    assert phi_profile(3, np.array([32.0]))[0] == 0.0
    assert phi_profile(0, np.array([0.0]))[0] == 1.0
    assert phi_profile(-1, np.array([1.0]))[0] == 0.0


def test_block_beyond_resolution(line_system):
    with pytest.raises(ResolutionError):
        line_system.phi(line_system.K_max + 1)
    assert not line_system.phi(-1).any()


def test_coarse_frequency_grid_rejected():
    with pytest.raises(ResolutionError):
        build_dyadic_system(Grid(1, 2, 64))


def test_blocks_sum_to_function(line_system, line_grid, gaussian):
    f = gaussian(line_grid, width=0.7, center=1.5)
    total = sum((block for _, block in dyadic_blocks(f, line_system)), start=f * 0)
    assert np.max(np.abs(total.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))


def test_spectral_localization(line_system, line_grid):
    """A spectrum inside 17 < |xi| < 31 only meets blocks 4 and 5."""
    t = np.abs(line_grid.frequencies()[..., 0])
    inside = (t > 17) & (t < 31)
    bump = np.zeros_like(t)
    bump[inside] = np.exp(-1.0 / ((t[inside] - 17) * (31 - t[inside])))
    f = inverse_ft(SampledFunction(line_grid, bump, side=FREQUENCY))
    peak = np.max(np.abs(f.values))
    for k in (0, 1, 2, 3, 6, 7):
        assert np.max(np.abs(dyadic_block(f, k, line_system).values)) <= 1e-12 * peak
    assert np.max(np.abs(dyadic_block(f, 4, line_system).values)) > 1e-3 * peak


def test_almost_orthogonality(line_system, line_grid, gaussian):
    f = gaussian(line_grid, width=0.3)
    blocks = dict(dyadic_blocks(f, line_system))
    norm = np.sum(np.abs(f.values) ** 2) * line_grid.dx
    for j in blocks:
        for k in blocks:
            if abs(j - k) >= 2:
                inner = np.sum(blocks[j].values * np.conj(blocks[k].values)) * line_grid.dx
                assert abs(inner) <= 1e-12 * norm


def test_gaussian_block_decay(line_system, line_grid, gaussian):
    f = gaussian(line_grid)
    norms = [np.sqrt(np.sum(np.abs(block.values) ** 2) * line_grid.dx) for _, block in dyadic_blocks(f, line_system)]
    assert norms[4] < 1e-2 * norms[3]
    assert norms[5] < 1e-2 * norms[4]


def test_block_grid_must_match(line_system, small_ensemble):
    with pytest.raises(GridMismatchError):
        dyadic_block(small_ensemble[0], 0, line_system)


def test_block_of_matrix_function(line_system, line_grid):
    envelope = np.exp(-line_grid.points()[..., 0] ** 2)
    values = envelope[..., np.newaxis, np.newaxis] * np.array([[1.0, 2.0], [0.0, 1j]])
    f = SampledFunction(line_grid, values)
    block = dyadic_block(f, 1, line_system)
    assert block.is_matrix
    spectrum = forward_ft(block).values
    outside = ~line_system.annulus_mask(1, "I")
    assert np.max(np.abs(spectrum[outside])) <= 1e-12 * np.max(np.abs(forward_ft(f).values))


def test_partition_exports(tmp_path, line_system):
    psi_path = write_psi_csv(tmp_path / "psi.csv", points=65)
    with open(psi_path) as csvfile:
        lines = csvfile.read().splitlines()
    assert lines[0] == "s,psi,psi_plus_half_scale"
    assert len(lines) == 66

    blocks_path = write_blocks_csv(line_system, tmp_path / "blocks.csv")
    with open(blocks_path) as csvfile:
        header = csvfile.readline().strip().split(",")
    assert header == ["xi"] + [f"phi_{k}" for k in range(line_system.K_max + 1)]
