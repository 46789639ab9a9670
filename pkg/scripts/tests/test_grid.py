import numpy as np
import pytest

from besovkit.analysis.grid import (
    FREQUENCY,
    TRUNCATION_SUSPECT,
    Grid,
    SampledFunction,
    forward_ft,
    inverse_ft,
    read_csv,
    sample,
    spectral_derivative,
    write_csv,
)
from besovkit.errors import GridMismatchError, NonFiniteError, ResolutionError


def test_grid_spacings(line_grid):
    assert line_grid.dx == pytest.approx(1 / 64)
    assert line_grid.dxi == pytest.approx(np.pi / 32)
    assert line_grid.xi_max == pytest.approx(64 * np.pi)
    assert line_grid.axis[0] == -32.0
    assert line_grid.frequency_axis[0] == 0.0
    assert line_grid.frequency_axis[-1] == pytest.approx(-line_grid.dxi)


@pytest.mark.parametrize("N, L, M", [(3, 1.0, 64), (1, 0.0, 64), (1, 1.0, 1000), (1, 1.0, 2)])
def test_invalid_grid(N, L, M):
    with pytest.raises(ResolutionError):
        Grid(N, L, M)


def test_refined_and_widened_grids(line_grid):
    assert line_grid.refined().dx == pytest.approx(line_grid.dx / 2)
    assert line_grid.widened().dx == pytest.approx(line_grid.dx)
    assert line_grid.widened().dxi == pytest.approx(line_grid.dxi / 2)


def test_forward_ft_of_gaussian():
    grid = Grid(1, 20, 4096)
    f = sample(grid, lambda x: np.exp(-x[..., 0] ** 2 / 2))
    xi = grid.frequencies()[..., 0]
    expected = np.sqrt(2 * np.pi) * np.exp(-(xi**2) / 2)
    spectrum = forward_ft(f)
    assert spectrum.side == FREQUENCY
    assert np.max(np.abs(spectrum.values[..., 0] - expected)) <= 1e-8 * np.sqrt(2 * np.pi)
    assert TRUNCATION_SUSPECT not in spectrum.flags


def test_forward_ft_of_plane_gaussian(plane_grid):
    f = sample(plane_grid, lambda x: np.exp(-np.sum(x**2, axis=-1) / 2))
    expected = 2 * np.pi * np.exp(-np.sum(plane_grid.frequencies() ** 2, axis=-1) / 2)
    assert np.max(np.abs(forward_ft(f).values[..., 0] - expected)) <= 1e-8 * 2 * np.pi


def test_real_even_function_has_real_transform(line_grid):
    f = sample(line_grid, lambda x: np.exp(-x[..., 0] ** 2) * np.cos(3 * x[..., 0]))
    spectrum = forward_ft(f).values
    assert np.max(np.abs(spectrum.imag)) <= 1e-10 * np.max(np.abs(spectrum))


def test_transform_round_trip(small_ensemble):
    for f in small_ensemble:
        back = inverse_ft(forward_ft(f))
        assert np.max(np.abs(back.values - f.values)) <= 1e-10 * np.max(np.abs(f.values))


def test_single_frequency_inverse(small_grid):
    n0 = 5
    values = np.zeros(small_grid.shape, dtype=complex)
    values[n0] = 1.0
    g = SampledFunction(small_grid, values, side=FREQUENCY)
    xi0 = small_grid.frequency_axis[n0]
    expected = small_grid.dxi / (2 * np.pi) * np.exp(1j * xi0 * small_grid.axis)
    assert np.allclose(inverse_ft(g).values[..., 0], expected, rtol=0, atol=1e-14)


def test_discrete_plancherel(small_ensemble):
    grid = small_ensemble[0].grid
    for f in small_ensemble:
        physical = np.sum(np.abs(f.values) ** 2) * grid.dx
        spectral = np.sum(np.abs(forward_ft(f).values) ** 2) * grid.dxi / (2 * np.pi)
        assert spectral == pytest.approx(physical, rel=1e-12)


def test_second_derivative_of_sine():
    grid = Grid(1, 16 * np.pi, 2048)
    f = sample(grid, lambda x: np.sin(x[..., 0]))
    second = spectral_derivative(f, 2)
    assert np.max(np.abs(second.values + f.values)) <= 1e-8


def test_first_derivative_of_gaussian():
    grid = Grid(1, 16, 512)
    x = grid.axis
    f = sample(grid, lambda p: np.exp(-p[..., 0] ** 2))
    derivative = spectral_derivative(f, 1).values[..., 0]
    assert np.max(np.abs(derivative - (-2 * x * np.exp(-(x**2))))) <= 1e-9


def test_zero_order_derivative_is_identity(small_ensemble):
    f = small_ensemble[0]
    assert spectral_derivative(f, 0) is f


def test_derivative_order_limit(small_ensemble):
    with pytest.raises(ResolutionError):
        spectral_derivative(small_ensemble[0], 7)


def test_non_finite_samples_rejected(small_grid):
    values = np.zeros(small_grid.shape)
    values[3] = np.nan
    with pytest.raises(NonFiniteError):
        SampledFunction(small_grid, values)


def test_non_decaying_function_is_flagged(small_grid):
    f = SampledFunction(small_grid, np.ones(small_grid.shape))
    assert TRUNCATION_SUSPECT in forward_ft(f).flags


def test_inverse_of_physical_side_rejected(small_ensemble):
    with pytest.raises(GridMismatchError):
        inverse_ft(small_ensemble[0])


def test_mismatched_grids_cannot_be_added(small_grid, line_grid):
    a = SampledFunction(small_grid, np.zeros(small_grid.shape))
    b = SampledFunction(line_grid, np.zeros(line_grid.shape))
    with pytest.raises(GridMismatchError):
        a + b


def test_csv_keeps_vector_fiber(tmp_path):
    grid = Grid(1, 4, 16)
    rng = np.random.default_rng(1)
    values = rng.standard_normal((16, 2)) + 1j * rng.standard_normal((16, 2))
    f = SampledFunction(grid, values)
    path = write_csv(f, tmp_path / "f.csv")
    with open(path) as csvfile:
        assert csvfile.readline().strip() == "i0,x0,re_0,im_0,re_1,im_1"
    assert np.array_equal(read_csv(path, grid).values, f.values)
