import numpy as np
import pytest

from besovkit.analysis.ensemble import gaussian_kernel_ensemble, gaussian_mixture_ensemble
from besovkit.analysis.grid import Grid, SampledFunction
from besovkit.analysis.spaces import BesovParams
from besovkit.errors import ConfigError, GridMismatchError, ResolutionError
from besovkit.operators.multiplier import (
    LOWER_BOUND,
    SAMPLE_ONLY,
    apply_multiplier,
    check_block_derivative_bounds,
    check_convolution_bound,
    check_hormander,
    check_mikhlin,
    convolve,
    estimate_M_p_gamma,
    estimate_fourier_type_constant,
    multiplier_suite,
    verify_besov_multiplier_bound,
)
from besovkit.operators.opcalc import PositiveOperator
from besovkit.operators.symbols import (
    Symbol,
    identity_symbol,
    jump_symbol,
    resolvent_sigma,
    riesz_like,
    sigma_scalar,
    symbol_from_spec,
)


@pytest.fixture(scope="module")
def kernel_grid():
    return Grid(1, 16, 512)


def test_identity_multiplier(small_ensemble):
    f = small_ensemble[0]
    out = apply_multiplier(identity_symbol(1), f)
    assert np.max(np.abs(out.values - f.values)) <= 1e-12 * np.max(np.abs(f.values))


def test_shift_multiplier_translates(small_grid, gaussian):
    f = gaussian(small_grid, width=1.0, center=2.0)
    shifted = apply_multiplier(symbol_from_spec("shift:0.5", small_grid), f)
    steps = int(round(0.5 / small_grid.dx))
    assert np.max(np.abs(shifted.values - np.roll(f.values, -steps, axis=0))) <= 1e-12


def test_multiplier_dimension_mismatch(small_ensemble):
    with pytest.raises(GridMismatchError):
        apply_multiplier(identity_symbol(1, dim=2), small_ensemble[0])


def test_registry_lookup(small_grid):
    assert symbol_from_spec("decay", small_grid).name == "decay"
    assert symbol_from_spec({"name": "sigma-scalar", "argument": 2}, small_grid).name == "sigma-scalar:2"
    full = symbol_from_spec({"name": "resolvent-sigma", "A": [[1, 0], [0, 4]], "lambda": 10}, small_grid)
    assert full.dim == 2
    with pytest.raises(ConfigError):
        symbol_from_spec("nonsense", small_grid)


def test_scalar_resolvent_symbol_matches_sigma_scalar():
    t = np.linspace(-20, 20, 81)[:, np.newaxis]
    sigma = resolvent_sigma(PositiveOperator(np.eye(1)), 3.0)
    assert np.allclose(sigma.evaluate(t), sigma_scalar(1, 1, 3.0).evaluate(t), atol=1e-14)


def test_closed_form_derivative():
    t = np.linspace(-10, 10, 41)[:, np.newaxis]
    derivative = riesz_like(1, 1).derivative_at(t, (1,))[..., 0, 0]
    assert np.allclose(derivative, (1 + t[:, 0] ** 2) ** -1.5, atol=1e-6)


def test_rescaled_symbol():
    m = sigma_scalar(1, 1, 1.0)
    t = np.linspace(-4, 4, 9)[:, np.newaxis]
    assert np.allclose(m.rescaled(2.0).evaluate(t), m.evaluate(2.0 * t))


def test_sample_only_symbol_cannot_be_evaluated(small_grid):
    jump = jump_symbol(small_grid, 1)
    assert not jump.closed_form
    with pytest.raises(ResolutionError):
        jump.evaluate(np.zeros((1, 1)))
    with pytest.raises(ResolutionError):
        Symbol(1, 1)


def test_mikhlin_identity(small_grid):
    report = check_mikhlin(identity_symbol(1), 2, None, 1.0, small_grid)
    assert report.constant == pytest.approx(1.0)
    assert report.passed
    assert report.parameters["l"] == 2


def test_mikhlin_smooth_symbol(small_grid):
    report = check_mikhlin(sigma_scalar(1, 1, 1.0), 2, None, 10.0, small_grid)
    assert 0.99 < report.constant < 10
    assert report.passed
    assert check_mikhlin(sigma_scalar(1, 1, 1.0), 2, None, None, small_grid).passed is None


@pytest.mark.slow
def test_mikhlin_jump_grows_under_refinement():
    narrow = Grid(1, 32, 1024)
    wide = narrow.widened()
    coarse = check_mikhlin(jump_symbol(narrow, 1), 2, None, 10.0, narrow)
    fine = check_mikhlin(jump_symbol(wide, 1), 2, None, 10.0, wide)
    assert SAMPLE_ONLY in fine.flags
    assert fine.constant > 1.5 * coarse.constant
    assert not fine.passed


def test_hormander_identity(small_grid):
    """Only alpha = 0 survives: sqrt(R^-1 |{R <= |t| <= 4R}|) = sqrt 6."""
    report = check_hormander(identity_symbol(1), 2, None, 2.5, small_grid)
    assert report.constant == pytest.approx(np.sqrt(6), rel=1e-12)
    assert report.passed


def test_block_derivative_bounds_identity():
    assert check_block_derivative_bounds(identity_symbol(1), 2, None, np.inf, 5).constant == pytest.approx(1.0)
    endpoint = check_block_derivative_bounds(identity_symbol(1), 2, None, 2, 5)
    assert endpoint.constant == pytest.approx(np.sqrt(6), rel=1e-2)
    with pytest.raises(ResolutionError):
        check_block_derivative_bounds(identity_symbol(1), 2, None, 3, 5)


def test_M_p_gamma_is_scale_invariant_for_constants(small_grid):
    report = estimate_M_p_gamma(identity_symbol(1), 2, None, small_grid, j_range=(-2, 2))
    values = [value for _, value in report.details["scale_values"]]
    assert len(values) == 5
    assert np.allclose(values, values[0], rtol=1e-12)
    assert report.constant == pytest.approx(values[0])


def test_M_p_gamma_sample_only(small_grid):
    report = estimate_M_p_gamma(jump_symbol(small_grid, 1), 2, None, small_grid)
    assert SAMPLE_ONLY in report.flags
    assert report.details["minimizing_scale"] == 1.0


def test_fourier_type_constant_is_plancherel(small_ensemble):
    report = estimate_fourier_type_constant(2, None, small_ensemble)
    assert report.constant == pytest.approx(np.sqrt(2 * np.pi), rel=1e-8)
    assert LOWER_BOUND in report.flags


def test_convolution_of_gaussians(kernel_grid, gaussian):
    kernel = gaussian(kernel_grid).values[..., np.newaxis]
    out = convolve(SampledFunction(kernel_grid, kernel), gaussian(kernel_grid))
    expected = np.sqrt(np.pi / 2) * np.exp(-(kernel_grid.axis**2) / 2)
    assert np.max(np.abs(out.values[..., 0] - expected)) <= 1e-10


def test_gaussian_convolution_bound(kernel_grid):
    """For exp(-t^2) both Schur constants equal sqrt pi, which is also the peak of the kernel transform."""
    envelope = np.exp(-kernel_grid.axis**2)
    kernel = SampledFunction(kernel_grid, envelope[:, np.newaxis, np.newaxis])
    ensemble = gaussian_mixture_ensemble(kernel_grid, 4, seed=3)
    report = check_convolution_bound(kernel, None, 2.0, ensemble, C1=1.0)
    assert report.details["C2"] == pytest.approx(np.sqrt(np.pi), rel=1e-10)
    assert report.details["C3"] == pytest.approx(np.sqrt(np.pi), rel=1e-10)
    assert report.details["fourier_norm"] == pytest.approx(np.sqrt(np.pi), rel=1e-10)
    assert report.passed
    assert 0.5 * report.bound < report.constant <= report.bound * (1 + 1e-6)


@pytest.fixture(scope="module")
def matrix_kernels(kernel_grid):
    return gaussian_kernel_ensemble(kernel_grid, 20, seed=5, fiber_dim=2)


@pytest.fixture(scope="module")
def vector_inputs(kernel_grid):
    return gaussian_mixture_ensemble(kernel_grid, 4, seed=6, fiber_dim=2)


@pytest.mark.parametrize("q", [1.0, 2.0, np.inf])
@pytest.mark.parametrize("index", range(20))
def test_matrix_kernel_convolution_bound(matrix_kernels, vector_inputs, q, index):
    report = check_convolution_bound(matrix_kernels[index], None, q, vector_inputs, C1=1.0)
    assert report.passed
    assert report.constant <= report.bound * (1 + 1e-6)
    assert report.details["fourier_norm"] <= report.details["C2_upper"] * (1 + 1e-9)


def test_convolution_needs_matrix_kernel(kernel_grid, gaussian):
    with pytest.raises(GridMismatchError):
        check_convolution_bound(gaussian(kernel_grid), None, 2.0, [])


def test_besov_multiplier_identity(small_ensemble, small_system):
    report = verify_besov_multiplier_bound(identity_symbol(1), BesovParams(), small_ensemble[:3], small_system)
    assert report.details["empirical_ratio"] == pytest.approx(1.0, rel=1e-10)
    assert len(report.details["block_constants"]) == small_system.K_max + 1
    assert report.bound > 0


def test_multiplier_suite_kappa_for_identity(small_ensemble, small_system):
    suite = multiplier_suite([identity_symbol(1)], BesovParams(), small_ensemble[:3], small_system)
    assert suite["kappa"] == pytest.approx(1.0, rel=1e-10)
    assert suite["symbols"][0]["symbol"] == "identity"
