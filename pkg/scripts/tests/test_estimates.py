import numpy as np
import pytest

from besovkit.analysis.ensemble import gaussian_mixture_ensemble
from besovkit.analysis.grid import SampledFunction
from besovkit.analysis.spaces import lp_norm
from besovkit.errors import ConfigError
from besovkit.operators.opcalc import PositiveOperator
from besovkit.solvers.doe import EllipticProblem, gaussian_coefficient
from besovkit.solvers.estimates import (
    default_h_grid,
    refinement_study,
    sigma_bound,
    verify_coercivity,
    verify_interpolation_embedding,
    verify_perturbation_shape,
)


@pytest.fixture(scope="module")
def vector_ensemble(small_grid):
    return gaussian_mixture_ensemble(small_grid, 5, seed=4, fiber_dim=2)


def test_coercivity_of_diagonal_system(small_grid, small_system, vector_ensemble):
    """Every term is a nonnegative multiple of u^ at each frequency, so the weighted ratio lies in [1, sqrt 3]."""
    problem = EllipticProblem(PositiveOperator.diagonal([1.0, 4.0]), vector_ensemble[0])
    zero = SampledFunction(small_grid, np.zeros(small_grid.shape + (2,)))
    report = verify_coercivity(problem, vector_ensemble + [zero], small_system, lambdas=[1, 10, 100], workers=1)

    assert report.passed
    assert report.skipped == 1
    assert report.failed == 0
    assert report.evaluated == 15
    assert report.spread < 2
    assert [row["lambda"] for row in report.curve] == [1, 10, 100]
    for row in report.curve:
        assert 1 - 1e-9 <= row["C_hat_lambda_weighted"] <= np.sqrt(3) + 1e-9
        assert row["C_hat"] <= row["C_hat_lambda_weighted"]
    # without A_1 both first-order variants coincide
    assert report.C_hat_derivative == pytest.approx(report.C_hat)


def test_interpolation_balance_point(small_system, vector_ensemble):
    # P >= 2Q here, so h* = 3Q/P stays below 1.5
    h_grid = default_h_grid(h0=10.0)
    report = verify_interpolation_embedding(
        vector_ensemble, PositiveOperator.diagonal([1.0, 9.0]), 1, 2, 0.25, small_system, h_grid, workers=1
    )
    assert report.passed
    assert report.x == 0.5
    assert report.theta == pytest.approx(0.25)
    assert report.clipped == 0
    assert report.slope == pytest.approx(-1.0, abs=1e-9)
    step = np.log10(h_grid[1] / h_grid[0])
    for row in report.members:
        assert row["lhs"] <= report.C_mu * row["min_rhs"] * (1 + 1e-12)
        assert abs(np.log10(row["h_min"] / row["h_star"])) <= step + 1e-12


@pytest.mark.parametrize("alpha, l, mu", [(3, 2, 0.25), (1, 2, 0.6), (1, 0, 0.25), (1, 2, 0.0)])
def test_interpolation_parameters_rejected(small_system, vector_ensemble, alpha, l, mu):
    with pytest.raises(ConfigError):
        verify_interpolation_embedding(vector_ensemble, PositiveOperator(np.eye(2)), alpha, l, mu, small_system)


def test_perturbation_decays_with_lambda(small_system, small_ensemble):
    problem = EllipticProblem(PositiveOperator(np.eye(1)), small_ensemble[0], A1=gaussian_coefficient(0.1, np.eye(1)))
    h_grid = default_h_grid()
    report = verify_perturbation_shape(problem, small_ensemble[:4], small_system, [10, 100, 1000, 10000], h_grid, workers=1)

    assert report.passed
    assert report.slope <= -0.5
    rhos = [row["rho"] for row in report.curve]
    assert rhos == sorted(rhos, reverse=True)
    for row in report.curve:
        envelope = report.c1 * h_grid**report.mu + report.c2 * h_grid ** (report.mu - 1) / row["lambda"]
        assert np.all(envelope >= row["rho"] * (1 - 1e-9))


def test_perturbation_without_coefficient(small_system, small_ensemble):
    problem = EllipticProblem(PositiveOperator(np.eye(1)), small_ensemble[0])
    report = verify_perturbation_shape(problem, small_ensemble[:2], small_system, [10, 100], workers=1)
    assert report.slope == -np.inf
    assert report.passed


def test_perturbation_needs_two_lambdas(small_system, small_ensemble):
    problem = EllipticProblem(PositiveOperator(np.eye(1)), small_ensemble[0])
    with pytest.raises(ConfigError):
        verify_perturbation_shape(problem, small_ensemble, small_system, [10])


def test_sigma_bound(small_grid):
    report = sigma_bound(PositiveOperator(np.eye(1), np.pi / 2), [1.0, 1.0j, 10.0], small_grid)
    assert report.M_hat == pytest.approx(np.sqrt(2), rel=1e-12)
    assert len(report.sup_norms) == 3
    assert all(row["sup_norm"] <= 1.0 for row in report.sup_norms)
    assert report.passed
    assert report.to_dict()["sup_norms"][1]["lambda"] == [0.0, 1.0]


def test_refinement_study(small_grid, gaussian):
    constant = refinement_study(lambda grid: 2.0, small_grid, levels=3)
    assert [row["M"] for row in constant] == [1024, 2048, 4096]
    assert constant[0]["drift"] is None
    assert constant[1]["drift"] == 0.0

    norms = refinement_study(lambda grid: lp_norm(gaussian(grid), 2), small_grid)
    assert norms[1]["drift"] <= 1e-10
