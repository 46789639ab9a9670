import numpy as np
import pytest

from besovkit.analysis.grid import Grid
from besovkit.analysis.weights import (
    Weight,
    check_condition2,
    check_integrability,
    check_submultiplicative,
    dual_exponent,
)
from besovkit.errors import WeightError


@pytest.fixture(scope="module")
def check_grid():
    return Grid(1, 8, 256)


@pytest.mark.parametrize(
    "weight",
    [Weight.shifted_power(1, 2), Weight.shifted_power(1, 0.5), Weight.exponential(1, 1.0)],
    ids=["shifted_power_2", "shifted_power_half", "exponential"],
)
def test_submultiplicative_families(weight, check_grid):
    report = check_submultiplicative(weight, check_grid)
    assert report.estimated_C <= 1 + 1e-12
    assert report.bound == 1.0
    assert report.passed


@pytest.mark.parametrize("N, alpha, admissible", [(1, -0.5, True), (1, -1.0, False), (2, -1.5, True), (2, -2.0, False)])
def test_power_exponent_range_follows_dimension(N, alpha, admissible):
    if admissible:
        assert Weight.power(N, alpha).params["alpha"] == alpha
    else:
        with pytest.raises(WeightError, match="locally integrable"):
            Weight.power(N, alpha)


def test_product_weight_declared_constant(check_grid):
    weight = Weight.product(1, [[2]], [1])
    assert weight.declared_constant() == pytest.approx(2.0)
    report = check_submultiplicative(weight, check_grid)
    assert 1.0 < report.estimated_C <= 2.0
    assert report.passed


def test_gaussian_growth_is_not_submultiplicative():
    weight = Weight.exponential(1, 1.0, order=2)
    narrow = check_submultiplicative(weight, Grid(1, 4, 256))
    wide = check_submultiplicative(weight, Grid(1, 8, 256))
    assert wide.estimated_C > narrow.estimated_C > 1
    assert not wide.passed


def test_explicit_bound_overrides_declared(check_grid):
    report = check_submultiplicative(Weight.shifted_power(1, 2), check_grid, bound=0.5)
    assert report.bound == 0.5
    assert not report.passed


def test_reciprocal_inverts_weight(check_grid):
    weight = Weight.shifted_power(1, 3)
    x = check_grid.points()
    assert np.allclose(weight.evaluate(x) * weight.reciprocal().evaluate(x), 1.0)
    assert weight.reciprocal().reciprocal() == weight


def test_trivial_weight():
    assert Weight.constant(1).is_trivial
    assert not Weight.constant(1, 2.0).is_trivial
    assert Weight.from_config(None, 2).is_trivial


@pytest.mark.parametrize(
    "kind, params",
    [
        ("power", {"alpha": -1.0}),
        ("constant", {"c": 0.0}),
        ("exponential", {"c": 1.0, "order": 0.0}),
        ("product", {"alphas": [[-1.0]], "betas": [1.0]}),
        ("unknown", {}),
    ],
)
def test_invalid_weights(kind, params):
    with pytest.raises(WeightError):
        Weight(kind, 1, params)


def test_integrability_of_constant_weights():
    report = check_integrability(Weight.constant(1), Weight.constant(1), 1, 2, 1.0)
    assert report.finite
    assert report.value == pytest.approx(2.0, rel=1e-12)


def test_divergent_embedding_integrand():
    report = check_integrability(Weight.power(1, 1.0), None, 1, 2, 1.0)
    assert not report.finite
    assert report.value == np.inf
    assert len(report.refinement_history) >= 3


def test_condition1_integral():
    """(1 + |x|)^-4 over [-1, 1] integrates to 7/12."""
    report = check_integrability(Weight.constant(1), Weight.shifted_power(1, -2), 2, None, 1.0, form="condition1")
    assert report.finite
    assert report.value == pytest.approx(7 / 12, rel=1e-8)


def test_integral_grows_with_box():
    gamma, gamma_tilde = Weight.constant(1), Weight.shifted_power(1, -2)
    small = check_integrability(gamma, gamma_tilde, 2, None, 1.0, form="condition1")
    large = check_integrability(gamma, gamma_tilde, 2, None, 2.0, form="condition1")
    assert large.value > small.value


def test_embedding_needs_q_above_p():
    with pytest.raises(WeightError):
        check_integrability(Weight.constant(1), None, 2, 2, 1.0)


def test_unknown_form():
    with pytest.raises(WeightError):
        check_integrability(Weight.constant(1), None, 2, 3, 1.0, form="nonsense")


def test_condition2(check_grid):
    report = check_condition2(Weight.shifted_power(1, 1), 2, check_grid)
    assert report.passed
    assert report.to_dict()["integrability"]["finite"]


@pytest.mark.parametrize("p, expected", [(1, np.inf), (2, 2.0), (4, 4 / 3), (np.inf, 1.0)])
def test_dual_exponent(p, expected):
    assert dual_exponent(p) == expected
