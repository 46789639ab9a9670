import numpy as np
import pytest

from besovkit.errors import ConfigError, SectorError
from besovkit.operators.opcalc import (
    PositiveOperator,
    fractional_power,
    in_sector,
    parse_matrix,
    resolvent,
    resolvent_profile,
    sector_samples,
    shifted_inverse,
    verify_phi_positive,
)


def test_parse_real_and_complex_rows():
    assert np.array_equal(parse_matrix([[1, 2], [3, 4]]), np.array([[1, 2], [3, 4]], dtype=complex))
    assert np.array_equal(parse_matrix([[[1, 0], [0, 1]], [[0, 0], [2, 0]]]), np.array([[1, 1j], [0, 2]]))
    assert parse_matrix(3.0).shape == (1, 1)
    with pytest.raises(ConfigError):
        parse_matrix([[[1, 2, 3]]])


def test_operator_from_config():
    A = PositiveOperator.from_config({"matrix": [[1, 0], [0, 4]], "phi": 1.0, "M": 3})
    assert A.dim == 2
    assert A.phi == 1.0
    assert A.M == 3
    assert A.min_eigenvalue_real == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        PositiveOperator.from_config({"phi": 1.0})


@pytest.mark.parametrize("matrix, phi", [([[1, 2, 3]], 0.0), ([[1.0]], 4.0)])
def test_invalid_operator(matrix, phi):
    with pytest.raises(SectorError):
        PositiveOperator(np.array(matrix), phi)


def test_resolvent_is_inverse():
    A = PositiveOperator(np.array([[2.0, 1.0], [0.0, 3.0]]))
    lam = 2.0 + 1.0j
    assert np.allclose(resolvent(A, lam) @ (A.matrix + lam * np.eye(2)), np.eye(2), atol=1e-14)


def test_singular_shift_rejected():
    A = PositiveOperator.diagonal([1.0, 2.0])
    with pytest.raises(SectorError):
        resolvent(A, -1.0)
    with pytest.raises(SectorError):
        shifted_inverse(A, np.array([0.0, -2.0]))


def test_sector_membership():
    z = np.array([1.0, 1j, -1.0, 0.0, np.exp(1j * 0.4)])
    assert in_sector(z, 0.5).tolist() == [True, False, False, True, True]


def test_sector_samples_layout():
    samples = sector_samples(0.0, 8, 1e-3, 1e6)
    assert samples[0] == 0
    assert samples.size == 1 + 73
    assert np.any(samples == 1.0)
    assert sector_samples(np.pi / 2, 8, 1e-3, 1e6).size == 1 + 3 * 73


def test_identity_resolvent_constant_on_right_half_plane():
    """(1 + |lam|) / |1 + lam| peaks at lam = +-i with value sqrt 2."""
    report = verify_phi_positive(PositiveOperator(np.eye(2), np.pi / 2))
    assert report.passed
    assert report.M_hat == pytest.approx(np.sqrt(2), rel=1e-12)
    assert report.stability_change == pytest.approx(0.0, abs=1e-12)


def test_positive_real_axis_constant_is_one():
    profile = resolvent_profile(np.eye(1), np.array([0.0, 0.5, 10.0, 1e6]))
    assert np.allclose(profile, 1.0)


def test_negative_eigenvalue_reported():
    report = verify_phi_positive(PositiveOperator.diagonal([-1.0, 1.0], phi=0.3))
    assert not report.passed
    assert report.M_hat == np.inf
    assert report.offending_eigenvalue == pytest.approx(1.0)


def test_declared_bound_enforced():
    A = PositiveOperator(np.eye(1), np.pi / 2, M=1.2)
    assert not verify_phi_positive(A).passed


def test_nilpotent_part_passes():
    report = verify_phi_positive(PositiveOperator(np.array([[1.0, 1.0], [0.0, 1.0]]), np.pi / 4))
    assert report.passed
    # the peak sits at lam = 0 where the resolvent norm is the golden ratio
    assert report.M_hat == pytest.approx((1 + np.sqrt(5)) / 2, rel=1e-9)


@pytest.mark.parametrize("matrix", [np.diag([1.0, 4.0]), np.array([[2.0, 1.0], [0.0, 3.0]])])
def test_fractional_powers_compose(matrix):
    A = PositiveOperator(matrix)
    root = fractional_power(A, 0.5)
    assert np.allclose(root @ root, matrix, atol=1e-12)
    assert np.allclose(fractional_power(A, 0.3) @ fractional_power(A, 0.7), matrix, atol=1e-12)
    assert np.array_equal(fractional_power(A, 0.0), np.eye(2))


def test_fractional_power_of_diagonal():
    A = PositiveOperator.diagonal([1.0, 9.0])
    assert np.allclose(fractional_power(A, 0.5), np.diag([1.0, 3.0]))


def test_fractional_power_on_branch_cut():
    with pytest.raises(SectorError):
        fractional_power(PositiveOperator.diagonal([-1.0, 1.0]), 0.5)


def test_fractional_power_of_jordan_block():
    with pytest.raises(SectorError):
        fractional_power(PositiveOperator(np.array([[1.0, 1.0], [0.0, 1.0]])), 0.5)
