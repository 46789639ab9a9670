"""
phi-positive (sectorial) d x d matrices: sector verification with an estimated
resolvent constant, resolvents, and fractional powers on the principal branch.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from besovkit.errors import ConfigError, NonFiniteError, SectorError
from besovkit.settings.defaults import default_float, default_int

logger = logging.getLogger(__name__)

MAX_EIGENVECTOR_CONDITION = 1e6
_SINGULAR_CONDITION = 1e14


def parse_matrix(rows) -> np.ndarray:
    """
    Accepts a scalar, real rows [[a, b], ...] or complex rows [[[re, im], ...], ...].
    """
    array = np.asarray(rows, dtype=float)
    if array.ndim == 0:
        return np.array([[complex(array)]])
    if array.ndim == 2:
        return array.astype(complex)
    if array.ndim == 3 and array.shape[-1] == 2:
        return array[..., 0] + 1j * array[..., 1]
    raise ConfigError(f"Cannot read a matrix from an array of shape {array.shape}")


def format_matrix(matrix: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


@dataclass(frozen=True, eq=False)
class PositiveOperator:
    """A d x d matrix with its sector angle phi in [0, pi) and an optional declared resolvent constant M."""

    matrix: np.ndarray
    phi: float = 0.0
    M: float | None = None

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.ndim == 0:
            matrix = matrix.reshape(1, 1)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise SectorError(f"Operator matrix must be square, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise NonFiniteError("Operator matrix contains NaN or Inf")
        if not 0.0 <= self.phi < np.pi:
            raise SectorError(f"Sector angle must lie in [0, pi), got {self.phi}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_config(cls, config) -> "PositiveOperator":
        """{"matrix": rows, "phi": angle, "M": bound} or bare rows."""
        if isinstance(config, dict):
            if "matrix" not in config:
                raise ConfigError("Operator config needs a 'matrix' key")
            return cls(parse_matrix(config["matrix"]), float(config.get("phi", 0.0)), config.get("M"))
        return cls(parse_matrix(config))

    @classmethod
    def diagonal(cls, entries, phi: float = 0.0) -> "PositiveOperator":
        return cls(np.diag(np.asarray(entries, dtype=complex)), phi)

    def to_dict(self) -> dict:
        return {"matrix": format_matrix(self.matrix), "phi": self.phi, "M": self.M}

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def spectrum(self) -> tuple[np.ndarray, np.ndarray, float]:
        """(eigenvalues, eigenvectors, eigenvector condition number)."""
        eigenvalues, eigenvectors = np.linalg.eig(self.matrix)
        condition = float(np.linalg.cond(eigenvectors))
        return eigenvalues, eigenvectors, condition

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum[0]

    @property
    def min_eigenvalue_real(self) -> float:
        return float(self.eigenvalues.real.min())

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def _as_matrix(A) -> np.ndarray:
    return A.matrix if isinstance(A, PositiveOperator) else np.asarray(A, dtype=complex)


def resolvent(A, lam: complex) -> np.ndarray:
    """(A + lam I)^{-1} by a direct solve."""
    matrix = _as_matrix(A)
    shifted = matrix + lam * np.eye(matrix.shape[0])
    if np.linalg.cond(shifted) > _SINGULAR_CONDITION:
        raise SectorError(f"A + lambda is singular at lambda={lam}")
    return np.linalg.solve(shifted, np.eye(matrix.shape[0], dtype=complex))


def shifted_inverse(A, shifts: np.ndarray) -> np.ndarray:
    """Batched (A + s I)^{-1} for every entry s of shifts; result shape shifts.shape + (d, d)."""
    matrix = _as_matrix(A)
    shifts = np.asarray(shifts)
    d = matrix.shape[0]
    stacked = matrix + shifts[..., np.newaxis, np.newaxis] * np.eye(d)
    conditions = np.linalg.cond(stacked)
    if np.any(~np.isfinite(conditions) | (conditions > _SINGULAR_CONDITION)):
        worst = shifts.reshape(-1)[np.argmax(np.nan_to_num(conditions, nan=np.inf).reshape(-1))]
        raise SectorError(f"A + s is singular at s={worst}")
    return np.linalg.solve(stacked, np.broadcast_to(np.eye(d, dtype=complex), stacked.shape))


def solve_shifted(A, shifts: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched solution x of (A + s I) x = b, rhs shape shifts.shape + (d,)."""
    inverse = shifted_inverse(A, shifts)
    return np.einsum("...ij,...j->...i", inverse, rhs)


def in_sector(z: np.ndarray, phi: float, scale: float = 1.0) -> np.ndarray:
    """Membership in S_phi = {|arg z| <= phi} together with z = 0."""
    z = np.asarray(z, dtype=complex)
    at_zero = np.abs(z) <= 1e-12 * max(1.0, scale)
    return at_zero | (np.abs(np.angle(z)) <= phi + 1e-12)


def sector_samples(phi: float, points_per_decade: int, min_modulus: float, max_modulus: float) -> np.ndarray:
    """lambda = 0 plus log-spaced moduli on the rays arg = -phi, 0, +phi."""
    decades = np.log10(max_modulus) - np.log10(min_modulus)
    radii = np.logspace(np.log10(min_modulus), np.log10(max_modulus), int(round(decades * points_per_decade)) + 1)
    angles = [0.0] if phi == 0 else [-phi, 0.0, phi]
    rays = [radii * np.exp(1j * angle) for angle in angles]
    return np.concatenate([[0.0 + 0.0j]] + rays)


def resolvent_profile(A, samples: np.ndarray) -> np.ndarray:
    """||(A + lam)^{-1}|| (1 + |lam|) at every sample."""
    inverse = shifted_inverse(A, samples)
    return np.linalg.norm(inverse, ord=2, axis=(-2, -1)) * (1.0 + np.abs(samples))


@dataclass
class SectorReport:
    M_hat: float
    passed: bool
    phi: float
    offending_eigenvalue: complex | None = None
    stability_change: float | None = None
    samples: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=complex))
    declared_M: float | None = None

    def to_dict(self) -> dict:
        offending = self.offending_eigenvalue
        return {
            "M_hat": self.M_hat,
            "passed": self.passed,
            "phi": self.phi,
            "offending_eigenvalue": None if offending is None else [offending.real, offending.imag],
            "stability_change": self.stability_change,
            "sample_count": int(self.samples.size),
            "declared_M": self.declared_M,
        }


def verify_phi_positive(
    A: PositiveOperator,
    phi: float | None = None,
    points_per_decade: int | None = None,
    min_modulus: float | None = None,
    max_modulus: float | None = None,
    stability_tolerance: float | None = None,
) -> SectorReport:
    """
    Estimate M = sup (1 + |lam|) ||(A + lam)^{-1}|| over a finite sample of S_phi.

    Fails when an eigenvalue of -A lies in S_phi (reported), or when doubling
    the sample density moves the estimate by more than the stability tolerance.
    """
    phi = A.phi if phi is None else phi
    points_per_decade = points_per_decade or default_int("sector", "points_per_decade")
    min_modulus = min_modulus or default_float("sector", "min_modulus")
    max_modulus = max_modulus or default_float("sector", "max_modulus")
    if stability_tolerance is None:
        stability_tolerance = default_float("sector", "stability_tolerance")

    offending = [mu for mu in -A.eigenvalues if in_sector(mu, phi, A.norm)]
    if offending:
        mu = complex(offending[0])
        logger.info(f"Eigenvalue {mu} of -A lies in the sector of angle {phi:.4f}")
        return SectorReport(np.inf, False, phi, offending_eigenvalue=mu, declared_M=A.M)

    samples = sector_samples(phi, points_per_decade, min_modulus, max_modulus)
    dense = sector_samples(phi, 2 * points_per_decade, min_modulus, max_modulus)
    M_hat = float(resolvent_profile(A, samples).max())
    M_dense = float(resolvent_profile(A, dense).max())
    change = abs(M_dense - M_hat) / M_hat
    passed = bool(np.isfinite(M_dense) and change < stability_tolerance)
    if A.M is not None:
        passed = passed and M_dense <= A.M * (1.0 + 1e-12)
    logger.info(f"Sector check: M_hat={M_dense:.6g}, density change {change:.2%}, passed={passed}")
    return SectorReport(M_dense, passed, phi, None, change, dense, A.M)


def fractional_power(A: PositiveOperator, theta: float) -> np.ndarray:
    """A^theta = V diag(mu^theta) V^{-1} with the principal branch of mu^theta."""
    if theta == 0:
        return np.eye(A.dim, dtype=complex)
    if theta == 1:
        return np.array(A.matrix)
    eigenvalues, eigenvectors, condition = A.spectrum
    if condition > MAX_EIGENVECTOR_CONDITION:
        raise SectorError(
            f"Eigenvector condition number {condition:.3g} exceeds {MAX_EIGENVECTOR_CONDITION:.0e}; "
            "fractional powers need a diagonalizable operator"
        )
    scale = max(1.0, A.norm)
    on_cut = (eigenvalues.real <= 1e-12 * scale) & (np.abs(eigenvalues.imag) <= 1e-12 * scale)
    if np.any(on_cut):
        raise SectorError(f"Eigenvalues {eigenvalues[on_cut]} touch the branch cut (-inf, 0]")
    powers = np.exp(theta * np.log(eigenvalues))
    return np.linalg.solve(eigenvectors.T, (eigenvectors * powers).T).T
