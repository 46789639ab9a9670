"""
Spectral solvers for the operator-valued elliptic equation on the line

    -u'' + A_1(t) u' + (A + lambda) u = f,

the principal part through the pointwise resolvent (A + xi^2 + lambda)^{-1} in
frequency, the first-order perturbation through a Neumann series whose
contraction factor is estimated by power iteration before iterating.
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import make_interp_spline

from besovkit.analysis.grid import (
    PHYSICAL,
    Grid,
    SampledFunction,
    forward_ft,
    inverse_ft,
    read_csv,
    spectral_derivative,
    zeros_like,
)
from besovkit.analysis.partition import DyadicSystem, build_dyadic_system
from besovkit.analysis.spaces import BesovParams, apply_matrix, besov_norm, lp_norm
from besovkit.analysis.weights import Weight
from besovkit.errors import ConfigError, ContractionError, GridMismatchError, SectorError
from besovkit.operators.opcalc import PositiveOperator, fractional_power, parse_matrix, shifted_inverse
from besovkit.settings.defaults import default_float, default_int

logger = logging.getLogger(__name__)

SLOW_CONTRACTION = "slow-contraction"
NOT_CONVERGED = "not-converged"

Coefficient = Callable[[np.ndarray], np.ndarray] | SampledFunction


def coefficient_values(A1: Coefficient | None, t: np.ndarray, dim: int) -> np.ndarray | None:
    """
    A_1 at the points t (1-D array), shape t.shape + (d, d).

    Sampled coefficients are interpolated with a quintic spline and held
    constant beyond their box.
    """
    if A1 is None:
        return None
    t = np.asarray(t, dtype=float)
    if isinstance(A1, SampledFunction):
        if not A1.is_matrix or A1.fiber_dim != dim or A1.grid.N != 1:
            raise GridMismatchError(f"A1 samples must be {dim} x {dim} matrices on a 1-D grid")
        axis = A1.grid.axis
        if t.shape == axis.shape and np.array_equal(t, axis):
            return np.array(A1.values)
        clipped = np.clip(t, axis[0], axis[-1])
        real = make_interp_spline(axis, A1.values.real, k=5)(clipped)
        imag = make_interp_spline(axis, A1.values.imag, k=5)(clipped)
        return real + 1j * imag
    values = np.asarray(A1(t), dtype=complex)
    return np.array(np.broadcast_to(values, t.shape + (dim, dim)))


def gaussian_coefficient(scale: float, matrix: np.ndarray, width: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """t -> scale * exp(-t^2 / width^2) B."""
    matrix = np.asarray(matrix, dtype=complex)

    def coefficient(t: np.ndarray) -> np.ndarray:
        return scale * np.exp(-(t / width) ** 2)[..., np.newaxis, np.newaxis] * matrix

    return coefficient


def coefficient_from_config(config: dict | None, grid: Grid, dim: int) -> Coefficient | None:
    """
    {"kind": "gaussian", "scale": s, "width": w, "matrix": rows},
    {"kind": "constant", "matrix": rows} or {"kind": "samples", "path": csv}.
    """
    if not config:
        return None
    kind = config.get("kind", "gaussian")
    matrix = parse_matrix(config.get("matrix", np.eye(dim).tolist()))
    if matrix.shape != (dim, dim):
        raise ConfigError(f"A1.matrix must be {dim} x {dim}, got {matrix.shape}")
    if kind == "gaussian":
        return gaussian_coefficient(float(config.get("scale", 1.0)), matrix, float(config.get("width", 1.0)))
    if kind == "constant":
        return lambda t: np.broadcast_to(matrix, np.shape(t) + (dim, dim))
    if kind == "samples":
        if "path" not in config:
            raise ConfigError("A1 of kind 'samples' needs a 'path'")
        return read_csv(Path(config["path"]), grid, PHYSICAL)
    raise ConfigError(f"Unknown A1 kind '{kind}', expected gaussian, constant or samples")


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    A: PositiveOperator
    f: SampledFunction
    lam: complex = 1.0
    A1: Coefficient | None = None
    gamma: Weight | None = None
    mu: float = 0.25
    params: BesovParams = field(default_factory=BesovParams)

    def __post_init__(self):
        if self.f.grid.N != 1:
            raise GridMismatchError(f"The solvers work on the line, got N={self.f.grid.N}")
        if self.f.is_matrix or self.f.fiber_dim != self.A.dim:
            raise GridMismatchError(f"Right-hand side must be C^{self.A.dim}-valued, got fiber {self.f.fiber_shape}")
        if not 0.0 < self.mu < 0.5:
            raise ConfigError(f"mu must lie in (0, 1/2), got {self.mu}")
        object.__setattr__(self, "lam", complex(self.lam))

    @property
    def grid(self) -> Grid:
        return self.f.grid

    @cached_property
    def coefficient(self) -> np.ndarray | None:
        """A_1 on the grid nodes, or None when A_1 vanishes identically."""
        values = coefficient_values(self.A1, self.grid.axis, self.A.dim)
        if values is None or not np.any(values):
            return None
        return values

    def with_rhs(self, f: SampledFunction) -> "EllipticProblem":
        return replace(self, f=f)

    def with_lam(self, lam: complex) -> "EllipticProblem":
        return replace(self, lam=lam)

    def perturbation_bound(self) -> float:
        """sup_t ||A_1(t) A^{-(1/2 - mu)}||."""
        if self.coefficient is None:
            return 0.0
        damping = fractional_power(self.A, -(0.5 - self.mu))
        return float(np.linalg.norm(self.coefficient @ damping, ord=2, axis=(-2, -1)).max())


class PrincipalResolvent:
    """(L_0 + lambda)^{-1} with L_0 u = -u'' + A u, applied pointwise in frequency."""

    def __init__(self, A: PositiveOperator, lam: complex, grid: Grid):
        self.A = A
        self.lam = complex(lam)
        self.grid = grid
        shifts = grid.frequency_modulus**2 + self.lam
        try:
            self.inverse = shifted_inverse(A, shifts)
        except SectorError as e:
            raise SectorError(f"A + xi^2 + lambda is singular on the frequency grid for lambda={lam}: {e}") from e

    def __call__(self, rhs: SampledFunction) -> SampledFunction:
        spectrum = forward_ft(rhs)
        values = np.einsum("...ij,...j->...i", self.inverse, spectrum.values)
        return inverse_ft(spectrum.with_values(values))


def apply_principal(A: PositiveOperator, lam: complex, u: SampledFunction) -> SampledFunction:
    """-u'' + (A + lambda) u."""
    return apply_matrix(A.matrix, u) + lam * u - spectral_derivative(u, 2)


def apply_perturbation(problem: EllipticProblem, u: SampledFunction) -> SampledFunction:
    """A_1(t) u'(t)."""
    if problem.coefficient is None:
        return zeros_like(u)
    derivative = spectral_derivative(u, 1)
    return derivative.with_values(np.einsum("...ij,...j->...i", problem.coefficient, derivative.values))


def apply_full_operator(problem: EllipticProblem, u: SampledFunction) -> SampledFunction:
    return apply_principal(problem.A, problem.lam, u) + apply_perturbation(problem, u)


def relative_residual(residual: SampledFunction, f: SampledFunction) -> float:
    scale = lp_norm(f, 2.0)
    value = lp_norm(residual, 2.0)
    return value / scale if scale > 0 else value


@dataclass
class SolveReport:
    u: SampledFunction
    residual: float
    besov_residual: float
    iterations: int
    q_hat: float
    lam: complex
    coercivity: float | None = None
    flags: tuple[str, ...] = ()
    details: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.q_hat < 1.0 and NOT_CONVERGED not in self.flags

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "besov_residual": self.besov_residual,
            "iterations": self.iterations,
            "q_hat": self.q_hat,
            "lambda": [self.lam.real, self.lam.imag],
            "coercivity": self.coercivity,
            "flags": list(self.flags),
            "details": self.details,
        }


def coercivity_terms(problem: EllipticProblem, u: SampledFunction, system: DyadicSystem) -> dict[str, float]:
    """Besov norms of u'', A_1 u, A_1 u', A u, u and f."""
    params = problem.params
    norm = lambda g: besov_norm(g, params, system).value  # noqa: E731
    terms = {
        "u_second": norm(spectral_derivative(u, 2)),
        "A_u": norm(apply_matrix(problem.A.matrix, u)),
        "u": norm(u),
        "f": norm(problem.f),
        "A1_u": 0.0,
        "A1_u_prime": 0.0,
    }
    if problem.coefficient is not None:
        terms["A1_u"] = norm(u.with_values(np.einsum("...ij,...j->...i", problem.coefficient, u.values)))
        terms["A1_u_prime"] = norm(apply_perturbation(problem, u))
    return terms


def _coercivity_ratio(terms: dict[str, float]) -> float | None:
    if terms["f"] == 0.0:
        return None
    return (terms["u_second"] + terms["A1_u"] + terms["A_u"]) / terms["f"]


def _report(
    problem: EllipticProblem,
    u: SampledFunction,
    system: DyadicSystem,
    iterations: int,
    q_hat: float,
    flags: tuple[str, ...] = (),
    details: dict | None = None,
) -> SolveReport:
    residual = apply_full_operator(problem, u) - problem.f
    f_norm = besov_norm(problem.f, problem.params, system).value
    r_norm = besov_norm(residual, problem.params, system).value
    terms = coercivity_terms(problem, u, system)
    return SolveReport(
        u=u,
        residual=relative_residual(residual, problem.f),
        besov_residual=r_norm / f_norm if f_norm > 0 else r_norm,
        iterations=iterations,
        q_hat=q_hat,
        lam=problem.lam,
        coercivity=_coercivity_ratio(terms),
        flags=tuple(dict.fromkeys(flags + u.flags)),
        details={"norms": terms, **(details or {})},
    )


def solve_principal(problem: EllipticProblem, system: DyadicSystem | None = None) -> SolveReport:
    """u = F^{-1}[(A + xi^2 + lambda)^{-1} Ff], ignoring A_1."""
    system = system or build_dyadic_system(problem.grid)
    resolvent = PrincipalResolvent(problem.A, problem.lam, problem.grid)
    u = resolvent(problem.f)
    principal = replace(problem, A1=None)
    report = _report(principal, u, system, iterations=1, q_hat=0.0)
    logger.info(f"Principal solve at lambda={problem.lam}: residual {report.residual:.3e}")
    return report


def contraction_estimate(
    problem: EllipticProblem,
    resolvent: PrincipalResolvent,
    system: DyadicSystem,
    iterations: int | None = None,
) -> float:
    """
    Power-iteration estimate of ||L_1 (L_0 + lambda)^{-1}|| in the report norm.

    Every ratio ||T x|| / ||x|| is a lower bound of the operator norm, so the
    largest one seen is kept.
    """
    if problem.coefficient is None:
        return 0.0
    iterations = iterations or default_int("solver", "power_iterations")
    params = problem.params

    x = problem.f
    if besov_norm(x, params, system).value == 0.0:
        t = problem.grid.axis
        x = SampledFunction(problem.grid, np.exp(-(t**2))[:, np.newaxis] * np.ones(problem.A.dim))
    x = x * (1.0 / besov_norm(x, params, system).value)

    q_hat = 0.0
    for _ in range(iterations):
        y = apply_perturbation(problem, resolvent(x))
        y_norm = besov_norm(y, params, system).value
        q_hat = max(q_hat, y_norm)
        if y_norm == 0.0:
            break
        x = y * (1.0 / y_norm)
    logger.debug(f"Contraction estimate at lambda={resolvent.lam}: {q_hat:.4g}")
    return q_hat


def solve_full(
    problem: EllipticProblem,
    system: DyadicSystem | None = None,
    escalate: bool = True,
    tolerance: float | None = None,
    max_iterations: int | None = None,
) -> SolveReport:
    """
    u_{n+1} = (L_0 + lambda)^{-1} (f - A_1 u_n'), u_0 = 0.

    While the contraction estimate stays above the target, lambda is scaled by
    the escalation factor a bounded number of times; the report carries the
    lambda actually used.
    """
    system = system or build_dyadic_system(problem.grid)
    tolerance = tolerance or default_float("solver", "neumann_tolerance")
    max_iterations = max_iterations or default_int("solver", "max_iterations")
    target = default_float("solver", "contraction_target")
    factor = default_float("solver", "escalation_factor")
    steps = default_int("solver", "escalation_steps") if escalate else 0

    resolvent = PrincipalResolvent(problem.A, problem.lam, problem.grid)
    q_hat = contraction_estimate(problem, resolvent, system)
    escalations = 0
    while q_hat >= target and escalations < steps:
        problem = problem.with_lam(problem.lam * factor)
        escalations += 1
        logger.info(f"Contraction estimate {q_hat:.3f} >= {target}, escalating lambda to {problem.lam}")
        resolvent = PrincipalResolvent(problem.A, problem.lam, problem.grid)
        q_hat = contraction_estimate(problem, resolvent, system)

    if q_hat >= 1.0:
        raise ContractionError(
            f"Neumann series does not contract (q_hat={q_hat:.3f} at lambda={problem.lam}); "
            "increase |lambda|"
        )
    flags = (SLOW_CONTRACTION,) if q_hat >= target else ()

    u = resolvent(problem.f)
    iterations = 1
    if problem.coefficient is not None:
        first_norm = besov_norm(u, problem.params, system).value
        while iterations < max_iterations:
            update = resolvent(problem.f - apply_perturbation(problem, u))
            change = besov_norm(update - u, problem.params, system).value
            u = update
            iterations += 1
            logger.debug(f"Neumann iteration {iterations}: change {change:.3e}")
            if change <= tolerance * first_norm:
                break
        else:
            logger.warning(f"Neumann iteration stopped after {max_iterations} steps without reaching tolerance")
            flags += (NOT_CONVERGED,)

    report = _report(
        problem,
        u,
        system,
        iterations,
        q_hat,
        flags,
        {"escalations": escalations, "perturbation_bound": problem.perturbation_bound()},
    )
    logger.info(
        f"Full solve at lambda={problem.lam}: {iterations} iterations, q_hat={q_hat:.3g}, "
        f"residual {report.residual:.3e}"
    )
    return report
