"""
Degenerate equation

    -(gamma d/dt)^2 u + A_1(t) (gamma d/dt) u + (A + lambda) u = f

solved through the substitution tau(t) = int_0^t dy / gamma(y), which turns
gamma d/dt into d/dtau. The transformed problem lives on a uniform tau-grid and
is handed to solve_full; the solution is mapped back with quintic splines.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator, make_interp_spline
from scipy.special import roots_legendre

from besovkit.analysis.grid import Grid, SampledFunction, spectral_derivative
from besovkit.analysis.partition import DyadicSystem, build_dyadic_system
from besovkit.analysis.spaces import besov_norm
from besovkit.analysis.weights import Weight
from besovkit.errors import ConfigError, GridMismatchError, WeightError
from besovkit.solvers.doe import (
    EllipticProblem,
    SolveReport,
    coefficient_values,
    relative_residual,
    solve_full,
)
from besovkit.settings.defaults import default_float

logger = logging.getLogger(__name__)

GAUSS_NODES = 8
NEWTON_STEPS = 4
SPLINE_DEGREE = 5
# tau-grids narrower than this leave too few frequency nodes for the dyadic partition
MIN_TAU_HALF_WIDTH = 16.0
# e^-36 is below double precision relative to the peak of the Green's function
DECAY_MARGIN = 36.0

_nodes, _weights = roots_legendre(GAUSS_NODES)


def _gamma(weight: Weight, t: np.ndarray) -> np.ndarray:
    return weight.evaluate(np.asarray(t, dtype=float)[..., np.newaxis])


def _integral(weight: Weight, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """int_a^b dy / gamma(y) by Gauss-Legendre, elementwise over a and b."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    half = (b - a) / 2.0
    y = half[..., np.newaxis] * _nodes + ((a + b) / 2.0)[..., np.newaxis]
    return half * np.sum(_weights / _gamma(weight, y), axis=-1)


@dataclass(frozen=True, eq=False)
class DegenerateMap:
    """tau(t) on the nodes t of a 1-D grid, with evaluation off the nodes in both directions."""

    weight: Weight
    t: np.ndarray
    tau: np.ndarray

    @property
    def trivial(self) -> bool:
        return self.weight.is_trivial

    def tau_of(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.trivial:
            return t.copy()
        dx = self.t[1] - self.t[0]
        index = np.clip(np.floor((t - self.t[0]) / dx).astype(int), 0, self.t.size - 1)
        return self.tau[index] + _integral(self.weight, self.t[index], t)

    def t_of(self, tau: np.ndarray) -> np.ndarray:
        """Inverse map: monotone cubic start, then Newton steps with d tau / dt = 1 / gamma."""
        tau = np.asarray(tau, dtype=float)
        if self.trivial:
            return tau.copy()
        clipped = np.clip(tau, self.tau[0], self.tau[-1])
        t = PchipInterpolator(self.tau, self.t)(clipped)
        for _ in range(NEWTON_STEPS):
            t = t - (self.tau_of(t) - clipped) * _gamma(self.weight, t)
        return t

    @property
    def tau_range(self) -> tuple[float, float]:
        return float(self.tau[0]), float(self.tau[-1])


def degenerate_transform(weight: Weight, grid: Grid, gamma_min: float | None = None) -> DegenerateMap:
    """Cumulative Gauss-Legendre quadrature of 1/gamma cell by cell from t = 0."""
    if grid.N != 1:
        raise GridMismatchError(f"The degenerate substitution is one-dimensional, got N={grid.N}")
    if weight.N != 1:
        raise WeightError(f"gamma must be a weight on the line, got N={weight.N}")
    gamma_min = default_float("solver", "gamma_min") if gamma_min is None else gamma_min

    t = grid.axis
    if weight.is_trivial:
        return DegenerateMap(weight, t, t.copy())

    cells = (t[1:] - t[:-1])[:, np.newaxis] / 2.0 * _nodes + ((t[1:] + t[:-1]) / 2.0)[:, np.newaxis]
    sampled = np.concatenate([_gamma(weight, t), _gamma(weight, cells).reshape(-1)])
    if not np.all(np.isfinite(sampled)) or sampled.min() < gamma_min:
        raise WeightError(
            f"gamma drops to {np.nanmin(sampled):.3g} on the box, below gamma_min={gamma_min:g}"
        )

    increments = _integral(weight, t[:-1], t[1:])
    tau = np.concatenate([[0.0], np.cumsum(increments)])
    tau -= tau[grid.M // 2]
    if np.any(np.diff(tau) <= 0):
        raise WeightError("tau(t) is not strictly increasing on the grid")
    logger.debug(f"Degenerate substitution maps [{t[0]:.3g}, {t[-1]:.3g}] to [{tau[0]:.4g}, {tau[-1]:.4g}]")
    return DegenerateMap(weight, t, tau)


def _interpolate(x: np.ndarray, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Quintic spline through (x, values) along axis 0, evaluated at points."""
    real = make_interp_spline(x, values.real, k=SPLINE_DEGREE)
    imag = make_interp_spline(x, values.imag, k=SPLINE_DEGREE)
    return real(points) + 1j * imag(points)


def _spline_derivative(x: np.ndarray, values: np.ndarray) -> np.ndarray:
    real = make_interp_spline(x, values.real, k=SPLINE_DEGREE).derivative()
    imag = make_interp_spline(x, values.imag, k=SPLINE_DEGREE).derivative()
    return real(x) + 1j * imag(x)


def tau_grid_for(problem: EllipticProblem, transform: DegenerateMap) -> Grid:
    """Uniform tau-grid with the t-spacing, wide enough for the solution to decay past the image of the box."""
    grid = problem.grid
    reach = max(abs(transform.tau[0]), abs(transform.tau[-1]))
    decay_rate = np.sqrt(max(problem.A.min_eigenvalue_real + problem.lam.real, 1e-12))
    half_width = max(reach + DECAY_MARGIN / decay_rate, MIN_TAU_HALF_WIDTH)
    M = int(2 ** np.ceil(np.log2(2.0 * half_width / grid.dx)))
    return Grid(1, M * grid.dx / 2.0, M)


def apply_degenerate_operator(
    problem: EllipticProblem, u: SampledFunction, method: str = "spectral"
) -> SampledFunction:
    """
    -(gamma d/dt)^2 u + A_1 (gamma d/dt) u + (A + lambda) u on the t-grid.

    "spectral" differentiates with the FFT and needs u decayed at the box
    boundary; "spline" differentiates quintic interpolants and does not.
    """
    gamma = problem.gamma or Weight.constant(1)
    t = problem.grid.axis
    g = _gamma(gamma, t)[:, np.newaxis]

    if method == "spectral":
        first = g * spectral_derivative(u, 1).values
        second = g * spectral_derivative(u.with_values(first), 1).values
    elif method == "spline":
        first = g * _spline_derivative(t, u.values)
        second = g * _spline_derivative(t, first)
    else:
        raise ConfigError(f"Unknown method '{method}', expected 'spectral' or 'spline'")

    values = -second + np.einsum("ij,...j->...i", problem.A.matrix, u.values) + problem.lam * u.values
    coefficient = problem.coefficient
    if coefficient is not None:
        values = values + np.einsum("...ij,...j->...i", coefficient, first)
    return u.with_values(values)


def solve_degenerate(
    problem: EllipticProblem,
    system: DyadicSystem | None = None,
    gamma_min: float | None = None,
) -> SolveReport:
    """
    Solve in tau, where the equation is non-degenerate, and report the residual
    of the original equation in t. gamma = 1 is exactly solve_full.
    """
    gamma = problem.gamma
    if gamma is None or gamma.is_trivial:
        return solve_full(problem, system)

    grid = problem.grid
    d = problem.A.dim
    transform = degenerate_transform(gamma, grid, gamma_min)
    tau_grid = tau_grid_for(problem, transform)
    tau = tau_grid.axis
    lo, hi = transform.tau_range
    inside = (tau >= lo) & (tau <= hi)
    t_of_tau = transform.t_of(tau)

    f_tau = np.zeros(tau_grid.shape + (d,), dtype=complex)
    f_tau[inside] = _interpolate(grid.axis, problem.f.values, t_of_tau[inside])
    coefficient = coefficient_values(problem.A1, t_of_tau, d)
    transformed = replace(
        problem,
        f=SampledFunction(tau_grid, f_tau),
        A1=None if coefficient is None else SampledFunction(tau_grid, coefficient),
        gamma=None,
    )
    logger.info(f"Solving the substituted problem on {tau_grid} (image of the box [{lo:.4g}, {hi:.4g}])")
    inner = solve_full(transformed, build_dyadic_system(tau_grid))

    u = SampledFunction(grid, _interpolate(tau, inner.u.values, transform.tau))
    solved = problem.with_lam(inner.lam)
    residual = apply_degenerate_operator(solved, u, method="spline") - problem.f

    system = system or build_dyadic_system(grid)
    f_norm = besov_norm(problem.f, problem.params, system).value
    r_norm = besov_norm(residual, problem.params, system).value
    report = SolveReport(
        u=u,
        residual=relative_residual(residual, problem.f),
        besov_residual=r_norm / f_norm if f_norm > 0 else r_norm,
        iterations=inner.iterations,
        q_hat=inner.q_hat,
        lam=inner.lam,
        coercivity=inner.coercivity,
        flags=inner.flags,
        details={
            "tau_grid": {"L": tau_grid.L, "M": tau_grid.M},
            "tau_range": [lo, hi],
            "tau_residual": inner.residual,
            **{k: v for k, v in inner.details.items() if k != "norms"},
        },
    )
    logger.info(f"Degenerate solve: residual in t {report.residual:.3e}, in tau {inner.residual:.3e}")
    return report
