"""
Operator-valued symbols m: R^N -> C^{d x d} and the built-in symbol registry.

A symbol is either a closed-form generator, re-evaluable at any points and at
rescaled arguments m(a.), or a fixed set of samples on one frequency grid.
Derivatives of closed forms use fourth-order central differences with a step
proportional to 1 + |xi|; sampled symbols are differentiated with
numpy.gradient on the ordered frequency axis.
"""

import logging
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np
import scipy.fft

from besovkit.analysis.grid import FREQUENCY, Grid, SampledFunction
from besovkit.errors import ConfigError, GridMismatchError, ResolutionError
from besovkit.operators.opcalc import PositiveOperator, parse_matrix
from besovkit.settings.defaults import default_float

logger = logging.getLogger(__name__)

Generator = Callable[[np.ndarray], np.ndarray]

# fourth-order central stencils: order -> (offsets, coefficients)
STENCILS = {
    0: (np.array([0]), np.array([1.0])),
    1: (np.array([-2, -1, 1, 2]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
    2: (np.array([-2, -1, 0, 1, 2]), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0),
    3: (np.array([-3, -2, -1, 1, 2, 3]), np.array([1.0, -8.0, 13.0, -13.0, 8.0, -1.0]) / 8.0),
}


def multi_indices(N: int, max_order: int) -> list[tuple[int, ...]]:
    """All alpha in N_0^N with |alpha| <= max_order, by increasing order."""
    indices = [alpha for alpha in product(range(max_order + 1), repeat=N) if sum(alpha) <= max_order]
    return sorted(indices, key=lambda alpha: (sum(alpha), alpha))


@dataclass(frozen=True, eq=False)
class Symbol:
    N: int
    dim: int
    generator: Generator | None = None
    samples: SampledFunction | None = None
    name: str = "symbol"

    def __post_init__(self):
        if (self.generator is None) == (self.samples is None):
            raise ResolutionError("A symbol needs exactly one of a generator or samples")
        if self.samples is not None and (self.samples.side != FREQUENCY or not self.samples.is_matrix):
            raise GridMismatchError("Symbol samples must be matrix-valued and live on the frequency side")

    @classmethod
    def from_samples(cls, samples: SampledFunction, name: str = "sampled") -> "Symbol":
        return cls(samples.grid.N, samples.fiber_dim, samples=samples, name=name)

    @property
    def closed_form(self) -> bool:
        return self.generator is not None

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """m at points of shape (..., N); result shape (..., d, d)."""
        if not self.closed_form:
            raise ResolutionError(f"Symbol '{self.name}' is sample-only and cannot be evaluated off its grid")
        values = np.asarray(self.generator(np.asarray(points, dtype=float)), dtype=complex)
        return np.broadcast_to(values, points.shape[:-1] + (self.dim, self.dim))

    def on_grid(self, grid: Grid) -> np.ndarray:
        """Values on the frequency nodes of grid (FFT order)."""
        if self.closed_form:
            return self.evaluate(grid.frequencies())
        if self.samples.grid != grid:
            raise GridMismatchError(f"Symbol '{self.name}' is sampled on {self.samples.grid}, not {grid}")
        return self.samples.values

    def sampled(self, grid: Grid) -> SampledFunction:
        return SampledFunction(grid, self.on_grid(grid), side=FREQUENCY)

    def rescaled(self, b: float) -> "Symbol":
        """t -> m(b t)."""
        if not self.closed_form:
            raise ResolutionError(f"Symbol '{self.name}' is sample-only and cannot be rescaled")
        generator = self.generator
        return Symbol(self.N, self.dim, generator=lambda t: generator(b * t), name=f"{self.name}({b:g}.)")

    def times(self, other: "Symbol") -> "Symbol":
        """Pointwise product m(t) n(t)."""
        if self.dim != other.dim or self.N != other.N:
            raise GridMismatchError(f"Cannot compose symbols of shapes {self.dim} and {other.dim}")
        name = f"{self.name}*{other.name}"
        if self.closed_form and other.closed_form:
            first, second = self.generator, other.generator
            return Symbol(self.N, self.dim, generator=lambda t: first(t) @ second(t), name=name)
        grid = self.samples.grid if self.samples is not None else other.samples.grid
        values = self.on_grid(grid) @ other.on_grid(grid)
        return Symbol.from_samples(SampledFunction(grid, values, side=FREQUENCY), name)

    def derivative_at(self, points: np.ndarray, alpha: Sequence[int], fd_step: float | None = None) -> np.ndarray:
        """D^alpha m at arbitrary points by tensor-product central differences."""
        if not self.closed_form:
            raise ResolutionError(f"Symbol '{self.name}' is sample-only; use derivative_on_grid")
        if any(a > 3 for a in alpha):
            raise ResolutionError(f"Derivative order {max(alpha)} per axis is not supported")
        if sum(alpha) == 0:
            return np.array(self.evaluate(points))
        if fd_step is None:
            fd_step = default_float("multiplier", "fd_step")

        points = np.asarray(points, dtype=float)
        h = fd_step * (1.0 + np.linalg.norm(points, axis=-1))
        stencils = [STENCILS[a] for a in alpha]
        result = np.zeros(points.shape[:-1] + (self.dim, self.dim), dtype=complex)
        for entries in product(*(range(len(offsets)) for offsets, _ in stencils)):
            shift = np.zeros_like(points)
            coefficient = 1.0
            for axis, entry in enumerate(entries):
                offsets, coefficients = stencils[axis]
                shift[..., axis] = offsets[entry] * h
                coefficient *= coefficients[entry]
            result += coefficient * self.evaluate(points + shift)
        return result / (h ** sum(alpha))[..., np.newaxis, np.newaxis]

    def derivative_on_grid(self, grid: Grid, alpha: Sequence[int], fd_step: float | None = None) -> np.ndarray:
        """D^alpha m on the frequency nodes of grid (FFT order)."""
        alpha = tuple(alpha)
        if self.closed_form:
            return self.derivative_at(grid.frequencies(), alpha, fd_step)
        values = scipy.fft.fftshift(self.on_grid(grid), axes=grid.axes)
        for axis, order in enumerate(alpha):
            for _ in range(order):
                values = np.gradient(values, grid.dxi, axis=axis, edge_order=2)
        return scipy.fft.ifftshift(values, axes=grid.axes)


def identity_symbol(N: int, dim: int = 1) -> Symbol:
    eye = np.eye(dim, dtype=complex)
    return Symbol(N, dim, generator=lambda t: np.broadcast_to(eye, t.shape[:-1] + (dim, dim)), name="identity")


def zero_symbol(N: int, dim: int = 1) -> Symbol:
    return Symbol(N, dim, generator=lambda t: np.zeros(t.shape[:-1] + (dim, dim), dtype=complex), name="zero")


def scalar_symbol(N: int, dim: int, fn: Callable[[np.ndarray], np.ndarray], name: str) -> Symbol:
    """fn(t) I for a scalar function fn of points (..., N)."""
    eye = np.eye(dim, dtype=complex)
    return Symbol(N, dim, generator=lambda t: fn(t)[..., np.newaxis, np.newaxis] * eye, name=name)


def shift_symbol(N: int, dim: int, h: float) -> Symbol:
    """exp(i xi.h) I with h applied along every axis; T_m f = f(. + h)."""
    return scalar_symbol(N, dim, lambda t: np.exp(1j * h * t.sum(axis=-1)), f"shift:{h:g}")


def resolvent_sigma(A: PositiveOperator, lam: complex, N: int = 1) -> Symbol:
    """sigma(xi) = |xi|^2 (A + |xi|^2 + lambda)^{-1}."""
    matrix = A.matrix
    dim = A.dim

    def generator(t: np.ndarray) -> np.ndarray:
        r2 = np.sum(t**2, axis=-1)[..., np.newaxis, np.newaxis]
        shifted = matrix + (r2 + lam) * np.eye(dim)
        return r2 * np.linalg.inv(shifted)

    return Symbol(N, dim, generator=generator, name=f"resolvent-sigma:{lam}")


def sigma_scalar(N: int, dim: int, lam: float) -> Symbol:
    """xi^2 (1 + xi^2 + lambda)^{-1} I."""
    return scalar_symbol(
        N, dim, lambda t: np.sum(t**2, axis=-1) / (1.0 + np.sum(t**2, axis=-1) + lam), f"sigma-scalar:{lam:g}"
    )


def decay_symbol(N: int, dim: int) -> Symbol:
    """(1 + |xi|^2)^{-1} I."""
    return scalar_symbol(N, dim, lambda t: 1.0 / (1.0 + np.sum(t**2, axis=-1)), "decay")


def riesz_like(N: int, dim: int) -> Symbol:
    """xi_1 (1 + |xi|^2)^{-1/2} I."""
    return scalar_symbol(N, dim, lambda t: t[..., 0] / np.sqrt(1.0 + np.sum(t**2, axis=-1)), "riesz-like")


def jump_symbol(grid: Grid, dim: int) -> Symbol:
    """sign(xi_1) I, sampled on the frequency grid only."""
    values = np.sign(grid.frequencies()[..., 0])[..., np.newaxis, np.newaxis] * np.eye(dim)
    return Symbol.from_samples(SampledFunction(grid, values, side=FREQUENCY), "jump")


REGISTRY = ("identity", "shift", "resolvent-sigma", "sigma-scalar", "decay", "riesz-like", "jump")
SMOOTH_SUITE = ("identity", "sigma-scalar:1", "decay", "riesz-like", "resolvent-sigma:1;4,10")


def _parse_resolvent_argument(argument: str) -> tuple[PositiveOperator, complex]:
    """'a1;a2;...,lambda' with a diagonal A."""
    try:
        diagonal, lam = argument.split(",")
        return PositiveOperator.diagonal([float(a) for a in diagonal.split(";")]), complex(lam)
    except ValueError as e:
        raise ConfigError(f"Cannot parse resolvent-sigma argument '{argument}': {e}") from e


def symbol_from_spec(spec, grid: Grid, dim: int = 1) -> Symbol:
    """
    Resolve a registry entry. spec is a name such as "identity", "shift:0.5",
    "resolvent-sigma:1;4,10", or a dict {"name": ..., **parameters}; the dict
    form of resolvent-sigma takes a full matrix "A" and "lambda".
    """
    N = grid.N
    if isinstance(spec, dict):
        name = spec.get("name")
        dim = int(spec.get("dim", dim))
        if name == "resolvent-sigma" and "A" in spec:
            A = PositiveOperator(parse_matrix(spec["A"]))
            return resolvent_sigma(A, complex(spec.get("lambda", 1.0)), N)
        argument = spec.get("argument")
        spec = name if argument is None else f"{name}:{argument}"
    if not isinstance(spec, str):
        raise ConfigError(f"Symbol spec must be a string or an object, got {type(spec).__name__}")

    name, _, argument = spec.partition(":")
    if name == "identity":
        return identity_symbol(N, dim)
    if name == "shift":
        return shift_symbol(N, dim, float(argument or 0.0))
    if name == "resolvent-sigma":
        A, lam = _parse_resolvent_argument(argument or "1,1")
        return resolvent_sigma(A, lam, N)
    if name == "sigma-scalar":
        return sigma_scalar(N, dim, float(argument or 1.0))
    if name == "decay":
        return decay_symbol(N, dim)
    if name == "riesz-like":
        return riesz_like(N, dim)
    if name == "jump":
        return jump_symbol(grid, dim)
    raise ConfigError(f"Unknown symbol '{name}', expected one of {REGISTRY}")
