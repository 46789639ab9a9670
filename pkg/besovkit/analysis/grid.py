"""
Uniform sampling of C^d- and C^{d x d}-valued functions on [-L, L)^N and the
discrete Fourier transform matched to the convention

    (Ff)(xi)      = int exp(-i x.xi) f(x) dx
    (F^{-1}g)(x)  = (2 pi)^{-N} int exp(i x.xi) g(xi) dxi

Physical nodes are x_j = -L + j dx, frequency nodes are kept in FFT order
(0, dxi, ..., -dxi) so that every frequency-side array lines up with
scipy.fft output without shifting.
"""

import csv
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.fft

from besovkit.errors import GridMismatchError, NonFiniteError, ResolutionError
from besovkit.settings.defaults import default_float

logger = logging.getLogger(__name__)

PHYSICAL = "physical"
FREQUENCY = "frequency"

TRUNCATION_SUSPECT = "truncation-suspect"
DERIVATIVE_UNDER_RESOLVED = "derivative-under-resolved"

MAX_DERIVATIVE_ORDER = 6


@dataclass(frozen=True)
class Grid:
    """Uniform grid with M points per axis on the box [-L, L)^N."""

    N: int
    L: float
    M: int

    def __post_init__(self):
        if self.N not in (1, 2):
            raise ResolutionError(f"Only N in (1, 2) is supported, got N={self.N}")
        if not self.L > 0:
            raise ResolutionError(f"Half-width L must be positive, got {self.L}")
        if self.M < 4 or self.M & (self.M - 1):
            raise ResolutionError(f"M must be a power of two >= 4, got {self.M}")
        object.__setattr__(self, "L", float(self.L))

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.M

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @property
    def xi_max(self) -> float:
        return np.pi / self.dx

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.N

    @property
    def size(self) -> int:
        return self.M**self.N

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(self.N))

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.M)

    @cached_property
    def frequency_axis(self) -> np.ndarray:
        return 2.0 * np.pi * scipy.fft.fftfreq(self.M, d=self.dx)

    @cached_property
    def _points(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.axis] * self.N), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def _frequencies(self) -> np.ndarray:
        mesh = np.meshgrid(*([self.frequency_axis] * self.N), indexing="ij")
        return np.stack(mesh, axis=-1)

    def points(self) -> np.ndarray:
        """Physical coordinates, shape grid.shape + (N,)."""
        return self._points

    def frequencies(self) -> np.ndarray:
        """Frequency coordinates in FFT order, shape grid.shape + (N,)."""
        return self._frequencies

    @cached_property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self._points, axis=-1)

    @cached_property
    def frequency_modulus(self) -> np.ndarray:
        return np.linalg.norm(self._frequencies, axis=-1)

    def dual(self) -> "Grid":
        """The frequency grid seen as a physical grid, i.e. [-xi_max, xi_max)^N."""
        return Grid(self.N, self.xi_max, self.M)

    def refined(self, factor: int = 2) -> "Grid":
        """Same box, finer spacing."""
        return Grid(self.N, self.L, self.M * factor)

    def widened(self, factor: int = 2) -> "Grid":
        """Same spacing, larger box (finer frequency resolution)."""
        return Grid(self.N, self.L * factor, self.M * factor)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """
    Samples of a C^d (vector fiber) or C^{d x d} (matrix fiber) valued function.

    values has shape grid.shape + (d,) or grid.shape + (d, d). Scalar input of
    shape grid.shape is promoted to a d = 1 vector fiber.
    """

    grid: Grid
    values: np.ndarray
    side: str = PHYSICAL
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.side not in (PHYSICAL, FREQUENCY):
            raise GridMismatchError(f"Unknown side '{self.side}'")
        values = np.array(self.values, dtype=complex)
        if values.shape == self.grid.shape:
            values = values[..., np.newaxis]
        if values.shape[: self.grid.N] != self.grid.shape or values.ndim - self.grid.N not in (1, 2):
            raise GridMismatchError(
                f"Values of shape {values.shape} do not fit grid shape {self.grid.shape}"
            )
        if values.ndim - self.grid.N == 2 and values.shape[-1] != values.shape[-2]:
            raise GridMismatchError(f"Matrix fiber must be square, got {values.shape[-2:]}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("Sampled values contain NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flags", tuple(dict.fromkeys(self.flags)))

    @property
    def fiber_shape(self) -> tuple[int, ...]:
        return self.values.shape[self.grid.N :]

    @property
    def fiber_dim(self) -> int:
        return self.values.shape[-1]

    @property
    def is_matrix(self) -> bool:
        return len(self.fiber_shape) == 2

    @property
    def cell_volume(self) -> float:
        step = self.grid.dx if self.side == PHYSICAL else self.grid.dxi
        return step**self.grid.N

    def coordinates(self) -> np.ndarray:
        return self.grid.points() if self.side == PHYSICAL else self.grid.frequencies()

    def fiber_norms(self) -> np.ndarray:
        """Pointwise Euclidean norm (vector fiber) or spectral norm (matrix fiber)."""
        if self.is_matrix:
            return np.linalg.norm(self.values, ord=2, axis=(-2, -1))
        return np.linalg.norm(self.values, axis=-1)

    def with_values(self, values: np.ndarray, *flags: str) -> "SampledFunction":
        return replace(self, values=values, flags=self.flags + flags)

    def with_flags(self, *flags: str) -> "SampledFunction":
        return replace(self, flags=self.flags + flags)

    def _check_compatible(self, other: "SampledFunction"):
        if self.grid != other.grid or self.side != other.side:
            raise GridMismatchError(
                f"Cannot combine functions on {self.grid}/{self.side} and {other.grid}/{other.side}"
            )
        if self.fiber_shape != other.fiber_shape:
            raise GridMismatchError(
                f"Fiber shapes differ: {self.fiber_shape} vs {other.fiber_shape}"
            )

    def __add__(self, other: "SampledFunction") -> "SampledFunction":
        self._check_compatible(other)
        return replace(self, values=self.values + other.values, flags=self.flags + other.flags)

    def __sub__(self, other: "SampledFunction") -> "SampledFunction":
        self._check_compatible(other)
        return replace(self, values=self.values - other.values, flags=self.flags + other.flags)

    def __mul__(self, scalar: complex) -> "SampledFunction":
        return replace(self, values=scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "SampledFunction":
        return replace(self, values=-self.values)


def sample(
    grid: Grid,
    fn: Callable[[np.ndarray], np.ndarray],
    side: str = PHYSICAL,
) -> SampledFunction:
    """Evaluate fn on the grid points (shape grid.shape + (N,)) and wrap the result."""
    coords = grid.points() if side == PHYSICAL else grid.frequencies()
    return SampledFunction(grid, fn(coords), side=side)


def zeros_like(f: SampledFunction) -> SampledFunction:
    return replace(f, values=np.zeros_like(f.values), flags=())


def _phase(grid: Grid, sign: float) -> np.ndarray:
    """exp(sign * i * L * sum(xi)) correcting for the shifted origin x_0 = -L."""
    return np.exp(sign * 1j * grid.L * grid.frequencies().sum(axis=-1))


def _broadcast(grid_array: np.ndarray, f: SampledFunction) -> np.ndarray:
    return grid_array.reshape(grid_array.shape + (1,) * len(f.fiber_shape))


def boundary_ratio(f: SampledFunction) -> float:
    """Largest fiber norm on the box faces relative to the overall maximum."""
    norms = f.fiber_norms()
    peak = norms.max()
    if peak == 0.0:
        return 0.0
    face = max(
        max(np.take(norms, 0, axis=axis).max(), np.take(norms, -1, axis=axis).max())
        for axis in f.grid.axes
    )
    return float(face / peak)


def forward_ft(f: SampledFunction, boundary_threshold: float | None = None) -> SampledFunction:
    """Riemann-sum approximation of (Ff)(xi) on the dual frequency grid."""
    if f.side != PHYSICAL:
        raise GridMismatchError("forward_ft expects a physical-side function")
    if boundary_threshold is None:
        boundary_threshold = default_float("grid", "boundary_threshold")

    flags = ()
    ratio = boundary_ratio(f)
    if ratio > boundary_threshold:
        logger.warning(f"Function does not decay at the box boundary (ratio {ratio:.2e})")
        flags = (TRUNCATION_SUSPECT,)

    grid = f.grid
    spectrum = scipy.fft.fftn(f.values, axes=grid.axes) * grid.dx**grid.N
    spectrum *= _broadcast(_phase(grid, +1.0), f)
    return SampledFunction(grid, spectrum, side=FREQUENCY, flags=f.flags + flags)


def inverse_ft(g: SampledFunction) -> SampledFunction:
    """(2 pi)^{-N} Riemann-sum approximation of the inverse transform."""
    if g.side != FREQUENCY:
        raise GridMismatchError("inverse_ft expects a frequency-side function")
    grid = g.grid
    scale = (grid.M * grid.dxi / (2.0 * np.pi)) ** grid.N
    values = scipy.fft.ifftn(g.values * _broadcast(_phase(grid, -1.0), g), axes=grid.axes) * scale
    return SampledFunction(grid, values, side=PHYSICAL, flags=g.flags)


def _multi_index(alpha: int | Sequence[int], N: int) -> tuple[int, ...]:
    if np.isscalar(alpha):
        alpha = (int(alpha),) + (0,) * (N - 1)
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != N or any(a < 0 for a in alpha):
        raise ResolutionError(f"Multi-index {alpha} does not fit dimension N={N}")
    if sum(alpha) > MAX_DERIVATIVE_ORDER:
        raise ResolutionError(
            f"|alpha| = {sum(alpha)} exceeds the supported order {MAX_DERIVATIVE_ORDER}"
        )
    return alpha


def fourier_symbol_of_derivative(grid: Grid, alpha: int | Sequence[int]) -> np.ndarray:
    """(i xi)^alpha on the frequency grid; the Nyquist mode is dropped for odd orders."""
    alpha = _multi_index(alpha, grid.N)
    symbol = np.ones(grid.shape, dtype=complex)
    xi = grid.frequencies()
    for axis, order in enumerate(alpha):
        if order == 0:
            continue
        factor = (1j * xi[..., axis]) ** order
        if order % 2:
            nyquist = [slice(None)] * grid.N
            nyquist[axis] = grid.M // 2
            factor[tuple(nyquist)] = 0.0
        symbol = symbol * factor
    return symbol


def top_octave_energy(spectrum: np.ndarray, grid: Grid) -> float:
    """Fraction of spectral energy with max_i |xi_i| above xi_max / 2."""
    energy = np.abs(spectrum) ** 2
    energy = energy.reshape(grid.shape + (-1,)).sum(axis=-1)
    total = energy.sum()
    if total == 0.0:
        return 0.0
    top = np.abs(grid.frequencies()).max(axis=-1) > grid.xi_max / 2
    return float(energy[top].sum() / total)


def spectral_derivative(
    f: SampledFunction,
    alpha: int | Sequence[int],
    resolution_threshold: float | None = None,
) -> SampledFunction:
    """D^alpha f computed as F^{-1}[(i xi)^alpha Ff]."""
    if f.side != PHYSICAL:
        raise GridMismatchError("spectral_derivative expects a physical-side function")
    alpha = _multi_index(alpha, f.grid.N)
    if sum(alpha) == 0:
        return f
    if resolution_threshold is None:
        resolution_threshold = default_float("grid", "resolution_threshold")

    grid = f.grid
    spectrum = scipy.fft.fftn(f.values, axes=grid.axes)
    flags = ()
    if top_octave_energy(spectrum, grid) > resolution_threshold:
        logger.warning(f"Derivative {alpha} of an under-resolved function")
        flags = (DERIVATIVE_UNDER_RESOLVED,)
    symbol = _broadcast(fourier_symbol_of_derivative(grid, alpha), f)
    values = scipy.fft.ifftn(symbol * spectrum, axes=grid.axes)
    return f.with_values(values, *flags)


def _component_labels(f: SampledFunction) -> list[str]:
    return ["_".join(str(i) for i in index) for index in product(*(range(n) for n in f.fiber_shape))]


def write_csv(f: SampledFunction, path: str | Path) -> Path:
    """
    Columns: i0[, i1], x0[, x1] (or xi0[, xi1] on the frequency side), then
    re_<c>, im_<c> for every fiber component c in row-major order. Rows follow
    C order of the grid indices.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = f.grid
    coord = "x" if f.side == PHYSICAL else "xi"
    index_keys = [f"i{a}" for a in grid.axes]
    coord_keys = [f"{coord}{a}" for a in grid.axes]
    labels = _component_labels(f)
    value_keys = [key for label in labels for key in (f"re_{label}", f"im_{label}")]

    coords = f.coordinates().reshape(-1, grid.N)
    flat = f.values.reshape(grid.size, -1)
    with open(path, "w", newline="") as csvfile:
        csv_writer = csv.writer(csvfile)
        csv_writer.writerow(index_keys + coord_keys + value_keys)
        for row, index in enumerate(np.ndindex(*grid.shape)):
            entries = [str(i) for i in index]
            entries += [repr(float(c)) for c in coords[row]]
            for value in flat[row]:
                entries += [repr(float(value.real)), repr(float(value.imag))]
            csv_writer.writerow(entries)
    return path


def read_csv(path: str | Path, grid: Grid, side: str = PHYSICAL) -> SampledFunction:
    """Inverse of write_csv; the fiber layout is recovered from the header."""
    with open(path, "r", newline="") as csvfile:
        csv_reader = csv.DictReader(csvfile)
        header = csv_reader.fieldnames or []
        labels = [key[3:] for key in header if key.startswith("re_")]
        rows = list(csv_reader)
    if len(rows) != grid.size:
        raise GridMismatchError(f"{path} has {len(rows)} rows, grid expects {grid.size}")

    fiber_shape = tuple(int(part) + 1 for part in labels[-1].split("_"))
    values = np.empty(grid.shape + fiber_shape, dtype=complex)
    for row in rows:
        index = tuple(int(row[f"i{a}"]) for a in grid.axes)
        for label in labels:
            component = tuple(int(part) for part in label.split("_"))
            values[index + component] = float(row[f"re_{label}"]) + 1j * float(row[f"im_{label}"])
    return SampledFunction(grid, values, side=side)
