"""
Operator-valued Fourier multipliers T_m f = F^{-1}[m Ff] and the numerical
checkers for the conditions that make them bounded: the Fourier type constant,
the scale-invariant size M_{p,gamma}(m), the Mikhlin and Hoermander conditions,
the block derivative bounds, and the weighted convolution (Schur-type) bound.

Every constant is a max or min over a finite, documented sample set and is
reported as an estimate, never as the exact supremum.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.signal

from besovkit.analysis.grid import FREQUENCY, PHYSICAL, Grid, SampledFunction, forward_ft, inverse_ft
from besovkit.analysis.partition import DyadicSystem, annulus_cell_weights, build_dyadic_system, phi_profile
from besovkit.analysis.spaces import BesovParams, besov_norm, lp_norm
from besovkit.analysis.weights import Weight, check_submultiplicative, dual_exponent
from besovkit.errors import GridMismatchError, ResolutionError
from besovkit.operators.symbols import Symbol, multi_indices
from besovkit.services.base import run_ensemble
from besovkit.settings.defaults import default_int

logger = logging.getLogger(__name__)

SAMPLE_ONLY = "sample-only"
LOWER_BOUND = "lower-bound"
NOT_INTEGRABLE = "kernel-not-integrable"


@dataclass
class MultiplierReport:
    check: str
    constant: float
    bound: float | None = None
    passed: bool | None = None
    parameters: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "constant": self.constant,
            "bound": self.bound,
            "passed": self.passed,
            "parameters": self.parameters,
            "flags": list(self.flags),
            "details": self.details,
        }


def derivative_order(N: int, p: float) -> int:
    """l = ceil(N/p) + 1."""
    return int(np.ceil(N / p)) + 1


@lru_cache(maxsize=16)
def dyadic_system_for(grid: Grid) -> DyadicSystem:
    return build_dyadic_system(grid)


def _weight_values(weight: Weight | None, grid: Grid, points: np.ndarray) -> np.ndarray:
    if weight is None or weight.is_trivial:
        return np.ones(points.shape[:-1])
    return weight.cell_weights(grid, points)


def apply_multiplier(m: Symbol, f: SampledFunction) -> SampledFunction:
    """T_m f = F^{-1}[m(xi) (Ff)(xi)] with a pointwise matrix-vector product."""
    if f.side != PHYSICAL or f.is_matrix:
        raise GridMismatchError("apply_multiplier expects a vector-valued physical-side function")
    if m.dim != f.fiber_dim or m.N != f.grid.N:
        raise GridMismatchError(
            f"Symbol of size {m.dim} in N={m.N} cannot act on C^{f.fiber_dim} functions in N={f.grid.N}"
        )
    spectrum = forward_ft(f)
    values = np.einsum("...ij,...j->...i", m.on_grid(f.grid), spectrum.values)
    return inverse_ft(spectrum.with_values(values))


def estimate_fourier_type_constant(
    p: float,
    gamma: Weight | None,
    ensemble: Sequence[SampledFunction],
    workers: int | None = None,
) -> MultiplierReport:
    """
    max over the ensemble of ||Ff||_{L_{p',gamma^-1}} / ||f||_{L_{p,gamma}}, a
    lower bound on the Fourier gamma-type constant F_{p,N}.
    """
    p_dual = dual_exponent(p)
    inverse_weight = gamma.reciprocal() if gamma is not None else None

    def ratio(f: SampledFunction) -> float | None:
        source = lp_norm(f, p, gamma)
        if source == 0.0:
            return None
        return lp_norm(forward_ft(f), p_dual, inverse_weight) / source

    ratios = [r.value for r in run_ensemble(ratio, ensemble, workers) if r.ok and r.value is not None]
    constant = float(max(ratios)) if ratios else 0.0
    logger.info(f"Fourier type constant estimate for p={p}: {constant:.10g} from {len(ratios)} members")
    return MultiplierReport(
        "fourier-type",
        constant,
        parameters={"p": p, "p_dual": "inf" if np.isinf(p_dual) else p_dual,
                    "gamma": gamma.to_dict() if gamma else None},
        flags=(LOWER_BOUND,),
        details={"members": len(ratios), "skipped": len(ensemble) - len(ratios)},
    )


def scale_exponents(j_range: tuple[int, int] | None = None) -> range:
    if j_range is None:
        j_max = default_int("multiplier", "scale_j_max")
        j_range = (-j_max, j_max)
    return range(j_range[0], j_range[1] + 1)


def _dual_samples(m: Symbol, grid: Grid) -> np.ndarray:
    """Sample-only symbols reordered so that they line up with the ascending nodes of the dual grid."""
    return np.fft.fftshift(m.on_grid(grid), axes=grid.axes)


def estimate_M_p_gamma(
    m: Symbol,
    p: float,
    gamma: Weight | None,
    grid: Grid,
    j_range: tuple[int, int] | None = None,
) -> MultiplierReport:
    """
    min over a = 2^j of ||m(a.)||_{B^{N/p}_{p,1,gamma}}, with m treated as a
    function of the frequency variable on grid.dual() and the operator norm as
    fiber norm. Sample-only symbols are measured at a = 1 only.
    """
    dual = grid.dual()
    system = dyadic_system_for(dual)
    params = BesovParams(grid.N / p, p, 1.0, gamma)

    def norm_at(values: np.ndarray) -> float:
        return besov_norm(SampledFunction(dual, values), params, system, boundary_threshold=np.inf).value

    if not m.closed_form:
        value = norm_at(_dual_samples(m, grid))
        return MultiplierReport(
            "M_p_gamma", value, parameters={"p": p}, flags=(SAMPLE_ONLY,), details={"minimizing_scale": 1.0}
        )

    points = dual.points()
    scales = []
    for j in scale_exponents(j_range):
        a = 2.0**j
        scales.append((a, norm_at(m.evaluate(a * points))))
    a_best, value = min(scales, key=lambda item: item[1])
    logger.debug(f"M_p_gamma of {m.name}: {value:.6g} at a={a_best:g}")
    return MultiplierReport(
        "M_p_gamma",
        value,
        parameters={"p": p, "gamma": gamma.to_dict() if gamma else None},
        details={"minimizing_scale": a_best, "scale_values": [[a, v] for a, v in scales]},
    )


def block_symbol(m: Symbol, k: int, system: DyadicSystem) -> Symbol:
    """phi_k m, with the top block carrying the remainder 1 - sum_{j<K_max} phi_j."""
    K_max = system.K_max

    def window(t: np.ndarray) -> np.ndarray:
        modulus = np.linalg.norm(t, axis=-1)
        if k < K_max:
            return phi_profile(k, modulus)
        return 1.0 - sum(phi_profile(j, modulus) for j in range(K_max))

    if m.closed_form:
        generator = m.generator
        return Symbol(
            m.N, m.dim, generator=lambda t: window(t)[..., np.newaxis, np.newaxis] * generator(t),
            name=f"phi_{k}*{m.name}",
        )
    values = system.blocks[k][..., np.newaxis, np.newaxis] * m.on_grid(system.grid)
    return Symbol.from_samples(SampledFunction(system.grid, values, side=FREQUENCY), f"phi_{k}*{m.name}")


def _derivative_norms(m: Symbol, grid: Grid, alpha: tuple[int, ...]) -> np.ndarray:
    derivative = m.derivative_on_grid(grid, alpha)
    return np.linalg.norm(derivative, ord=2, axis=(-2, -1))


def check_mikhlin(
    m: Symbol,
    p: float,
    gamma: Weight | None,
    A: float | None,
    grid: Grid,
) -> MultiplierReport:
    """
    A_hat = max over |alpha| <= ceil(N/p) + 1 and frequency nodes of
    gamma^{1/p}(t) (1 + |t|)^{|alpha|} ||D^alpha m(t)||; passes iff A_hat <= A.
    """
    l = derivative_order(grid.N, p)
    frequencies = grid.frequencies()
    weight = _weight_values(gamma, grid, frequencies) ** (1.0 / p)
    growth = 1.0 + grid.frequency_modulus

    per_alpha = {}
    for alpha in multi_indices(grid.N, l):
        weighted = weight * growth ** sum(alpha) * _derivative_norms(m, grid, alpha)
        per_alpha[alpha] = float(weighted.max())
    constant = max(per_alpha.values())
    passed = None if A is None else bool(constant <= A)
    flags = () if m.closed_form else (SAMPLE_ONLY,)
    logger.info(f"Mikhlin constant of {m.name}: {constant:.6g} (bound {A})")
    return MultiplierReport(
        "mikhlin",
        constant,
        A,
        passed,
        parameters={"p": p, "l": l, "symbol": m.name, "grid": [grid.N, grid.L, grid.M]},
        flags=flags,
        details={"per_alpha": {str(list(alpha)): value for alpha, value in per_alpha.items()}},
    )


def check_hormander(
    m: Symbol,
    p: float,
    gamma: Weight | None,
    A: float | None,
    grid: Grid,
) -> MultiplierReport:
    """
    A_hat = max over |alpha| <= ceil(N/p) + 1 and R = 2^j, j = 0..K_max - 2, of
    R^{|alpha|} [R^{-N} int_{R<=|t|<=4R} ||D^alpha m||^p gamma dt]^{1/p}, together
    with the central term [int_{|t|<=2} ||D^alpha m||^p gamma dt]^{1/p}.
    """
    l = derivative_order(grid.N, p)
    K_max = int(np.floor(np.log2(grid.xi_max)))
    cell = grid.dxi**grid.N
    weight = _weight_values(gamma, grid, grid.frequencies())
    radii = [2.0**j for j in range(max(K_max - 1, 0))]
    annuli = {R: annulus_cell_weights(grid, R, 4.0 * R) for R in radii}
    ball = annulus_cell_weights(grid, 0.0, 2.0)

    per_alpha = {}
    central = {}
    for alpha in multi_indices(grid.N, l):
        integrand = _derivative_norms(m, grid, alpha) ** p * weight * cell
        terms = [
            R ** sum(alpha) * (np.sum(integrand * annuli[R]) / R**grid.N) ** (1.0 / p) for R in radii
        ]
        per_alpha[alpha] = float(max(terms)) if terms else 0.0
        central[alpha] = float(np.sum(integrand * ball) ** (1.0 / p))
    constant = max(max(per_alpha.values()), max(central.values()))
    passed = None if A is None else bool(constant <= A)
    logger.info(f"Hoermander constant of {m.name}: {constant:.6g} (bound {A})")
    return MultiplierReport(
        "hormander",
        constant,
        A,
        passed,
        parameters={"p": p, "l": l, "symbol": m.name, "radii": radii},
        flags=() if m.closed_form else (SAMPLE_ONLY,),
        details={
            "annulus_per_alpha": {str(list(a)): v for a, v in per_alpha.items()},
            "central_per_alpha": {str(list(a)): v for a, v in central.items()},
        },
    )


def check_block_derivative_bounds(
    m: Symbol,
    p: float,
    gamma: Weight | None,
    u: float,
    K_max: int,
    A: float | None = None,
) -> MultiplierReport:
    """
    max over k = 1..K_max and |alpha| <= ceil(N/p) + 1 of
    ||gamma^{1/p} D^alpha [m(2^{k-1} .)]||_{L_u(I_1)} with I_1 = {1 <= |t| <= 4},
    for the endpoint exponents u = p and u = inf.
    """
    if not (u == p or np.isinf(u)):
        raise ResolutionError(f"Only u = p or u = inf are supported, got u={u}")
    N = m.N
    mesh = Grid(N, 4.0, 512 if N == 1 else 128)
    points = mesh.points()
    inside = (mesh.radius >= 1.0) & (mesh.radius <= 4.0)
    weight = _weight_values(gamma, mesh, points) ** (1.0 / p)
    l = derivative_order(N, p)

    per_block = []
    for k in range(1, K_max + 1):
        scaled = m.rescaled(2.0 ** (k - 1))
        values = []
        for alpha in multi_indices(N, l):
            norms = weight * np.linalg.norm(scaled.derivative_at(points, alpha), ord=2, axis=(-2, -1))
            norms = norms[inside]
            if np.isinf(u):
                values.append(float(norms.max()))
            else:
                values.append(float((np.sum(norms**u) * mesh.dx**N) ** (1.0 / u)))
        per_block.append(max(values))
    constant = max(per_block) if per_block else 0.0
    passed = None if A is None else bool(constant <= A)
    return MultiplierReport(
        "block-derivative",
        constant,
        A,
        passed,
        parameters={"p": p, "u": "inf" if np.isinf(u) else u, "l": l, "symbol": m.name},
        details={"per_block": per_block},
    )


def reflected_adjoint(kernel: SampledFunction) -> SampledFunction:
    """k~(t) = k(-t)^H on the grid; the node -(-L) = L lies outside the box and is set to zero."""
    axes = kernel.grid.axes
    values = np.roll(np.flip(kernel.values, axis=axes), 1, axis=axes)
    for axis in axes:
        index = [slice(None)] * values.ndim
        index[axis] = 0
        values[tuple(index)] = 0.0
    return kernel.with_values(np.conj(np.swapaxes(values, -1, -2)))


def convolve(kernel: SampledFunction, f: SampledFunction) -> SampledFunction:
    """
    (Kf)(x_i) = dx^N sum_j k(x_i - y_j) f(y_j), the direct linear convolution of
    the samples (kernel values outside the box are zero).
    """
    grid = kernel.grid
    if f.grid != grid:
        raise GridMismatchError(f"Kernel grid {grid} differs from function grid {f.grid}")
    d_out, d_in = kernel.fiber_shape
    if f.fiber_dim != d_in:
        raise GridMismatchError(f"Kernel acts on C^{d_in}, function is C^{f.fiber_dim}")

    method = "direct" if grid.N == 1 else "fft"
    window = tuple(slice(grid.M // 2, grid.M // 2 + grid.M) for _ in grid.axes)
    out = np.zeros(grid.shape + (d_out,), dtype=complex)
    for a in range(d_out):
        for b in range(d_in):
            entry = kernel.values[..., a, b]
            if not np.any(entry):
                continue
            full = scipy.signal.convolve(entry, f.values[..., b], mode="full", method=method)
            out[..., a] += full[window]
    return f.with_values(out * grid.dx**grid.N)


def _max_weighted_action(kernel: np.ndarray, w: np.ndarray, seed: int = 0, iterations: int = 100) -> float:
    """
    sup over unit x of sum_t w_t ||k_t x|| by the fixed-point iteration
    x <- normalize(sum_t w_t k_t^H k_t x / ||k_t x||), which never decreases the
    objective; the best of several starts is returned.
    """
    d_in = kernel.shape[-1]
    if d_in == 1:
        return float(np.sum(w * np.linalg.norm(kernel[..., 0], axis=-1)))

    rng = np.random.default_rng(seed)
    starts = [np.eye(d_in, dtype=complex)[i] for i in range(d_in)]
    starts += [v / np.linalg.norm(v) for v in rng.standard_normal((4, d_in)) + 1j * rng.standard_normal((4, d_in))]
    best = 0.0
    for x in starts:
        value = 0.0
        for _ in range(iterations):
            kx = kernel @ x
            norms = np.linalg.norm(kx, axis=-1)
            new_value = float(np.sum(w * norms))
            scale = np.divide(w, norms, out=np.zeros_like(norms), where=norms > 0)
            gradient = np.einsum("tij,ti->j", kernel.conj(), kx * scale[:, np.newaxis])
            size = np.linalg.norm(gradient)
            if size == 0.0 or new_value - value <= 1e-15 * max(new_value, 1.0):
                value = max(value, new_value)
                break
            value = new_value
            x = gradient / size
        best = max(best, value)
    return best


def _operator_power_iteration(
    kernel: SampledFunction, start: SampledFunction, weight: Weight | None, iterations: int
) -> float:
    """sqrt of the largest Rayleigh quotient of K*K on L_{2,gamma}; nondecreasing over the iterations."""
    grid = kernel.grid
    w = _weight_values(weight, grid, grid.points())[..., np.newaxis]
    adjoint = reflected_adjoint(kernel)
    x = start
    best = 0.0
    for _ in range(iterations):
        x_norm = np.sum(np.abs(x.values) ** 2 * w)
        if x_norm == 0.0:
            break
        y = convolve(kernel, x)
        best = max(best, float(np.sqrt(np.sum(np.abs(y.values) ** 2 * w) / x_norm)))
        z = convolve(adjoint, y.with_values(w * y.values)).values / w
        z_norm = np.sqrt(np.sum(np.abs(z) ** 2 * w))
        if z_norm == 0.0:
            break
        x = x.with_values(z / z_norm)
    return best


def check_convolution_bound(
    kernel: SampledFunction,
    gamma_tilde: Weight | None,
    q: float,
    ensemble: Sequence[SampledFunction],
    C1: float | None = None,
    tolerance: float = 1e-6,
    workers: int | None = None,
) -> MultiplierReport:
    """
    Weighted Schur-type bound ||K||_{L_{q,gamma}} <= C1 C2^{1-1/q} C3^{1/q} for
    Kf = k * f, with

        C2 = sup_{|x|=1} ||k(.) x||_{L_{1,gamma}}     C3 = sup_{|y|=1} ||k(.)^H y||_{L_{1,gamma}}

    and C1 the submultiplicativity constant of gamma. The empirical norm is the
    max of the ensemble ratios and, for q = 2, a power iteration on K*K. The
    largest operator norm of the kernel transform is reported as the Fourier
    diagonalization value of the unweighted L_2 norm.
    """
    grid = kernel.grid
    if not kernel.is_matrix:
        raise GridMismatchError("Convolution kernels must be matrix-valued")
    gamma_tilde = gamma_tilde or Weight.constant(grid.N)

    if C1 is None:
        C1 = gamma_tilde.declared_constant()
        if C1 is None:
            C1 = check_submultiplicative(gamma_tilde, grid).estimated_C
    w = (_weight_values(gamma_tilde, grid, grid.points()) * grid.dx**grid.N).reshape(-1)
    flat = kernel.values.reshape((-1,) + kernel.fiber_shape)
    adjoint_flat = np.conj(np.swapaxes(flat, -1, -2))

    flags = ()
    with np.errstate(invalid="ignore", over="ignore"):
        C2 = _max_weighted_action(flat, w)
        C3 = _max_weighted_action(adjoint_flat, w)
        operator_norms = np.linalg.norm(flat, ord=2, axis=(-2, -1))
        upper = float(np.sum(w * operator_norms))
    if not (np.isfinite(C2) and np.isfinite(C3) and np.isfinite(C1)):
        logger.warning("Kernel is not absolutely integrable against the weight on this grid")
        flags = (NOT_INTEGRABLE,)

    if np.isinf(q):
        bound = C1 * C2
    else:
        bound = C1 * C2 ** (1.0 - 1.0 / q) * C3 ** (1.0 / q)

    def ratio(f: SampledFunction) -> float | None:
        source = lp_norm(f, q, gamma_tilde)
        if source == 0.0:
            return None
        return lp_norm(convolve(kernel, f), q, gamma_tilde) / source

    ratios = [r.value for r in run_ensemble(ratio, ensemble, workers) if r.ok and r.value is not None]
    empirical = float(max(ratios)) if ratios else 0.0
    power_estimate = None
    if q == 2 and ensemble:
        power_estimate = _operator_power_iteration(
            kernel, ensemble[0], gamma_tilde, default_int("solver", "power_iterations")
        )
        empirical = max(empirical, power_estimate)

    spectrum = forward_ft(kernel, boundary_threshold=np.inf)
    fourier_norm = float(np.linalg.norm(spectrum.values, ord=2, axis=(-2, -1)).max())

    passed = not flags and bool(empirical <= bound * (1.0 + tolerance))
    logger.info(
        f"Convolution bound q={q}: empirical {empirical:.8g} vs C1*C2^(1-1/q)*C3^(1/q) = {bound:.8g}"
    )
    return MultiplierReport(
        "convolution",
        empirical,
        bound,
        passed,
        parameters={"q": "inf" if np.isinf(q) else q, "gamma": gamma_tilde.to_dict()},
        flags=flags,
        details={
            "C1": C1,
            "C2": C2,
            "C3": C3,
            "C2_upper": upper,
            "empirical": empirical,
            "power_iteration": power_estimate,
            "fourier_norm": fourier_norm,
            "members": len(ratios),
        },
    )


def verify_besov_multiplier_bound(
    m: Symbol,
    params: BesovParams,
    ensemble: Sequence[SampledFunction],
    system: DyadicSystem,
    p: float = 2.0,
    gamma: Weight | None = None,
    workers: int | None = None,
) -> MultiplierReport:
    """
    A_hat = max_k M_{p,gamma}(phi_k m) over k = 0..K_max, the empirical ratio
    ||T_m f||_B / ||f||_B over the ensemble, and empirical / A_hat, a lower
    bound on the multiplier theorem's constant. The spread max/min of the
    interior block constants k = 1..K_max-1 is reported as well.
    """
    grid = system.grid
    block_constants = [
        estimate_M_p_gamma(block_symbol(m, k, system), p, gamma, grid).constant
        for k in range(system.K_max + 1)
    ]
    A_hat = float(max(block_constants))
    interior = [c for c in block_constants[1 : system.K_max] if c > 0]
    spread = float(max(interior) / min(interior)) if interior else None

    def ratio(f: SampledFunction) -> float | None:
        source = besov_norm(f, params, system).value
        if source == 0.0:
            return None
        return besov_norm(apply_multiplier(m, f), params, system).value / source

    ratios = [r.value for r in run_ensemble(ratio, ensemble, workers) if r.ok and r.value is not None]
    empirical = float(max(ratios)) if ratios else 0.0
    logger.info(f"Besov multiplier check for {m.name}: empirical {empirical:.10g}, A_hat {A_hat:.6g}")
    return MultiplierReport(
        "besov-multiplier",
        empirical,
        A_hat,
        None,
        parameters={"p": p, "besov": params.to_dict(), "symbol": m.name},
        flags=() if m.closed_form else (SAMPLE_ONLY,),
        details={
            "A_hat": A_hat,
            "empirical_ratio": empirical,
            "ratio_over_A_hat": empirical / A_hat if A_hat > 0 else None,
            "block_constants": block_constants,
            "block_spread": spread,
            "members": len(ratios),
        },
    )


def multiplier_suite(
    symbols: Sequence[Symbol],
    params: BesovParams,
    ensemble: Sequence[SampledFunction],
    system: DyadicSystem,
    p: float = 2.0,
    workers: int | None = None,
) -> dict:
    """
    For every symbol: its Mikhlin constant A and empirical Besov operator ratio;
    kappa = max ratio / A over the suite.
    """
    rows = []
    for m in symbols:
        mikhlin = check_mikhlin(m, p, params.weight, None, system.grid)

        def ratio(f: SampledFunction, m=m) -> float | None:
            source = besov_norm(f, params, system).value
            if source == 0.0:
                return None
            return besov_norm(apply_multiplier(m, f), params, system).value / source

        ratios = [r.value for r in run_ensemble(ratio, ensemble, workers) if r.ok and r.value is not None]
        empirical = float(max(ratios)) if ratios else 0.0
        rows.append({"symbol": m.name, "mikhlin": mikhlin.constant, "empirical_ratio": empirical})
    kappa = max((row["empirical_ratio"] / row["mikhlin"] for row in rows if row["mikhlin"] > 0), default=0.0)
    logger.info(f"Multiplier suite kappa = {kappa:.6g} over {len(rows)} symbols")
    return {"kappa": kappa, "symbols": rows}
