"""
Positive weight functions gamma on R^N, their cell quadrature weights, and
numerical checks of the weight hypotheses used by the embedding, multiplier and
solver routines (submultiplicativity and local integrability of the various
weight combinations).
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from besovkit.analysis.grid import Grid
from besovkit.errors import WeightError

logger = logging.getLogger(__name__)

KINDS = ("constant", "power", "shifted_power", "exponential", "product")
FORMS = ("embedding", "fourier_embedding", "condition1", "condition2")

# exp() overflows just above 709; larger log-ratios are reported as infinite
_LOG_OVERFLOW = 700.0
_MAX_CHECK_NODES = 512


@dataclass(frozen=True)
class Weight:
    """
    gamma(x)^exponent for one of the supported families:

        constant       c
        power          |x|^alpha                                alpha > -N
        shifted_power  (1 + |x|)^k
        exponential    exp(c |x|^order)
        product        prod_k (1 + sum_j |x_j|^alpha_jk)^beta_k  alpha_jk >= 0

    exponent is +1 for gamma and -1 for gamma^{-1}.
    """

    kind: str
    N: int
    params: dict = field(default_factory=dict)
    exponent: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise WeightError(f"Unknown weight kind '{self.kind}', expected one of {KINDS}")
        if self.N not in (1, 2):
            raise WeightError(f"Weights are defined for N in (1, 2), got {self.N}")
        if self.exponent not in (1, -1):
            raise WeightError(f"Weight exponent must be +1 or -1, got {self.exponent}")

        params = dict(self.params)
        if self.kind == "constant":
            params["c"] = float(params.get("c", 1.0))
            if params["c"] <= 0:
                raise WeightError(f"Constant weight needs c > 0, got {params['c']}")
        elif self.kind == "power":
            params["alpha"] = float(params["alpha"])
            if self.exponent == 1 and params["alpha"] <= -self.N:
                raise WeightError(
                    f"|x|^{params['alpha']} is not locally integrable in dimension {self.N}"
                )
        elif self.kind == "shifted_power":
            params["k"] = float(params["k"])
        elif self.kind == "exponential":
            params["c"] = float(params["c"])
            params["order"] = float(params.get("order", 1.0))
            if params["order"] <= 0:
                raise WeightError(f"Exponential weight order must be positive, got {params['order']}")
        else:
            alphas = np.asarray(params["alphas"], dtype=float)
            if alphas.ndim == 1:
                alphas = alphas[:, np.newaxis]
            betas = np.atleast_1d(np.asarray(params["betas"], dtype=float))
            if alphas.shape != (self.N, betas.size):
                raise WeightError(
                    f"Product weight needs alphas of shape ({self.N}, {betas.size}), got {alphas.shape}"
                )
            if np.any(alphas < 0):
                raise WeightError("Product weight exponents alpha_jk must be nonnegative")
            params["alphas"], params["betas"] = alphas.tolist(), betas.tolist()
        object.__setattr__(self, "params", params)

    @classmethod
    def constant(cls, N: int, c: float = 1.0) -> "Weight":
        return cls("constant", N, {"c": c})

    @classmethod
    def power(cls, N: int, alpha: float) -> "Weight":
        return cls("power", N, {"alpha": alpha})

    @classmethod
    def shifted_power(cls, N: int, k: float) -> "Weight":
        return cls("shifted_power", N, {"k": k})

    @classmethod
    def exponential(cls, N: int, c: float, order: float = 1.0) -> "Weight":
        return cls("exponential", N, {"c": c, "order": order})

    @classmethod
    def product(cls, N: int, alphas, betas) -> "Weight":
        return cls("product", N, {"alphas": alphas, "betas": betas})

    @classmethod
    def from_config(cls, config: dict | None, N: int) -> "Weight":
        """Build from {"kind": ..., "params": {...}, "exponent": 1}; None means gamma = 1."""
        if config is None:
            return cls.constant(N)
        return cls(config.get("kind", "constant"), N, config.get("params", {}), int(config.get("exponent", 1)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "exponent": self.exponent}

    def reciprocal(self) -> "Weight":
        return replace(self, exponent=-self.exponent)

    @property
    def is_trivial(self) -> bool:
        return self.kind == "constant" and self.params["c"] == 1.0

    @property
    def singular_at_origin(self) -> bool:
        return self.kind == "power" and self.params["alpha"] != 0

    def log_evaluate(self, x: np.ndarray) -> np.ndarray:
        """log gamma(x)^exponent for points of shape (..., N); +-inf where gamma is 0 or infinite."""
        x = np.asarray(x, dtype=float)
        radius = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore"):
            if self.kind == "constant":
                log_value = np.full(x.shape[:-1], np.log(self.params["c"]))
            elif self.kind == "power":
                log_value = self.params["alpha"] * np.log(radius)
            elif self.kind == "shifted_power":
                log_value = self.params["k"] * np.log1p(radius)
            elif self.kind == "exponential":
                log_value = self.params["c"] * radius ** self.params["order"]
            else:
                alphas = np.asarray(self.params["alphas"])
                log_value = np.zeros(x.shape[:-1])
                for k, beta in enumerate(self.params["betas"]):
                    inner = sum(np.abs(x[..., j]) ** alphas[j, k] for j in range(self.N))
                    log_value = log_value + beta * np.log1p(inner)
        return self.exponent * log_value

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_evaluate(x))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)

    def cell_weights(self, grid: Grid, side_points: np.ndarray | None = None) -> np.ndarray:
        """
        Per-node quadrature weights for integrals of gamma over the grid cells.

        For |x|^a the node at the origin is replaced by the exact integral of
        |x|^a over its cell (an equal-area disc when N = 2) divided by the cell
        volume.
        """
        points = grid.points() if side_points is None else side_points
        values = self.evaluate(points)
        if not self.singular_at_origin:
            return values
        at_origin = np.linalg.norm(points, axis=-1) == 0.0
        if not np.any(at_origin):
            return values

        a = self.exponent * self.params["alpha"]
        h = float(points.reshape(-1, grid.N)[1, -1] - points.reshape(-1, grid.N)[0, -1])
        if a <= -grid.N:
            values[at_origin] = np.inf
            return values
        if grid.N == 1:
            cell_integral = 2.0 * (h / 2.0) ** (a + 1.0) / (a + 1.0)
        else:
            r = h / np.sqrt(np.pi)
            cell_integral = 2.0 * np.pi * r ** (a + 2.0) / (a + 2.0)
        values[at_origin] = cell_integral / h**grid.N
        return values

    def declared_constant(self) -> float | None:
        """
        Constant C with gamma(x + y) <= C gamma(x) gamma(y) for the families that
        satisfy it, None otherwise.
        """
        sign = self.exponent
        if self.kind == "constant":
            c = self.params["c"] ** sign
            return 1.0 / c
        if self.kind == "shifted_power":
            return 1.0 if sign * self.params["k"] >= 0 else None
        if self.kind == "exponential":
            return 1.0 if sign * self.params["c"] >= 0 and self.params["order"] <= 1 else None
        if self.kind == "product":
            betas = [sign * b for b in self.params["betas"]]
            if any(b < 0 for b in betas):
                return None
            alphas = np.asarray(self.params["alphas"])
            constant = 1.0
            for k, beta in enumerate(betas):
                constant *= max(1.0, 2.0 ** (alphas[:, k].max() - 1.0)) ** beta
            return constant
        return None


@dataclass
class SubmultiplicativeReport:
    estimated_C: float
    bound: float | None
    passed: bool
    worst_pair: tuple[list[float], list[float]] | None
    degenerate_points: int

    def to_dict(self) -> dict:
        return {
            "estimated_C": self.estimated_C,
            "bound": self.bound,
            "passed": self.passed,
            "worst_pair": self.worst_pair,
            "degenerate_points": self.degenerate_points,
        }


def check_nodes(grid: Grid, max_nodes: int = _MAX_CHECK_NODES) -> np.ndarray:
    """Evenly strided subset of the grid nodes, endpoints included, at most max_nodes in total."""
    per_axis = min(grid.M, int(np.floor(max_nodes ** (1.0 / grid.N))))
    index = np.unique(np.linspace(0, grid.M - 1, per_axis).round().astype(int))
    axis = grid.axis[index]
    mesh = np.meshgrid(*([axis] * grid.N), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, grid.N)


def check_submultiplicative(
    weight: Weight, grid: Grid, bound: float | None = None
) -> SubmultiplicativeReport:
    """
    Estimate C = sup gamma(t) / (gamma(t - s) gamma(s)) over pairs of grid
    nodes, writing t = x + y, s = y. Ratios are formed in the log domain.
    Nodes where gamma is 0 or infinite are skipped and counted.
    """
    nodes = check_nodes(grid)
    log_gamma = weight.log_evaluate(nodes)
    finite = np.isfinite(log_gamma)
    n_degenerate = int(np.count_nonzero(~finite))
    if n_degenerate:
        logger.warning(f"Skipping {n_degenerate} nodes where the weight is 0 or infinite")
    nodes, log_gamma = nodes[finite], log_gamma[finite]

    sums = nodes[:, np.newaxis, :] + nodes[np.newaxis, :, :]
    log_ratio = weight.log_evaluate(sums) - log_gamma[:, np.newaxis] - log_gamma[np.newaxis, :]

    worst = np.unravel_index(np.argmax(log_ratio), log_ratio.shape)
    log_C = float(log_ratio[worst])
    estimated_C = np.inf if log_C > _LOG_OVERFLOW else float(np.exp(log_C))
    worst_pair = (nodes[worst[0]].tolist(), nodes[worst[1]].tolist())

    if bound is None:
        bound = weight.declared_constant()
    passed = bound is not None and estimated_C <= bound * (1.0 + 1e-12)
    logger.info(
        f"Submultiplicativity of {weight.kind} weight: C_hat={estimated_C:.6g}, declared={bound}"
    )
    return SubmultiplicativeReport(estimated_C, bound, passed, worst_pair, n_degenerate)


@dataclass
class IntegrabilityReport:
    value: float
    finite: bool
    refinement_history: list[float]
    form: str

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "finite": self.finite,
            "refinement_history": self.refinement_history,
            "form": self.form,
        }


def dual_exponent(p: float) -> float:
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def log_integrand(gamma: Weight, gamma_tilde: Weight, p: float, q: float | None, form: str):
    """
    Returns x -> log of the integrand for one of

        embedding          [gamma_tilde^q / gamma^p]^{1/(q-p)}          1 <= p < q
        fourier_embedding  [gamma^q gamma_tilde^{p'}]^{1/(p'-q)}        1 <= q < p'
        condition1         [gamma^{1-1/p} gamma_tilde]^p
        condition2         gamma^p

    Both embedding forms are taken exactly as displayed, including their
    different sign patterns.
    """
    if form == "embedding":
        if q is None or not q > p:
            raise WeightError(f"The embedding integrand needs q > p, got p={p}, q={q}")
        if np.isinf(q):
            # limit q -> inf of the exponent pattern
            return lambda x: gamma_tilde.log_evaluate(x)
        return lambda x: (q * gamma_tilde.log_evaluate(x) - p * gamma.log_evaluate(x)) / (q - p)
    if form == "fourier_embedding":
        p_dual = dual_exponent(p)
        if q is None or not q < p_dual:
            raise WeightError(f"The Fourier embedding integrand needs q < p', got q={q}, p'={p_dual}")
        if np.isinf(p_dual):
            return lambda x: gamma_tilde.log_evaluate(x)
        return lambda x: (q * gamma.log_evaluate(x) + p_dual * gamma_tilde.log_evaluate(x)) / (p_dual - q)
    if form == "condition1":
        return lambda x: p * ((1.0 - 1.0 / p) * gamma.log_evaluate(x) + gamma_tilde.log_evaluate(x))
    if form == "condition2":
        return lambda x: p * gamma.log_evaluate(x)
    raise WeightError(f"Unknown integrability form '{form}', expected one of {FORMS}")


def _midpoint_sum(log_fn, N: int, R: float, n: int) -> float:
    """Midpoint rule on [-R, R]^N with n cells per axis; n even keeps the origin off the nodes."""
    h = 2.0 * R / n
    axis = -R + h * (np.arange(n) + 0.5)
    mesh = np.stack(np.meshgrid(*([axis] * N), indexing="ij"), axis=-1)
    with np.errstate(over="ignore"):
        values = np.exp(log_fn(mesh))
    return float(np.sum(values) * h**N)


def check_integrability(
    gamma: Weight,
    gamma_tilde: Weight | None,
    p: float,
    q: float | None,
    R: float,
    form: str = "embedding",
    base_nodes: int | None = None,
    levels: int | None = None,
) -> IntegrabilityReport:
    """
    Integral of the chosen weight combination over the box [-R, R]^N.

    The midpoint rule is refined by doubling; the last differences are
    Richardson-extrapolated when they contract geometrically, and a difference
    sequence that stops contracting reports a divergent integral.
    """
    if gamma_tilde is None:
        gamma_tilde = Weight.constant(gamma.N)
    if gamma.N != gamma_tilde.N:
        raise WeightError(f"Weights live in different dimensions: {gamma.N} vs {gamma_tilde.N}")
    log_fn = log_integrand(gamma, gamma_tilde, p, q, form)
    N = gamma.N
    if base_nodes is None:
        base_nodes = 1024 if N == 1 else 64
    if levels is None:
        levels = 6 if N == 1 else 5

    history = [_midpoint_sum(log_fn, N, R, base_nodes * 2**j) for j in range(levels)]
    logger.debug(f"Integrability refinement history ({form}): {history}")
    if not np.all(np.isfinite(history)):
        return IntegrabilityReport(np.inf, False, history, form)

    last_diff = history[-1] - history[-2]
    prev_diff = history[-2] - history[-3]
    scale = max(abs(history[-1]), np.finfo(float).tiny)
    if abs(last_diff) <= 1e-12 * scale:
        return IntegrabilityReport(history[-1], True, history, form)

    ratio = last_diff / prev_diff if prev_diff != 0 else np.inf
    if not 0.0 <= ratio < 0.9:
        logger.info(f"Refinement ratio {ratio:.3f} for the {form} integrand indicates divergence")
        return IntegrabilityReport(np.inf, False, history, form)
    value = history[-1] + last_diff * ratio / (1.0 - ratio)
    return IntegrabilityReport(float(value), True, history, form)


@dataclass
class Condition2Report:
    submultiplicative: SubmultiplicativeReport
    integrability: IntegrabilityReport

    @property
    def passed(self) -> bool:
        return self.submultiplicative.passed and self.integrability.finite

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "submultiplicative": self.submultiplicative.to_dict(),
            "integrability": self.integrability.to_dict(),
        }


def check_condition2(weight: Weight, p: float, grid: Grid, R: float = 1.0) -> Condition2Report:
    """Submultiplicativity of gamma together with local integrability of gamma^p on [-R, R]^N."""
    return Condition2Report(
        check_submultiplicative(weight, grid),
        check_integrability(weight, None, p, None, R, form="condition2"),
    )
