"""
Weighted Lebesgue, Sobolev, Besov and Besov-Lions norms of sampled functions
and the ensemble verifier for the embeddings between these spaces.

All integrals use the midpoint rule on the sampling grid, the same
discretization the transforms use, so on-grid identities such as Plancherel
hold to rounding.
"""

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

from besovkit.analysis.grid import (
    TRUNCATION_SUSPECT,
    SampledFunction,
    boundary_ratio,
    forward_ft,
    spectral_derivative,
)
from besovkit.analysis.partition import DyadicSystem, dyadic_blocks
from besovkit.analysis.weights import Weight, check_integrability, dual_exponent
from besovkit.errors import ResolutionError, WeightError
from besovkit.services.base import run_ensemble
from besovkit.settings.defaults import default_float

logger = logging.getLogger(__name__)

UNRESOLVED = "unresolved"
UNRESOLVED_FRACTION = 0.01

EMBEDDING_KINDS = (
    "besov_l2",
    "besov_linf",
    "sobolev_chain",
    "weighted_lp",
    "fourier_embedding",
    "fourier_besov_l1",
    "fourier_besov_dual",
)


def _check_index(name: str, value: float):
    if not value >= 1:
        raise WeightError(f"Index {name} must lie in [1, inf], got {value}")


@dataclass(frozen=True)
class BesovParams:
    """Selects B^s_{q,r,gamma}; q or r may be numpy.inf."""

    s: float = 0.0
    q: float = 2.0
    r: float = 2.0
    weight: Weight | None = None

    def __post_init__(self):
        _check_index("q", self.q)
        _check_index("r", self.r)

    @classmethod
    def from_config(cls, config: dict | None, N: int) -> "BesovParams":
        config = config or {}
        return cls(
            s=float(config.get("s", 0.0)),
            q=_parse_index(config.get("q", 2.0)),
            r=_parse_index(config.get("r", 2.0)),
            weight=Weight.from_config(config.get("weight"), N) if config.get("weight") else None,
        )

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "q": _format_index(self.q),
            "r": _format_index(self.r),
            "weight": self.weight.to_dict() if self.weight is not None else None,
        }


def _parse_index(value) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return np.inf
    return float(value)


def _format_index(value: float):
    return "inf" if np.isinf(value) else value


@dataclass
class NormReport:
    value: float
    blocks: list[tuple[int, float]] = field(default_factory=list)
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "blocks": [{"k": k, "contrib": contrib} for k, contrib in self.blocks],
            "flags": list(self.flags),
        }


def lr_aggregate(terms: Sequence[float], r: float) -> float:
    terms = np.asarray(terms, dtype=float)
    if terms.size == 0:
        return 0.0
    if np.isinf(r):
        return float(terms.max())
    peak = terms.max()
    if peak == 0.0:
        return 0.0
    # scaled to avoid overflow of large r-th powers
    return float(peak * np.sum((terms / peak) ** r) ** (1.0 / r))


def lp_norm(f: SampledFunction, q: float, weight: Weight | None = None) -> float:
    """
    (int ||f(x)||^q gamma(x) dx)^{1/q}, or max ||f(x)|| gamma(x) for q = inf.

    The fiber norm is Euclidean for vectors and spectral for matrices; a
    frequency-side f is integrated against the frequency cells.
    """
    _check_index("q", q)
    norms = f.fiber_norms()
    if weight is None or weight.is_trivial:
        w = np.ones(f.grid.shape)
    else:
        w = weight.cell_weights(f.grid, f.coordinates())
    if np.isinf(q):
        with np.errstate(invalid="ignore"):
            return float(np.max(np.where(norms > 0, norms * w, 0.0)))
    peak = norms.max()
    if peak == 0.0:
        return 0.0
    integral = np.sum((norms / peak) ** q * w) * f.cell_volume
    return float(peak * integral ** (1.0 / q))


def besov_norm(
    f: SampledFunction,
    params: BesovParams,
    system: DyadicSystem,
    boundary_threshold: float | None = None,
) -> NormReport:
    """
    [sum_k (2^{ks} ||phi_k^ * f||_{L_{q,gamma}})^r]^{1/r} over k = 0..K_max,
    with the per-block column kept in the report.
    """
    blocks = []
    suspect = False
    for k, block in dyadic_blocks(f, system, boundary_threshold):
        blocks.append((k, 2.0 ** (k * params.s) * lp_norm(block, params.q, params.weight)))
        suspect = suspect or TRUNCATION_SUSPECT in block.flags
    value = lr_aggregate([contrib for _, contrib in blocks], params.r)
    flags = (TRUNCATION_SUSPECT,) if suspect else ()

    if value > 0 and blocks[-1][1] > UNRESOLVED_FRACTION * value:
        logger.warning(
            f"Top block carries {blocks[-1][1] / value:.2%} of the Besov norm; refine the grid"
        )
        flags += (UNRESOLVED,)
    return NormReport(value, blocks, flags)


def apply_matrix(matrix: np.ndarray, f: SampledFunction) -> SampledFunction:
    """Pointwise (A f)(x) = A f(x) for a constant d x d matrix."""
    matrix = np.asarray(getattr(matrix, "matrix", matrix))
    if f.is_matrix:
        return f.with_values(np.einsum("ij,...jk->...ik", matrix, f.values))
    return f.with_values(np.einsum("ij,...j->...i", matrix, f.values))


def weighted_derivative(u: SampledFunction, order: int, weight: Weight | None = None) -> SampledFunction:
    """d^l u/dt^l, or (gamma d/dt)^l u when a weight is given."""
    if order < 0:
        raise ResolutionError(f"Derivative order must be nonnegative, got {order}")
    if weight is None or weight.is_trivial:
        return spectral_derivative(u, order) if order else u
    gamma = weight.evaluate(u.grid.points())
    gamma = gamma.reshape(gamma.shape + (1,) * len(u.fiber_shape))
    result = u
    for _ in range(order):
        result = spectral_derivative(result, 1)
        result = result.with_values(gamma * result.values)
    return result


def besov_lions_norm(
    u: SampledFunction,
    l: int,
    A,
    params: BesovParams,
    system: DyadicSystem,
    gamma: Weight | None = None,
) -> float:
    """
    ||u||_{B(E(A))} + ||D^[l] u||_{B(E)} with the graph norm ||x|| + ||Ax|| on E(A).

    D^[l] is d^l/dt^l, or (gamma d/dt)^l when gamma is given. For l = 0 the
    derivative term coincides with the E-part of the graph norm and is not
    counted twice.
    """
    if l < 0:
        raise ResolutionError(f"Besov-Lions order must be nonnegative, got {l}")
    graph = besov_norm(u, params, system).value + besov_norm(apply_matrix(A, u), params, system).value
    if l == 0:
        return graph
    derivative = weighted_derivative(u, l, gamma)
    return graph + besov_norm(derivative, params, system).value


def sobolev_norm(f: SampledFunction, l: int, q: float, weight: Weight | None = None) -> float:
    """sum over |alpha| <= l of ||D^alpha f||_{L_{q,gamma}}."""
    total = 0.0
    for alpha in product(range(l + 1), repeat=f.grid.N):
        if sum(alpha) <= l:
            total += lp_norm(spectral_derivative(f, alpha), q, weight)
    return total


def annulus_sequence_norm(
    spectrum: SampledFunction, system: DyadicSystem, q: float, r: float, weight: Weight | None
) -> float:
    """||{g chi_{J_m}}_m||_{l_r(L_{q,gamma})} for a frequency-side g."""
    terms = []
    for m in range(system.K_max + 1):
        mask = system.annulus_mask(m, "J")
        mask = mask.reshape(mask.shape + (1,) * len(spectrum.fiber_shape))
        terms.append(lp_norm(spectrum.with_values(mask * spectrum.values), q, weight))
    return lr_aggregate(terms, r)


@dataclass
class EmbeddingReport:
    kind: str
    max_ratio: float
    min_ratio: float
    evaluated: int
    skipped: int
    excluded: int
    failed: int = 0
    bound: float | None = None
    links: dict[str, float] = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "max_ratio": self.max_ratio,
            "min_ratio": self.min_ratio,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "excluded": self.excluded,
            "failed": self.failed,
            "bound": self.bound,
            "links": self.links,
            "parameters": self.parameters,
        }


def _embedding_ratios(
    kind: str,
    system: DyadicSystem,
    params: BesovParams,
    target_q: float | None,
    target_weight: Weight | None,
) -> tuple[Callable[[SampledFunction], dict[str, tuple[float, float, bool]]], dict]:
    """
    Returns a per-member evaluator mapping link name -> (target, source, resolved)
    together with the effective parameters.
    """
    N = system.grid.N
    q, weight = params.q, params.weight

    def besov(f: SampledFunction, p: BesovParams) -> tuple[float, bool]:
        report = besov_norm(f, p, system)
        return report.value, not report.flags

    if kind == "besov_l2":
        def evaluate(f):
            source, resolved = besov(f, params)
            return {"besov_to_lq": (lp_norm(f, q, weight), source, resolved)}
        return evaluate, {"source": params.to_dict(), "target_q": _format_index(q)}

    if kind == "besov_linf":
        def evaluate(f):
            source, resolved = besov(f, params)
            return {"besov_to_linf": (lp_norm(f, np.inf, weight), source, resolved)}
        return evaluate, {"source": params.to_dict(), "target_q": "inf", "critical_s": N / q}

    if kind == "sobolev_chain":
        l = int(np.floor(params.s))
        if not l < params.s < l + 1:
            raise ResolutionError(f"The Sobolev chain needs a non-integer s, got {params.s}")

        def evaluate(f):
            source, resolved = besov(f, params)
            w_upper = sobolev_norm(f, l + 1, q, weight)
            w_lower = sobolev_norm(f, l, q, weight)
            return {
                "sobolev_to_besov": (source, w_upper, resolved),
                "besov_to_sobolev": (w_lower, source, resolved),
                "sobolev_to_lq": (lp_norm(f, q, weight), w_lower, True),
            }
        return evaluate, {"source": params.to_dict(), "l": l}

    if kind == "weighted_lp":
        if target_q is None or not target_q < q:
            raise WeightError(f"weighted_lp needs a target index below q={q}, got {target_q}")

        def evaluate(f):
            resolved = boundary_ratio(f) <= default_float("grid", "boundary_threshold")
            return {"lq_to_lp": (lp_norm(f, target_q, target_weight), lp_norm(f, q, weight), resolved)}
        return evaluate, {"q": _format_index(q), "p": target_q}

    if kind == "fourier_embedding":
        target_q = 1.0 if target_q is None else target_q

        def evaluate(f):
            source, resolved = besov(f, params)
            spectrum = forward_ft(f)
            target = annulus_sequence_norm(spectrum, system, target_q, params.r, target_weight)
            return {"fourier_annuli": (target, source, resolved)}
        return evaluate, {"source": params.to_dict(), "target_q": target_q}

    if kind == "fourier_besov_l1":
        def evaluate(f):
            source, resolved = besov(f, params)
            return {"fourier_to_l1": (lp_norm(forward_ft(f), 1.0, target_weight), source, resolved)}
        return evaluate, {"source": params.to_dict(), "critical_s": N / q}

    if kind == "fourier_besov_dual":
        p_dual = dual_exponent(q)
        dual_weight = weight.reciprocal() if weight is not None else None

        def evaluate(f):
            source, resolved = besov(f, BesovParams(0.0, q, p_dual, dual_weight))
            return {"fourier_to_dual": (lp_norm(forward_ft(f), p_dual, dual_weight), source, resolved)}
        return evaluate, {"p": _format_index(q), "p_dual": _format_index(p_dual)}

    raise ResolutionError(f"Unknown embedding kind '{kind}', expected one of {EMBEDDING_KINDS}")


def weighted_lp_bound(
    source_weight: Weight | None, target_weight: Weight | None, p: float, q: float, R: float, N: int
) -> float | None:
    """Hoelder constant (int [gamma_t^q / gamma^p]^{1/(q-p)})^{(q-p)/(pq)} over the box [-R, R]^N."""
    gamma = source_weight or Weight.constant(N)
    report = check_integrability(gamma, target_weight, p, q, R, form="embedding")
    if not report.finite:
        return None
    if np.isinf(q):
        return report.value ** (1.0 / p)
    return report.value ** ((q - p) / (p * q))


def verify_embedding(
    kind: str,
    ensemble: Sequence[SampledFunction],
    system: DyadicSystem,
    params: BesovParams | None = None,
    target_q: float | None = None,
    target_weight: Weight | None = None,
    workers: int | None = None,
) -> EmbeddingReport:
    """
    Max and min over the ensemble of (target norm) / (source norm) for the chosen
    embedding. Zero members are skipped, members whose norms are flagged as
    unresolved are excluded, and both are counted in the report.
    """
    if params is None:
        params = BesovParams()
    evaluate, parameters = _embedding_ratios(kind, system, params, target_q, target_weight)
    results = run_ensemble(evaluate, ensemble, workers)

    link_ratios: dict[str, list[float]] = {}
    skipped = excluded = failed = evaluated = 0
    for result in results:
        if not result.ok:
            failed += 1
            continue
        links = result.value
        if any(source == 0.0 for _, source, _ in links.values()):
            skipped += 1
            continue
        if not all(resolved for _, _, resolved in links.values()):
            excluded += 1
            continue
        evaluated += 1
        for name, (target, source, _) in links.items():
            link_ratios.setdefault(name, []).append(target / source)

    if excluded:
        logger.warning(f"{excluded} unresolved ensemble members excluded from '{kind}'")
    if failed:
        logger.error(f"{failed} ensemble members failed during '{kind}'")

    all_ratios = [ratio for ratios in link_ratios.values() for ratio in ratios]
    max_ratio = float(max(all_ratios)) if all_ratios else 0.0
    min_ratio = float(min(all_ratios)) if all_ratios else 0.0
    links = {name: float(max(ratios)) for name, ratios in sorted(link_ratios.items())}

    bound = None
    if kind == "weighted_lp":
        bound = weighted_lp_bound(params.weight, target_weight, target_q, params.q, system.grid.L, system.grid.N)
    logger.info(f"Embedding '{kind}': max ratio {max_ratio:.6g} over {evaluated} members")
    return EmbeddingReport(
        kind, max_ratio, min_ratio, evaluated, skipped, excluded, failed, bound, links, parameters
    )
