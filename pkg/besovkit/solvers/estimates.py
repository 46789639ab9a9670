"""
Ensemble estimates around the elliptic solvers: the coercive bound, the
interpolation inequality for intermediate derivatives, the decay of the
first-order perturbation relative to the principal part, and the bound of the
symbol xi^2 (A + xi^2 + lambda)^{-1}.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import nnls

from besovkit.analysis.grid import Grid, SampledFunction, spectral_derivative
from besovkit.analysis.partition import DyadicSystem
from besovkit.analysis.spaces import BesovParams, apply_matrix, besov_lions_norm, besov_norm
from besovkit.errors import ConfigError
from besovkit.operators.opcalc import PositiveOperator, fractional_power, verify_phi_positive
from besovkit.operators.symbols import resolvent_sigma
from besovkit.services.base import run_ensemble
from besovkit.solvers.doe import EllipticProblem, apply_perturbation, apply_principal, solve_full

logger = logging.getLogger(__name__)

# largest max/min ratio of a constant across a sweep that still counts as uniform
UNIFORMITY_SPREAD = 2.0
SLOPE_TOLERANCE = 0.05


def _is_zero(f: SampledFunction) -> bool:
    return not np.any(f.values)


@dataclass
class CoercivityReport:
    C_hat: float
    C_hat_derivative: float
    C_hat_weighted: float
    spread: float
    evaluated: int
    skipped: int
    failed: int
    curve: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        finite = np.isfinite(self.C_hat) and self.evaluated > 0
        return bool(finite and self.spread < UNIFORMITY_SPREAD)

    def to_dict(self) -> dict:
        return {
            "C_hat": self.C_hat,
            "C_hat_A1_derivative": self.C_hat_derivative,
            "C_hat_lambda_weighted": self.C_hat_weighted,
            "spread": self.spread,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "failed": self.failed,
            "passed": self.passed,
            "curve": self.curve,
        }


def verify_coercivity(
    problem: EllipticProblem,
    ensemble: Sequence[SampledFunction],
    system: DyadicSystem,
    lambdas: Sequence[complex] | None = None,
    workers: int | None = None,
) -> CoercivityReport:
    """
    C_hat = max over the ensemble of (||u''|| + ||A_1 u|| + ||A u||) / ||f||
    at fixed lambda, for every lambda of the sweep.

    Alongside it: the same ratio with ||A_1 u'|| in place of ||A_1 u||, and the
    lambda-weighted ratio that adds |lambda| ||u||, whose spread over the sweep
    decides uniformity.
    """
    lambdas = [problem.lam] if lambdas is None else [complex(lam) for lam in lambdas]
    members = [f for f in ensemble if not _is_zero(f)]
    skipped = len(ensemble) - len(members)
    if skipped:
        logger.info(f"Skipping {skipped} zero right-hand sides")

    curve = []
    failed = 0
    for lam in sorted(lambdas, key=abs):

        def ratios(f: SampledFunction, lam=lam) -> tuple[float, float, float]:
            report = solve_full(problem.with_rhs(f).with_lam(lam), system, escalate=False)
            terms = report.details["norms"]
            base = terms["u_second"] + terms["A_u"]
            return (
                (base + terms["A1_u"]) / terms["f"],
                (base + terms["A1_u_prime"]) / terms["f"],
                (base + terms["A1_u"] + abs(lam) * terms["u"]) / terms["f"],
            )

        results = run_ensemble(ratios, members, workers)
        values = np.array([r.value for r in results if r.ok]).reshape(-1, 3)
        failed += sum(not r.ok for r in results)
        peak = values.max(axis=0) if values.size else np.full(3, np.nan)
        curve.append(
            {
                "lambda": lam.real if lam.imag == 0 else abs(lam),
                "C_hat": float(peak[0]),
                "C_hat_A1_derivative": float(peak[1]),
                "C_hat_lambda_weighted": float(peak[2]),
            }
        )
        logger.info(f"Coercivity at lambda={lam}: C_hat={peak[0]:.4g}, weighted {peak[2]:.4g}")

    C_hat = max((row["C_hat"] for row in curve), default=np.nan)
    weighted = np.array([row["C_hat_lambda_weighted"] for row in curve])
    spread = float(weighted.max() / weighted.min()) if weighted.size and weighted.min() > 0 else np.inf
    return CoercivityReport(
        C_hat=float(C_hat),
        C_hat_derivative=float(max(row["C_hat_A1_derivative"] for row in curve)),
        C_hat_weighted=float(weighted.max()) if weighted.size else np.nan,
        spread=spread,
        evaluated=len(members) * len(lambdas) - failed,
        skipped=skipped,
        failed=failed,
        curve=curve,
    )


@dataclass
class InterpolationReport:
    C_mu: float
    x: float
    theta: float
    slope: float | None
    evaluated: int
    skipped: int
    clipped: int
    members: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.C_mu) and self.evaluated > 0)

    def to_dict(self) -> dict:
        return {
            "C_mu": self.C_mu,
            "x": self.x,
            "theta": self.theta,
            "h_star_slope": self.slope,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "clipped": self.clipped,
            "passed": self.passed,
            "members": self.members,
        }


def default_h_grid(h0: float = 1.0, decades: int = 4, per_decade: int = 10) -> np.ndarray:
    return h0 * np.logspace(-decades, 0, decades * per_decade + 1)


def verify_interpolation_embedding(
    ensemble: Sequence[SampledFunction],
    A: PositiveOperator,
    alpha: int | Sequence[int],
    l: int,
    mu: float,
    system: DyadicSystem,
    h_grid: np.ndarray | None = None,
    params: BesovParams | None = None,
    workers: int | None = None,
) -> InterpolationReport:
    """
    C_mu = max_u ||A^{1-x-mu} D^alpha u||_B / min_h [h^mu P(u) + h^{-(1-mu)} Q(u)]
    with P the Besov-Lions norm of order l and Q = ||u||_B, x = |alpha| / l.

    The balance point h* = ((1 - mu) / mu) Q / P minimizes the bracket over
    h > 0; its log-log slope against P / Q is reported for the members whose
    h* falls inside the sampled range.
    """
    order = int(np.sum(alpha))
    if l < 1:
        raise ConfigError(f"l must be a positive integer, got {l}")
    x = order / l
    if x > 1:
        raise ConfigError(f"|alpha| / l = {x:.3g} exceeds 1")
    if not 0 < mu <= 1 - x:
        raise ConfigError(f"mu must lie in (0, {1 - x:.3g}], got {mu}")
    params = params or BesovParams()
    h_grid = default_h_grid() if h_grid is None else np.sort(np.asarray(h_grid, dtype=float))
    theta = 1.0 - x - mu
    A_theta = fractional_power(A, theta)

    members = [u for u in ensemble if not _is_zero(u)]
    skipped = len(ensemble) - len(members)

    def evaluate(u: SampledFunction) -> dict:
        derivative = spectral_derivative(u, alpha)
        lhs = besov_norm(apply_matrix(A_theta, derivative), params, system).value
        P = besov_lions_norm(u, l, A, params, system)
        Q = besov_norm(u, params, system).value
        rhs = h_grid**mu * P + h_grid ** (mu - 1.0) * Q
        best = int(np.argmin(rhs))
        return {
            "lhs": lhs,
            "P": P,
            "Q": Q,
            "min_rhs": float(rhs[best]),
            "h_min": float(h_grid[best]),
            "h_star": (1.0 - mu) / mu * Q / P,
            "ratio": lhs / float(rhs[best]),
        }

    results = [r.value for r in run_ensemble(evaluate, members, workers) if r.ok]
    C_mu = max((row["ratio"] for row in results), default=np.nan)
    inside = [row for row in results if h_grid[0] <= row["h_star"] <= h_grid[-1]]
    slope = None
    if len(inside) >= 2:
        balance = np.log([row["P"] / row["Q"] for row in inside])
        if np.ptp(balance) > 0:
            slope = float(np.polyfit(balance, np.log([row["h_star"] for row in inside]), 1)[0])
    logger.info(f"Interpolation constant C_mu={C_mu:.4g} over {len(results)} members (theta={theta:.3g})")
    return InterpolationReport(
        C_mu=float(C_mu),
        x=x,
        theta=theta,
        slope=slope,
        evaluated=len(results),
        skipped=skipped,
        clipped=len(results) - len(inside),
        members=results,
    )


@dataclass
class PerturbationReport:
    mu: float
    c1: float
    c2: float
    slope: float
    curve: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        if self.slope == -np.inf:
            return True
        return bool(np.isfinite(self.slope) and self.slope <= -self.mu + SLOPE_TOLERANCE)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "c1": self.c1,
            "c2": self.c2,
            "slope": self.slope,
            "passed": self.passed,
            "curve": self.curve,
        }


def verify_perturbation_shape(
    problem: EllipticProblem,
    ensemble: Sequence[SampledFunction],
    system: DyadicSystem,
    lambdas: Sequence[float],
    h_grid: np.ndarray | None = None,
    workers: int | None = None,
) -> PerturbationReport:
    """
    rho(lambda) = max_u ||A_1 u'||_B / ||(L_0 + lambda) u||_B over the ensemble,
    and nonnegative c1, c2 with rho(lambda) <= c1 h^mu + c2 h^{-(1-mu)} / lambda
    on every (h, lambda) of the sweep.
    """
    mu = problem.mu
    lambdas = sorted(float(abs(lam)) for lam in lambdas)
    if len(lambdas) < 2:
        raise ConfigError("The perturbation sweep needs at least two values of lambda")
    h_grid = default_h_grid() if h_grid is None else np.asarray(h_grid, dtype=float)
    members = [u for u in ensemble if not _is_zero(u)]
    params = problem.params

    curve = []
    for lam in lambdas:

        def ratio(u: SampledFunction, lam=lam) -> float:
            perturbed = besov_norm(apply_perturbation(problem, u), params, system).value
            principal = besov_norm(apply_principal(problem.A, lam, u), params, system).value
            return perturbed / principal

        values = [r.value for r in run_ensemble(ratio, members, workers) if r.ok]
        curve.append({"lambda": lam, "rho": max(values, default=0.0)})

    rho = np.array([row["rho"] for row in curve])
    h, lam = np.meshgrid(h_grid, lambdas, indexing="ij")
    design = np.stack([(h**mu).ravel(), (h ** (mu - 1.0) / lam).ravel()], axis=-1)
    target = np.broadcast_to(rho, h.shape).ravel()
    (c1, c2), _ = nnls(design, target)
    bound = design @ np.array([c1, c2])
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.max(np.where(bound > 0, target / bound, np.where(target > 0, np.inf, 0.0)))
    c1, c2 = c1 * max(scale, 1.0), c2 * max(scale, 1.0)

    if np.all(rho > 0):
        slope = float(np.polyfit(np.log(lambdas), np.log(rho), 1)[0])
    else:
        # A_1 = 0: the perturbation vanishes at every lambda
        slope = -np.inf
    logger.info(f"Perturbation ratio slope {slope:.3g} in log lambda, c1={c1:.3g}, c2={c2:.3g}")
    return PerturbationReport(mu, float(c1), float(c2), slope, curve)


@dataclass
class SigmaReport:
    M_hat: float
    sup_norms: list[dict]

    @property
    def passed(self) -> bool:
        return all(row["sup_norm"] <= self.M_hat + 1.0 for row in self.sup_norms)

    def to_dict(self) -> dict:
        return {"M_hat": self.M_hat, "sup_norms": self.sup_norms, "passed": self.passed}


def sigma_bound(A: PositiveOperator, lambdas: Sequence[complex], grid: Grid, M_hat: float | None = None) -> SigmaReport:
    """sup_xi ||xi^2 (A + xi^2 + lambda)^{-1}|| on the frequency nodes, against M_hat + 1."""
    if M_hat is None:
        M_hat = verify_phi_positive(A).M_hat
    rows = []
    for lam in lambdas:
        values = resolvent_sigma(A, complex(lam), grid.N).on_grid(grid)
        sup = float(np.linalg.norm(values, ord=2, axis=(-2, -1)).max())
        rows.append({"lambda": [complex(lam).real, complex(lam).imag], "sup_norm": sup})
    return SigmaReport(float(M_hat), rows)


def refinement_study(evaluate: Callable[[Grid], float], grid: Grid, levels: int = 2) -> list[dict]:
    """evaluate on grid, grid.refined(), ... and the relative drift between consecutive levels."""
    rows = []
    previous = None
    for level in range(levels):
        current = grid.refined(2**level) if level else grid
        value = float(evaluate(current))
        drift = None if previous is None else abs(value - previous) / abs(previous)
        rows.append({"M": current.M, "value": value, "drift": drift})
        logger.info(f"Refinement level M={current.M}: {value:.6g}" + ("" if drift is None else f" (drift {drift:.2%})"))
        previous = value
    return rows
