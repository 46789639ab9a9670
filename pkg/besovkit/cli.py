"""
besovkit command line: one subcommand per checker or solver, configured by a
JSON experiment file, writing report.json, metadata.json and CSV curves.

    besovkit check-mikhlin --config scripts/experiments/configs/check_mikhlin_identity.json --out runs/mikhlin

Exit codes: 0 every declared check passed, 2 a check failed, 1 usage or config error.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np
from dotenv import load_dotenv

from besovkit import __version__
from besovkit.analysis.ensemble import gaussian_kernel_ensemble, gaussian_mixture_ensemble
from besovkit.analysis.grid import Grid, SampledFunction, write_csv
from besovkit.analysis.partition import build_dyadic_system, generator_nodes, write_blocks_csv, write_psi_csv
from besovkit.analysis.spaces import EMBEDDING_KINDS, UNRESOLVED, besov_norm, verify_embedding
from besovkit.analysis.weights import FORMS, Weight, check_condition2, check_integrability, check_submultiplicative
from besovkit.errors import BesovkitError, ConfigError
from besovkit.operators.multiplier import (
    check_block_derivative_bounds,
    check_convolution_bound,
    check_hormander,
    check_mikhlin,
    estimate_fourier_type_constant,
    estimate_M_p_gamma,
    multiplier_suite,
    verify_besov_multiplier_bound,
)
from besovkit.operators.opcalc import parse_matrix, resolvent_profile, verify_phi_positive
from besovkit.operators.symbols import SMOOTH_SUITE, Symbol, symbol_from_spec
from besovkit.settings.config import ExperimentConfig, load_experiment_config, parse_complex
from besovkit.solvers.degenerate import solve_degenerate
from besovkit.solvers.doe import (
    EllipticProblem,
    PrincipalResolvent,
    SolveReport,
    coefficient_from_config,
    contraction_estimate,
    solve_full,
    solve_principal,
)
from besovkit.solvers.estimates import (
    default_h_grid,
    refinement_study,
    sigma_bound,
    verify_coercivity,
    verify_interpolation_embedding,
    verify_perturbation_shape,
)
from besovkit.solvers.reference import solve_finite_difference

logger = logging.getLogger(__name__)

EXIT_PASSED = 0
EXIT_USAGE = 1
EXIT_FAILED = 2

RESIDUAL_LIMITS = {"solve-dop": 1e-8, "solve-full": 1e-7, "solve-degenerate": 1e-5}
# refinement drift accepted for coercivity, and max/min across levels for the interpolation constant
COERCIVITY_DRIFT = 0.02
INTERPOLATION_STABILITY = 2.0

Curve = tuple[list[str], list[list]]


@dataclass
class CommandResult:
    result: dict
    passed: bool
    curves: dict[str, Curve] = field(default_factory=dict)
    writers: list[Callable[[Path], Path]] = field(default_factory=list)


COMMANDS: dict[str, Callable[[ExperimentConfig], CommandResult]] = {}


def command(name: str):
    def register(fn: Callable[[ExperimentConfig], CommandResult]):
        COMMANDS[name] = fn
        return fn

    return register


def _symbol(config: ExperimentConfig, spec=None) -> Symbol:
    spec = spec if spec is not None else config.sections.get("symbol")
    if spec is None:
        raise ConfigError("Missing key 'symbol'")
    return symbol_from_spec(spec, config.grid, config.fiber_dim)


def _p(config: ExperimentConfig) -> float:
    return config.number("p", 2.0)


def _solution_writer(u: SampledFunction, name: str = "solution.csv") -> Callable[[Path], Path]:
    return lambda out: write_csv(u, out / name)


@command("besov-norm")
def run_besov_norm(config: ExperimentConfig) -> CommandResult:
    f = config.rhs()
    report = besov_norm(f, config.besov, build_dyadic_system(config.grid))
    return CommandResult(
        {"norm": report.to_dict(), "besov": config.besov.to_dict()},
        UNRESOLVED not in report.flags,
        {"besov_blocks": (["k", "contrib"], [[k, contrib] for k, contrib in report.blocks])},
    )


@command("check-weight")
def run_check_weight(config: ExperimentConfig) -> CommandResult:
    kind = config.check("kind", "submultiplicative")
    weight = config.weight("weight")
    if kind == "submultiplicative":
        if weight is None:
            raise ConfigError("Missing key 'weight'")
        report = check_submultiplicative(weight, config.grid, config.number("bound"))
        return CommandResult(report.to_dict(), bool(report.passed))
    if kind == "integrability":
        form = config.check("form", "embedding")
        if form not in FORMS:
            raise ConfigError(f"Unknown check.form '{form}', expected one of {FORMS}")
        gamma = config.weight("gamma") or weight or Weight.constant(config.grid.N)
        report = check_integrability(
            gamma, config.weight("gamma_tilde"), _p(config), config.number("q"), config.number("R", 1.0), form
        )
        history = [[level, value] for level, value in enumerate(report.refinement_history)]
        return CommandResult(report.to_dict(), report.finite, {"refinement_history": (["level", "value"], history)})
    if kind == "condition2":
        if weight is None:
            raise ConfigError("Missing key 'weight'")
        report = check_condition2(weight, _p(config), config.grid, config.number("R", 1.0))
        return CommandResult(report.to_dict(), report.passed)
    raise ConfigError(f"Unknown check.kind '{kind}', expected submultiplicative, integrability or condition2")


@command("check-mikhlin")
def run_check_mikhlin(config: ExperimentConfig) -> CommandResult:
    kind = config.check("kind", "mikhlin")
    p = _p(config)
    gamma = config.weight("gamma")
    system = build_dyadic_system(config.grid)
    result, passed, curves = {}, True, {}

    if config.sections.get("symbol") is not None or kind != "suite":
        m = _symbol(config)
        report = check_mikhlin(m, p, gamma, config.number("bound"), config.grid)
        result["mikhlin"] = report.to_dict()
        passed = report.passed is not False
        if kind == "besov-multiplier":
            bound = verify_besov_multiplier_bound(
                m, config.besov, config.ensemble(), system, p, gamma, config.workers
            )
            result["besov_multiplier"] = bound.to_dict()
            curves["block_constants"] = (
                ["k", "M_p_gamma"],
                [[k, c] for k, c in enumerate(bound.details["block_constants"])],
            )
    if kind == "suite":
        specs = config.sections.get("symbols", list(SMOOTH_SUITE))
        suite = multiplier_suite(
            [_symbol(config, spec) for spec in specs], config.besov, config.ensemble(), system, p, config.workers
        )
        result["suite"] = suite
        curves["multiplier_suite"] = (
            ["symbol", "mikhlin", "empirical_ratio"],
            [[row["symbol"], row["mikhlin"], row["empirical_ratio"]] for row in suite["symbols"]],
        )
    elif kind not in ("mikhlin", "besov-multiplier"):
        raise ConfigError(f"Unknown check.kind '{kind}', expected mikhlin, besov-multiplier or suite")
    return CommandResult(result, passed, curves)


@command("check-hormander")
def run_check_hormander(config: ExperimentConfig) -> CommandResult:
    m = _symbol(config)
    p = _p(config)
    gamma = config.weight("gamma")
    bound = config.number("bound")
    report = check_hormander(m, p, gamma, bound, config.grid)
    result = {"hormander": report.to_dict()}
    passed = report.passed is not False
    if config.check("u") is not None:
        K_max = int(config.check("K_max", build_dyadic_system(config.grid).K_max))
        blocks = check_block_derivative_bounds(m, p, gamma, config.number("u"), K_max, bound)
        result["block_derivative"] = blocks.to_dict()
        passed = passed and blocks.passed is not False
    return CommandResult(result, passed)


@command("estimate-mpgamma")
def run_estimate_mpgamma(config: ExperimentConfig) -> CommandResult:
    j_range = config.check("j_range")
    report = estimate_M_p_gamma(
        _symbol(config), _p(config), config.weight("gamma"), config.grid, None if j_range is None else tuple(j_range)
    )
    bound = config.number("bound")
    rows = report.details.get("scale_values", [[report.details["minimizing_scale"], report.constant]])
    return CommandResult(
        report.to_dict(),
        bound is None or report.constant <= bound,
        {"M_p_gamma_vs_scale": (["a", "norm"], rows)},
    )


def build_kernel(config: ExperimentConfig) -> SampledFunction:
    """check.kernel = {"width": w, "matrix": rows} gives exp(-|t|^2 / w^2) B; otherwise a seeded random kernel."""
    spec = config.check("kernel")
    if spec is None:
        return gaussian_kernel_ensemble(config.grid, 1, config.seed, config.fiber_dim)[0]
    matrix = parse_matrix(spec.get("matrix", np.eye(config.fiber_dim).tolist()))
    if matrix.shape != (config.fiber_dim, config.fiber_dim):
        raise ConfigError(f"check.kernel.matrix must be {config.fiber_dim} x {config.fiber_dim}, got {matrix.shape}")
    width = float(spec.get("width", 1.0))
    envelope = np.exp(-np.sum(config.grid.points() ** 2, axis=-1) / width**2)
    return SampledFunction(config.grid, envelope[..., np.newaxis, np.newaxis] * matrix)


@command("check-convolution")
def run_check_convolution(config: ExperimentConfig) -> CommandResult:
    dim = config.fiber_dim
    kernel = build_kernel(config)
    ensemble = gaussian_mixture_ensemble(config.grid, config.ensemble_size, config.seed + 1, dim, config.width_range)
    report = check_convolution_bound(
        kernel,
        config.weight("gamma_tilde"),
        config.number("q", 2.0),
        ensemble,
        config.number("C1"),
        config.number("tolerance", 1e-6),
        config.workers,
    )
    return CommandResult(report.to_dict(), bool(report.passed))


@command("check-fourier-type")
def run_check_fourier_type(config: ExperimentConfig) -> CommandResult:
    report = estimate_fourier_type_constant(_p(config), config.weight("gamma"), config.ensemble(), config.workers)
    bound = config.number("bound")
    return CommandResult(report.to_dict(), bound is None or report.constant <= bound * (1.0 + 1e-9))


@command("verify-embedding")
def run_verify_embedding(config: ExperimentConfig) -> CommandResult:
    kind = config.check("kind")
    if kind not in EMBEDDING_KINDS:
        raise ConfigError(f"Key 'check.kind' must be one of {EMBEDDING_KINDS}, got {kind!r}")
    target_weight = config.check("target_weight")
    report = verify_embedding(
        kind,
        config.ensemble(),
        build_dyadic_system(config.grid),
        config.besov,
        config.number("target_q"),
        Weight.from_config(target_weight, config.grid.N) if target_weight else None,
        config.workers,
    )
    bound = config.number("bound", report.bound)
    passed = report.evaluated > 0 and (bound is None or report.max_ratio <= bound * (1.0 + 1e-9))
    links = [[name, value] for name, value in report.links.items()]
    return CommandResult(report.to_dict(), passed, {"embedding_links": (["link", "max_ratio"], links)})


def build_problem(config: ExperimentConfig, grid: Grid | None = None) -> EllipticProblem:
    grid = grid or config.grid
    section = config.section("problem")
    A = config.operator(section.get("A", config.sections.get("operator")))
    gamma = section.get("gamma")
    try:
        return EllipticProblem(
            A=A,
            f=config.rhs(grid, A.dim),
            lam=parse_complex(section.get("lambda", 1.0)),
            A1=coefficient_from_config(section.get("A1"), grid, A.dim),
            gamma=Weight.from_config(gamma, 1) if gamma else None,
            mu=float(section.get("mu", 0.25)),
            params=config.besov,
        )
    except BesovkitError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Invalid 'problem' section: {e}") from e


def _solve_result(name: str, config: ExperimentConfig, problem: EllipticProblem, report: SolveReport) -> CommandResult:
    result = {"solve": report.to_dict()}
    passed = report.converged and report.residual <= RESIDUAL_LIMITS[name]
    if config.check("reference") and problem.gamma is None:
        reference = solve_finite_difference(problem.with_lam(report.lam))
        difference = (report.u - reference).values
        result["finite_difference_relative_l2"] = float(
            np.linalg.norm(difference) / max(np.linalg.norm(reference.values), np.finfo(float).tiny)
        )
    return CommandResult(result, passed, writers=[_solution_writer(report.u)])


@command("solve-dop")
def run_solve_dop(config: ExperimentConfig) -> CommandResult:
    problem = build_problem(config)
    report = solve_principal(problem, build_dyadic_system(problem.grid))
    return _solve_result("solve-dop", config, problem, report)


@command("solve-full")
def run_solve_full(config: ExperimentConfig) -> CommandResult:
    problem = build_problem(config)
    system = build_dyadic_system(problem.grid)
    report = solve_full(problem, system)
    outcome = _solve_result("solve-full", config, problem, report)
    lambdas = config.check("lambdas")
    if lambdas:
        rows = []
        for lam in sorted((parse_complex(value) for value in lambdas), key=abs):
            resolvent = PrincipalResolvent(problem.A, lam, problem.grid)
            rows.append([abs(lam), contraction_estimate(problem.with_lam(lam), resolvent, system)])
        outcome.result["contraction_sweep"] = rows
        outcome.curves["contraction_vs_lambda"] = (["lambda", "q_hat"], rows)
    return outcome


@command("solve-degenerate")
def run_solve_degenerate(config: ExperimentConfig) -> CommandResult:
    problem = build_problem(config)
    report = solve_degenerate(problem, build_dyadic_system(problem.grid))
    return _solve_result("solve-degenerate", config, problem, report)


def _lambdas(config: ExperimentConfig, problem: EllipticProblem) -> list[complex]:
    values = config.check("lambdas")
    return [problem.lam] if not values else [parse_complex(value) for value in values]


@command("verify-coercivity")
def run_verify_coercivity(config: ExperimentConfig) -> CommandResult:
    problem = build_problem(config)
    grid = problem.grid
    dim = problem.A.dim
    system = build_dyadic_system(grid)
    ensemble = gaussian_mixture_ensemble(grid, config.ensemble_size, config.seed, dim, config.width_range)
    lambdas = _lambdas(config, problem)

    report = verify_coercivity(problem, ensemble, system, lambdas, config.workers)
    result = {"coercivity": report.to_dict()}
    passed = report.passed
    header = ["lambda", "C_hat", "C_hat_A1_derivative", "C_hat_lambda_weighted"]
    curves = {"coercivity_vs_lambda": (header, [[row[key] for key in header] for row in report.curve])}

    sigma = sigma_bound(problem.A, lambdas, grid)
    result["sigma_bound"] = sigma.to_dict()
    passed = passed and sigma.passed

    if problem.coefficient is not None and len(lambdas) >= 2:
        shape = verify_perturbation_shape(problem, ensemble, system, lambdas, workers=config.workers)
        result["perturbation_shape"] = shape.to_dict()
        curves["perturbation_vs_lambda"] = (["lambda", "rho"], [[row["lambda"], row["rho"]] for row in shape.curve])
        passed = passed and shape.passed

    if config.check("refine"):

        def evaluate(refined: Grid) -> float:
            members = gaussian_mixture_ensemble(refined, config.ensemble_size, config.seed, dim, config.width_range)
            refined_problem = build_problem(config, refined)
            return verify_coercivity(
                refined_problem, members, build_dyadic_system(refined), [problem.lam], config.workers
            ).C_hat

        rows = refinement_study(evaluate, grid)
        result["refinement"] = rows
        curves["coercivity_refinement"] = (["M", "C_hat"], [[row["M"], row["value"]] for row in rows])
        passed = passed and rows[-1]["drift"] < COERCIVITY_DRIFT
    return CommandResult(result, passed, curves)


def _h_grid(config: ExperimentConfig, density: int = 1) -> np.ndarray:
    spec = config.check("h_grid")
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    spec = spec or {}
    return default_h_grid(
        float(spec.get("h0", 1.0)), int(spec.get("decades", 4)), int(spec.get("per_decade", 10)) * density
    )


@command("verify-interpolation")
def run_verify_interpolation(config: ExperimentConfig) -> CommandResult:
    A = config.operator()
    alpha = config.check("alpha", 0)
    l = int(config.check("l", 1))
    mu = config.number("mu", 0.25)

    def interpolate(grid: Grid, density: int = 1):
        members = gaussian_mixture_ensemble(grid, config.ensemble_size, config.seed, A.dim, config.width_range)
        return verify_interpolation_embedding(
            members, A, alpha, l, mu, build_dyadic_system(grid), _h_grid(config, density), config.besov, config.workers
        )

    report = interpolate(config.grid)
    result = {"interpolation": report.to_dict()}
    passed = report.passed
    rows = [[row["P"] / row["Q"], row["h_star"], row["h_min"], row["ratio"]] for row in report.members]
    curves = {"interpolation_members": (["P_over_Q", "h_star", "h_min", "ratio"], rows)}

    if config.check("refine"):
        levels = [
            {"level": "base", "C_mu": report.C_mu},
            {"level": "h_grid_doubled", "C_mu": interpolate(config.grid, 2).C_mu},
            {"level": "grid_refined", "C_mu": interpolate(config.grid.refined()).C_mu},
        ]
        values = [row["C_mu"] for row in levels]
        stability = max(values) / min(values) if min(values) > 0 else np.inf
        result["refinement"] = {"levels": levels, "stability": stability}
        passed = passed and stability < INTERPOLATION_STABILITY
    return CommandResult(result, passed, curves)


@command("check-sector")
def run_check_sector(config: ExperimentConfig) -> CommandResult:
    A = config.operator()
    report = verify_phi_positive(A, config.number("phi"))
    rows = []
    if report.samples.size:
        profile = resolvent_profile(A, report.samples)
        rows = [[z.real, z.imag, value] for z, value in zip(report.samples, profile)]
    return CommandResult(
        report.to_dict(), report.passed, {"resolvent_profile": (["re_lambda", "im_lambda", "value"], rows)}
    )


@command("export-partition")
def run_export_partition(config: ExperimentConfig) -> CommandResult:
    system = build_dyadic_system(config.grid)
    residual = system.partition_residual()
    result = {"K_max": system.K_max, "partition_residual": residual, "generator_nodes": generator_nodes(config.grid)}
    points = int(config.check("points", 1025))
    writers = [
        lambda out: write_psi_csv(out / "psi.csv", points),
        lambda out: write_blocks_csv(system, out / "blocks.csv"),
    ]
    return CommandResult(result, residual <= 1e-12, writers=writers)


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [to_jsonable(float(value.real)), to_jsonable(float(value.imag))]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isfinite(value):
            return value
        return "nan" if np.isnan(value) else ("inf" if value > 0 else "-inf")
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    return value


def _csv_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return repr(complex(value))
    return str(value)


def emit_plot_data(curves: dict[str, Curve], out: str | Path) -> list[Path]:
    """One CSV per curve, header first; an empty curve still gets its header."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, (header, rows) in sorted(curves.items()):
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as csvfile:
            csv_writer = csv.writer(csvfile)
            csv_writer.writerow(header)
            for row in rows:
                csv_writer.writerow([_csv_cell(value) for value in row])
        paths.append(path)
    return paths


def build_report(config: ExperimentConfig, outcome: CommandResult) -> dict:
    grid = config.grid
    return to_jsonable(
        {
            "command": config.command,
            "version": __version__,
            "seed": config.seed,
            "grid": {"N": grid.N, "L": grid.L, "M": grid.M},
            "config": config.sections,
            "passed": outcome.passed,
            "result": outcome.result,
        }
    )


def run(config: ExperimentConfig, out: str | Path) -> int:
    """Execute one experiment and write its files; returns the exit code."""
    out = Path(out)
    runner = COMMANDS.get(config.command)
    if runner is None:
        raise ConfigError(f"Unknown command '{config.command}', expected one of {sorted(COMMANDS)}")

    try:
        outcome = runner(config)
    except ConfigError:
        raise
    except BesovkitError as e:
        logger.error(f"{config.command} failed: {type(e).__name__}: {e}")
        outcome = CommandResult({"error": f"{type(e).__name__}: {e}"}, False)

    out.mkdir(parents=True, exist_ok=True)
    report = build_report(config, outcome)
    with open(out / "report.json", "w", encoding="utf-8") as f:
        f.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    metadata = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config_path": None if config.source is None else str(config.source),
        "version": __version__,
    }
    with open(out / "metadata.json", "w", encoding="utf-8") as f:
        f.write(json.dumps(metadata, indent=2, sort_keys=True) + "\n")
    emit_plot_data(outcome.curves, out)
    for writer in outcome.writers:
        writer(out)

    logger.info(f"Report written to {out / 'report.json'} (passed={outcome.passed})")
    return EXIT_PASSED if outcome.passed else EXIT_FAILED


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configure_logging():
    level = os.getenv("BESOVKIT_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    # worker start/stop messages for every ensemble
    logging.getLogger("service.ensemble").setLevel(logging.WARNING)


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    parser = _ArgumentParser(
        prog="besovkit", description="Run a weighted Besov analysis experiment from a JSON config"
    )
    parser.add_argument("command", type=str, help=f"One of: {', '.join(sorted(COMMANDS))}")
    parser.add_argument("--config", type=Path, required=True, help="Path to the experiment JSON config")
    parser.add_argument("--out", type=Path, required=True, help="Output directory for report and CSV files")
    parser.add_argument("--workers", type=int, default=None, help="Ensemble worker threads (overrides BESOVKIT_WORKERS)")
    args = parser.parse_args(argv)
    _configure_logging()

    if args.command not in COMMANDS:
        print(f"Unknown command '{args.command}'. Valid subcommands:", file=sys.stderr)
        for name in sorted(COMMANDS):
            print(f"  {name}", file=sys.stderr)
        return EXIT_USAGE

    try:
        config = load_experiment_config(args.config)
        if config.command != args.command:
            raise ConfigError(f"Key 'command' is '{config.command}' but the subcommand is '{args.command}'")
        if args.workers is not None:
            config.workers = args.workers
        return run(config, args.out)
    except ConfigError as e:
        logger.error(f"Config error: {e}")
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
