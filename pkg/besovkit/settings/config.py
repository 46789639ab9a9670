"""
Experiment configuration: one JSON document per CLI run, described in
schema.md next to this file. Unknown or missing keys raise ConfigError naming
the key; the builders turn the sections into library objects.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from besovkit.analysis.ensemble import gaussian_kernel_ensemble, gaussian_mixture_ensemble
from besovkit.analysis.grid import PHYSICAL, Grid, SampledFunction, read_csv
from besovkit.analysis.spaces import BesovParams
from besovkit.analysis.weights import Weight
from besovkit.errors import BesovkitError, ConfigError
from besovkit.operators.opcalc import PositiveOperator
from besovkit.settings.defaults import default_int

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

TOP_LEVEL_KEYS = {
    "schema_version",
    "command",
    "seed",
    "grid",
    "ensemble",
    "besov",
    "weight",
    "gamma",
    "gamma_tilde",
    "symbol",
    "symbols",
    "operator",
    "problem",
    "check",
    "workers",
}
SECTION_KEYS = {
    "grid": {"N", "L", "M"},
    "ensemble": {"size", "fiber_dim", "kind", "width_range"},
    "besov": {"s", "q", "r", "weight"},
    "problem": {"A", "A1", "lambda", "f", "gamma", "mu"},
    "check": {
        "p",
        "q",
        "u",
        "R",
        "form",
        "kind",
        "bound",
        "j_range",
        "lambdas",
        "h_grid",
        "mu",
        "l",
        "alpha",
        "target_q",
        "target_weight",
        "C1",
        "tolerance",
        "refine",
        "phi",
        "points",
        "K_max",
        "reference",
        "kernel",
    },
}
RHS_KINDS = ("gaussian", "zero", "samples", "ensemble")


def _parse_number(value, key: str) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return np.inf
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Key '{key}' must be a number or \"inf\", got {value!r}") from e


def parse_complex(value, key: str = "lambda") -> complex:
    """A number or a pair [re, im]."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"Key '{key}' must be a number or [re, im], got {value!r}")
        return complex(_parse_number(value[0], key), _parse_number(value[1], key))
    return complex(_parse_number(value, key))


@dataclass
class ExperimentConfig:
    command: str
    seed: int
    grid: Grid
    ensemble_size: int
    fiber_dim: int = 1
    ensemble_kind: str = "gaussian_mixture"
    width_range: tuple[float, float] | None = None
    workers: int | None = None
    sections: dict = field(default_factory=dict)
    source: Path | None = None

    def section(self, name: str) -> dict:
        return self.sections.get(name) or {}

    def check(self, key: str, default=None):
        return self.section("check").get(key, default)

    def number(self, key: str, default: float | None = None) -> float | None:
        value = self.check(key, default)
        return None if value is None else _parse_number(value, f"check.{key}")

    @property
    def besov(self) -> BesovParams:
        try:
            return BesovParams.from_config(self.section("besov"), self.grid.N)
        except BesovkitError as e:
            raise ConfigError(f"Invalid 'besov' section: {e}") from e

    def weight(self, key: str = "weight") -> Weight | None:
        spec = self.sections.get(key)
        if spec is None:
            return None
        try:
            return Weight.from_config(spec, self.grid.N)
        except (BesovkitError, KeyError, TypeError) as e:
            raise ConfigError(f"Invalid weight '{key}': {e}") from e

    def operator(self, spec=None) -> PositiveOperator:
        spec = spec if spec is not None else self.sections.get("operator", self.section("problem").get("A"))
        if spec is None:
            raise ConfigError("Missing key 'operator' (or 'problem.A')")
        try:
            return PositiveOperator.from_config(spec)
        except BesovkitError as e:
            raise ConfigError(f"Invalid operator: {e}") from e

    def ensemble(self, grid: Grid | None = None) -> list[SampledFunction]:
        grid = grid or self.grid
        if self.ensemble_kind == "gaussian_kernel":
            return gaussian_kernel_ensemble(grid, self.ensemble_size, self.seed, self.fiber_dim)
        return gaussian_mixture_ensemble(grid, self.ensemble_size, self.seed, self.fiber_dim, self.width_range)

    def rhs(self, grid: Grid | None = None, dim: int | None = None) -> SampledFunction:
        return build_rhs(self.section("problem").get("f"), grid or self.grid, dim or self.fiber_dim, self.seed)


def build_rhs(spec: dict | None, grid: Grid, dim: int, seed: int) -> SampledFunction:
    """
    {"kind": "gaussian", "width": w, "center": c, "vector": [...]} (the default),
    {"kind": "zero"}, {"kind": "samples", "path": csv} or {"kind": "ensemble"},
    the first member of the seeded ensemble.
    """
    spec = spec or {}
    kind = spec.get("kind", "gaussian")
    if kind not in RHS_KINDS:
        raise ConfigError(f"Unknown problem.f kind '{kind}', expected one of {RHS_KINDS}")
    if kind == "zero":
        return SampledFunction(grid, np.zeros(grid.shape + (dim,)))
    if kind == "samples":
        if "path" not in spec:
            raise ConfigError("Missing key 'problem.f.path'")
        return read_csv(Path(spec["path"]), grid, PHYSICAL)
    if kind == "ensemble":
        return gaussian_mixture_ensemble(grid, 1, seed, dim)[0]

    width = _parse_number(spec.get("width", 1.0), "problem.f.width")
    center = _parse_number(spec.get("center", 0.0), "problem.f.center")
    vector = np.asarray(spec.get("vector", [1.0] * dim), dtype=complex)
    if vector.shape != (dim,):
        raise ConfigError(f"problem.f.vector must have {dim} entries, got {vector.shape}")
    envelope = np.exp(-np.sum((grid.points() - center) ** 2, axis=-1) / width**2)
    return SampledFunction(grid, envelope[..., np.newaxis] * vector)


def _check_keys(name: str, section, allowed: set[str]):
    if section is None:
        return
    if not isinstance(section, dict):
        raise ConfigError(f"Key '{name}' must be an object")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"Unknown key '{name}.{key}', expected one of {sorted(allowed)}")


def parse_experiment_config(document: dict, source: Path | None = None) -> ExperimentConfig:
    if not isinstance(document, dict):
        raise ConfigError("Experiment config must be a JSON object")
    for key in document:
        if key not in TOP_LEVEL_KEYS:
            raise ConfigError(f"Unknown key '{key}', expected one of {sorted(TOP_LEVEL_KEYS)}")
    for key in ("command", "seed"):
        if key not in document:
            raise ConfigError(f"Missing mandatory key '{key}'")
    version = document.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"Key 'schema_version' must be {SCHEMA_VERSION}, got {version!r}")
    for name, allowed in SECTION_KEYS.items():
        _check_keys(name, document.get(name), allowed)

    seed = document["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"Key 'seed' must be an integer, got {seed!r}")

    grid_spec = document.get("grid") or {}
    N = int(grid_spec.get("N", 1))
    prefix = "n1" if N == 1 else "n2"
    try:
        grid = Grid(
            N,
            _parse_number(grid_spec.get("L", default_int("grid", f"{prefix}_half_width")), "grid.L"),
            int(grid_spec.get("M", default_int("grid", f"{prefix}_points"))),
        )
    except BesovkitError as e:
        raise ConfigError(f"Invalid 'grid' section: {e}") from e

    ensemble = document.get("ensemble") or {}
    kind = ensemble.get("kind", "gaussian_mixture")
    if kind not in ("gaussian_mixture", "gaussian_kernel"):
        raise ConfigError(f"Unknown ensemble.kind '{kind}', expected gaussian_mixture or gaussian_kernel")
    width_range = ensemble.get("width_range")
    if width_range is not None:
        width_range = tuple(_parse_number(w, "ensemble.width_range") for w in width_range)
        if len(width_range) != 2:
            raise ConfigError("Key 'ensemble.width_range' must be a pair [low, high]")

    workers = document.get("workers")
    return ExperimentConfig(
        command=str(document["command"]),
        seed=seed,
        grid=grid,
        ensemble_size=int(ensemble.get("size", default_int("ensemble", "size"))),
        fiber_dim=int(ensemble.get("fiber_dim", 1)),
        ensemble_kind=kind,
        width_range=width_range,
        workers=None if workers is None else int(workers),
        sections={key: value for key, value in document.items() if key not in ("command", "seed")},
        source=source,
    )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found at {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    config = parse_experiment_config(document, path)
    logger.debug(f"Loaded '{config.command}' config from {path}")
    return config
