import json
from pathlib import Path

import numpy as np
import pytest

from besovkit.analysis.grid import write_csv
from besovkit.errors import ConfigError
from besovkit.settings.config import build_rhs, load_experiment_config, parse_complex, parse_experiment_config
from besovkit.settings.defaults import default_float, default_int

CONFIG_DIR = Path(__file__).parent.parent / "experiments" / "configs"


def test_defaults_are_loaded():
    assert default_int("grid", "n1_points") == 4096
    assert default_float("solver", "contraction_target") == 0.9
    assert default_int("ensemble", "size") == 50


def test_minimal_document_uses_defaults():
    config = parse_experiment_config({"command": "norm", "seed": 3})
    assert config.grid.N == 1
    assert config.grid.L == 32
    assert config.grid.M == 4096
    assert config.ensemble_size == 50
    assert config.besov.s == 0
    assert config.weight() is None


def test_plane_grid_defaults():
    config = parse_experiment_config({"command": "norm", "seed": 0, "grid": {"N": 2}})
    assert (config.grid.L, config.grid.M) == (16, 256)


@pytest.mark.parametrize(
    "document, message",
    [
        ({"command": "norm", "seed": 0, "colour": 1}, "colour"),
        ({"command": "norm"}, "seed"),
        ({"seed": 0}, "command"),
        ({"command": "norm", "seed": 1.5}, "seed"),
        ({"command": "norm", "seed": 0, "schema_version": 2}, "schema_version"),
        ({"command": "norm", "seed": 0, "grid": {"N": 1, "h": 2}}, "grid.h"),
        ({"command": "norm", "seed": 0, "check": {"nonsense": 1}}, "check.nonsense"),
        ({"command": "norm", "seed": 0, "grid": {"M": 1000}}, "grid"),
        ({"command": "norm", "seed": 0, "ensemble": {"kind": "uniform"}}, "ensemble.kind"),
    ],
)
def test_invalid_documents(document, message):
    with pytest.raises(ConfigError, match=message):
        parse_experiment_config(document)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_experiment_config(tmp_path / "absent.json")


def test_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_experiment_config(path)


def test_parse_complex():
    assert parse_complex(2) == 2 + 0j
    assert parse_complex([1, -3]) == 1 - 3j
    assert parse_complex("inf") == complex(np.inf)
    with pytest.raises(ConfigError):
        parse_complex([1, 2, 3])


def test_operator_and_weight_sections():
    config = parse_experiment_config(
        {
            "command": "solve-dop",
            "seed": 0,
            "problem": {"A": {"matrix": [[1, 0], [0, 4]]}},
            "gamma": {"kind": "power", "params": {"alpha": 1}},
            "weight": {"kind": "power", "params": {}},
        }
    )
    assert config.operator().dim == 2
    assert config.weight("gamma").kind == "power"
    with pytest.raises(ConfigError, match="weight"):
        config.weight()
    with pytest.raises(ConfigError):
        parse_experiment_config({"command": "sector", "seed": 0}).operator()


def test_ensemble_is_seeded():
    config = parse_experiment_config({"command": "norm", "seed": 7, "grid": {"M": 512}, "ensemble": {"size": 3}})
    first, second = config.ensemble(), config.ensemble()
    assert len(first) == 3
    assert all(np.array_equal(a.values, b.values) for a, b in zip(first, second))


def test_build_rhs_kinds(small_grid, tmp_path):
    gaussian = build_rhs({"width": 2.0, "vector": [1, 1j]}, small_grid, 2, 0)
    assert gaussian.fiber_dim == 2
    assert gaussian.values[small_grid.M // 2, 1] == 1j

    assert not np.any(build_rhs({"kind": "zero"}, small_grid, 3, 0).values)
    assert build_rhs({"kind": "ensemble"}, small_grid, 1, 5).fiber_dim == 1

    path = write_csv(gaussian, tmp_path / "f.csv")
    loaded = build_rhs({"kind": "samples", "path": str(path)}, small_grid, 2, 0)
    assert np.allclose(loaded.values, gaussian.values)

    with pytest.raises(ConfigError):
        build_rhs({"kind": "samples"}, small_grid, 1, 0)
    with pytest.raises(ConfigError):
        build_rhs({"kind": "delta"}, small_grid, 1, 0)
    with pytest.raises(ConfigError):
        build_rhs({"vector": [1, 2]}, small_grid, 1, 0)


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    with open(path, encoding="utf-8") as f:
        document = json.load(f)
    config = parse_experiment_config(document, path)
    assert config.command == document["command"]
