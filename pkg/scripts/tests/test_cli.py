import csv
import json

import pytest

from besovkit.analysis.grid import Grid
from besovkit.analysis.partition import build_dyadic_system
from besovkit.analysis.spaces import BesovParams, besov_norm
from besovkit.cli import EXIT_FAILED, EXIT_PASSED, EXIT_USAGE, emit_plot_data, main
from besovkit.settings.config import build_rhs

SMALL_GRID = {"N": 1, "L": 32, "M": 1024}


def _run(tmp_path, document, command=None, name="run"):
    config_path = tmp_path / f"{name}.json"
    config_path.write_text(json.dumps(document), encoding="utf-8")
    out = tmp_path / name
    code = main([command or document["command"], "--config", str(config_path), "--out", str(out)])
    return code, out


def _report(out):
    with open(out / "report.json", encoding="utf-8") as f:
        return json.load(f)


def _read_csv(path):
    with open(path, newline="") as csvfile:
        return list(csv.reader(csvfile))


def test_besov_norm_command(tmp_path):
    document = {"command": "besov-norm", "seed": 0, "grid": SMALL_GRID, "besov": {"s": 1}, "problem": {"f": {"width": 0.5}}}
    code, out = _run(tmp_path, document)
    assert code == EXIT_PASSED

    report = _report(out)
    assert report["passed"] is True
    assert report["command"] == "besov-norm"
    assert report["grid"] == {"N": 1, "L": 32.0, "M": 1024}

    grid = Grid(1, 32, 1024)
    expected = besov_norm(build_rhs({"width": 0.5}, grid, 1, 0), BesovParams(s=1), build_dyadic_system(grid))
    rows = _read_csv(out / "besov_blocks.csv")
    assert rows[0] == ["k", "contrib"]
    assert [(int(k), float(c)) for k, c in rows[1:]] == expected.blocks
    assert (out / "metadata.json").exists()


def test_report_is_deterministic(tmp_path):
    document = {"command": "besov-norm", "seed": 2, "grid": SMALL_GRID, "problem": {"f": {"kind": "ensemble"}}}
    _, first = _run(tmp_path, document, name="first")
    _, second = _run(tmp_path, document, name="second")
    assert (first / "report.json").read_text() == (second / "report.json").read_text()


def test_export_partition(tmp_path):
    code, out = _run(tmp_path, {"command": "export-partition", "seed": 0, "grid": SMALL_GRID, "check": {"points": 33}})
    assert code == EXIT_PASSED
    report = _report(out)
    assert report["result"]["K_max"] == 5
    assert report["result"]["partition_residual"] <= 1e-12
    assert len(_read_csv(out / "psi.csv")) == 34
    assert _read_csv(out / "blocks.csv")[0][-1] == "phi_5"


def test_solve_dop_writes_solution(tmp_path):
    document = {
        "command": "solve-dop",
        "seed": 0,
        "grid": SMALL_GRID,
        "problem": {"A": {"matrix": [[2, 1], [0, 3]]}, "lambda": [1, 1], "f": {"vector": [1, 0]}},
    }
    code, out = _run(tmp_path, document)
    assert code == EXIT_PASSED
    assert _report(out)["result"]["solve"]["residual"] <= 1e-8
    header = _read_csv(out / "solution.csv")[0]
    assert header == ["i0", "x0", "re_0", "im_0", "re_1", "im_1"]


def test_failed_check_exits_with_two(tmp_path):
    document = {
        "command": "check-fourier-type",
        "seed": 0,
        "grid": SMALL_GRID,
        "ensemble": {"size": 3},
        "check": {"p": 2, "bound": 1.0},
    }
    code, out = _run(tmp_path, document)
    assert code == EXIT_FAILED
    assert _report(out)["passed"] is False


def test_library_error_is_reported(tmp_path):
    document = {
        "command": "solve-degenerate",
        "seed": 0,
        "grid": SMALL_GRID,
        "problem": {"A": {"matrix": [[1]]}, "gamma": {"kind": "power", "params": {"alpha": 1}}},
    }
    code, out = _run(tmp_path, document)
    assert code == EXIT_FAILED
    assert _report(out)["result"]["error"].startswith("WeightError")


def test_config_errors_exit_with_one(tmp_path):
    code, out = _run(tmp_path, {"command": "besov-norm", "seed": 0, "colour": "red"})
    assert code == EXIT_USAGE
    assert not (out / "report.json").exists()

    code, _ = _run(tmp_path, {"command": "besov-norm", "seed": 0, "grid": SMALL_GRID}, command="check-sector", name="mismatch")
    assert code == EXIT_USAGE

    code, _ = _run(tmp_path, {"command": "check-sector", "seed": 0, "grid": SMALL_GRID}, name="no_operator")
    assert code == EXIT_USAGE


def test_unknown_subcommand(tmp_path, capsys):
    code, _ = _run(tmp_path, {"command": "besov-norm", "seed": 0}, command="frobnicate")
    assert code == EXIT_USAGE
    assert "besov-norm" in capsys.readouterr().err


def test_missing_arguments():
    with pytest.raises(SystemExit) as e:
        main(["besov-norm"])
    assert e.value.code == EXIT_USAGE


def test_empty_curve_keeps_header(tmp_path):
    (path,) = emit_plot_data({"resolvent_profile": (["re_lambda", "im_lambda", "value"], [])}, tmp_path)
    assert path.read_text().strip() == "re_lambda,im_lambda,value"
