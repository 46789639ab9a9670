import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from dotenv import load_dotenv

# Add besovkit to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from besovkit.analysis.grid import Grid
from besovkit.cli import COMMANDS, to_jsonable
from besovkit.errors import ConfigError
from besovkit.settings.config import load_experiment_config
from besovkit.solvers.estimates import refinement_study


def lookup(result: dict, key: str) -> float:
    """Follow a dotted path such as 'solve.residual' or 'coercivity.C_hat' into a command result."""
    value = result
    for part in key.split("."):
        if isinstance(value, list):
            value = value[int(part)]
        elif isinstance(value, dict) and part in value:
            value = value[part]
        else:
            raise ConfigError(f"Result has no entry '{key}' (stopped at '{part}')")
    return float(value)


def main():
    load_dotenv()
    parser = argparse.ArgumentParser(
        description="Rerun one experiment on successively refined grids and record a result value"
    )
    parser.add_argument("--config", type=Path, required=True, help="Path to the experiment JSON config")
    parser.add_argument(
        "--key", type=str, required=True, help="Dotted path into the result, e.g. norm.value"
    )
    parser.add_argument("--levels", type=int, default=3, help="Number of grids, each with twice the points")
    parser.add_argument("--out", type=Path, default=Path("runs/refinement.csv"), help="CSV file to write")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    config = load_experiment_config(args.config)
    runner = COMMANDS.get(config.command)
    if runner is None:
        raise ConfigError(f"Unknown command '{config.command}'")

    def evaluate(grid: Grid) -> float:
        outcome = runner(replace(config, grid=grid))
        return lookup(to_jsonable(outcome.result), args.key)

    rows = refinement_study(evaluate, config.grid, args.levels)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as csvfile:
        csv_writer = csv.writer(csvfile)
        csv_writer.writerow(["M", "value", "drift"])
        for row in rows:
            csv_writer.writerow([row["M"], repr(row["value"]), "" if row["drift"] is None else repr(row["drift"])])
    print(f"Wrote {len(rows)} levels to {args.out}")


if __name__ == "__main__":
    # How to run:
    # python -m scripts.experiments.refinement --config scripts/experiments/configs/besov_norm_gaussian.json --key norm.value
    # python -m scripts.experiments.refinement --config scripts/experiments/configs/solve_full_perturbed.json --key solve.residual --levels 2
    main()
