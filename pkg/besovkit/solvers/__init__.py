from .doe import EllipticProblem, SolveReport, solve_full, solve_principal
from .degenerate import solve_degenerate

__all__ = ["EllipticProblem", "SolveReport", "solve_full", "solve_principal", "solve_degenerate"]
