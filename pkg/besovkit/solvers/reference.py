"""Second-order periodic finite-difference solver, used as an independent oracle."""

import logging

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from besovkit.analysis.grid import SampledFunction
from besovkit.errors import SectorError
from besovkit.solvers.doe import EllipticProblem

logger = logging.getLogger(__name__)


def _periodic_difference(M: int, scale: float, offsets: tuple[int, ...], coefficients: tuple[float, ...]):
    """Circulant stencil matrix; every off-diagonal also wraps around to offset -+(M - |o|)."""
    all_offsets, diagonals = [], []
    for offset, c in zip(offsets, coefficients):
        all_offsets.append(offset)
        diagonals.append(np.full(M - abs(offset), c))
        if offset:
            wrapped = offset - M if offset > 0 else offset + M
            all_offsets.append(wrapped)
            diagonals.append(np.full(abs(offset), c))
    return scipy.sparse.diags(diagonals, all_offsets, shape=(M, M), format="csr") / scale


def solve_finite_difference(problem: EllipticProblem) -> SampledFunction:
    """
    (-D_2 + A_1 D_1 + A + lambda) u = f with periodic central differences
    D_2 = (u_{i+1} - 2u_i + u_{i-1}) / dx^2 and D_1 = (u_{i+1} - u_{i-1}) / (2 dx).
    """
    grid = problem.grid
    M, dx, d = grid.M, grid.dx, problem.A.dim
    second = _periodic_difference(M, dx * dx, (-1, 0, 1), (1.0, -2.0, 1.0))
    first = _periodic_difference(M, 2.0 * dx, (-1, 1), (-1.0, 1.0))
    identity_d = scipy.sparse.identity(d, format="csr")

    system = scipy.sparse.kron(-second, identity_d)
    system = system + scipy.sparse.kron(
        scipy.sparse.identity(M), problem.A.matrix + problem.lam * np.eye(d)
    )
    if problem.coefficient is not None:
        coefficient = scipy.sparse.block_diag(list(problem.coefficient), format="csr")
        system = system + coefficient @ scipy.sparse.kron(first, identity_d)

    rhs = problem.f.values.reshape(-1)
    u = scipy.sparse.linalg.spsolve(system.tocsc().astype(complex), rhs)
    if not np.all(np.isfinite(u)):
        raise SectorError(f"Finite-difference system is singular at lambda={problem.lam}")
    logger.debug(f"Finite-difference solve on {grid} with {M * d} unknowns")
    return SampledFunction(grid, u.reshape(grid.shape + (d,)))
