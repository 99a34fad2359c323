"""Preconditioned conjugate gradients for the block Galerkin systems.

The preconditioner is the mean-field block diagonal (one sparse LU per
distinct mesh, cached), which bounds the condition number of the
preconditioned operator by (1+tau)/(1-tau) independently of the
discretization, so iteration counts do not grow under refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import AssemblyCache
from .mlspace import BlockOperator, MlFunction, block_dot


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    factorization_cache_hits: int


class NonconvergenceError(Exception):
    def __init__(self, report: SolveReport):
        super().__init__(
            f"PCG did not converge: {report.iterations} iterations, "
            f"relative residual {report.relative_residual:.3e}")
        self.report = report


def _precondition(op: BlockOperator, cache: AssemblyCache, residual):
    return [cache.lu(space).solve(r) for space, r in zip(op.spaces, residual)]


def solve(op: BlockOperator, rhs, tol: float = 1e-10,
          cache: AssemblyCache = None):
    """Solve op x = rhs to a relative euclidean residual of ``tol``.

    ``rhs`` may be an MlFunction or a list of blocks; the solution is
    returned as an MlFunction on the operator's structure.
    """
    if tol <= 0.0:
        raise ValueError("tolerance must be positive")
    rhs_blocks = rhs.blocks if isinstance(rhs, MlFunction) else list(rhs)
    hits0 = cache.lu_hits

    norm_rhs = np.sqrt(block_dot(rhs_blocks, rhs_blocks))
    xs = [np.zeros(n) for n in op.dims]
    if norm_rhs == 0.0:
        return (MlFunction(op.structure, xs),
                SolveReport(0, 0.0, cache.lu_hits - hits0))

    rs = [b.copy() for b in rhs_blocks]
    zs = _precondition(op, cache, rs)
    ds = [z.copy() for z in zs]
    rho = block_dot(rs, zs)
    max_iter = max(1000, 10 * op.total_dim)

    for it in range(1, max_iter + 1):
        ad = op.apply(ds)
        alpha = rho / block_dot(ds, ad)
        for k in range(len(xs)):
            xs[k] += alpha * ds[k]
            rs[k] -= alpha * ad[k]
        res = np.sqrt(block_dot(rs, rs)) / norm_rhs
        if res <= tol:
            return (MlFunction(op.structure, xs),
                    SolveReport(it, res, cache.lu_hits - hits0))
        zs = _precondition(op, cache, rs)
        rho_new = block_dot(rs, zs)
        beta = rho_new / rho
        rho = rho_new
        ds = [z + beta * d for z, d in zip(zs, ds)]

    raise NonconvergenceError(SolveReport(max_iter, res, cache.lu_hits - hits0))


def galerkin_residual_check(op: BlockOperator, x, rhs) -> float:
    """Relative residual ||op x - rhs|| / ||rhs|| (0 for the zero system)."""
    xs = x.blocks if isinstance(x, MlFunction) else list(x)
    bs = rhs.blocks if isinstance(rhs, MlFunction) else list(rhs)
    ax = op.apply(xs)
    num = np.sqrt(sum(float(np.sum((a - b) ** 2)) for a, b in zip(ax, bs)))
    den = np.sqrt(block_dot(bs, bs))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def energy_norm(op: BlockOperator, x) -> float:
    """B-norm sqrt(x^T B x) of a block vector or MlFunction."""
    xs = x.blocks if isinstance(x, MlFunction) else list(x)
    return float(np.sqrt(max(op.quadratic_form(xs), 0.0)))
