"""Hierarchical parametric and two-level spatial error indicators.

Residuals of the primal and dual Galerkin solutions are evaluated against
the enriched test functions: fine hat functions (uniform refinement) on the
active blocks, and coarse-space test functions on the detail blocks.  From
the residual vectors,

* the spatial indicator at (nu, xi) is |r(hat_xi P_nu)| / ||hat_xi||_D for
  every new interior vertex xi of the mesh of nu;
* the parametric indicator at nu in Q lifts the residual through the
  mean-field inner product on the initial-mesh space and takes its energy
  norm.

The bundle total is the root of the summed squares of all indicators.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .fem import AssemblyCache, Constant, FourierMode
from .goals import GoalFunctional, derivative_load
from .mesh import new_interior_vertices
from .mlspace import MlFunction, MultilevelStructure
from .param import DIAGONAL, MultiIndex, coupling_weight
from .problem import RhsSpec


@dataclass
class ResidualFunctional:
    """Residual v -> B(w - w_bullet, v) evaluated on the enriched test blocks.

    ``fine`` holds one vector per active index (tested against the fine hat
    basis of the uniformly refined mesh); ``detail`` holds one vector per
    detail index (tested against the initial-mesh basis).
    """

    structure: MultilevelStructure
    detail_indices: tuple
    fine: dict      # nu in P -> vector on fine interior dofs
    detail: dict    # nu in Q -> vector on X0 interior dofs


def _coupled_in(structure: MultilevelStructure, nu: MultiIndex):
    """Active indices coupling to nu, with their mode and weight."""
    out = []
    for mu in structure.index_set:
        cw = coupling_weight(nu, mu)
        if cw is None:
            continue
        if cw is DIAGONAL:
            out.append((mu, 0, 1.0))
        else:
            out.append((mu, cw[0], cw[1]))
    return out


def _test_block(structure, sol, nu, test_space, load_vec, cache):
    """load(v) - B(sol, v) for v in the span of the test space at index nu."""
    res = load_vec.copy() if load_vec is not None \
        else np.zeros(test_space.ndof)
    for mu, m, weight in _coupled_in(structure, nu):
        coeff = Constant(1.0) if m == 0 else FourierMode(m)
        mat = cache.cross(test_space, cache.space(structure.mesh(mu)), coeff)
        res -= weight * (mat @ sol.block(mu))
    return res


def _assemble_residual(structure, sol, fine_loads, detail_loads, cache,
                       threads: int = 1) -> ResidualFunctional:
    details = structure.detail_indices()

    def fine_vec(nu):
        fine_space = cache.space(cache.fine_mesh(structure.mesh(nu))[0])
        return nu, _test_block(structure, sol, nu, fine_space,
                               fine_loads.get(nu), cache)

    def detail_vec(nu):
        x0 = cache.space(structure.t0)
        return nu, _test_block(structure, sol, nu, x0,
                               detail_loads.get(nu), cache)

    jobs_f = list(structure.index_set)
    jobs_d = list(details)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fine = dict(pool.map(fine_vec, jobs_f))
            detail = dict(pool.map(detail_vec, jobs_d))
    else:
        fine = dict(map(fine_vec, jobs_f))
        detail = dict(map(detail_vec, jobs_d))
    return ResidualFunctional(structure, details, fine, detail)


def primal_residual(structure: MultilevelStructure, u: MlFunction,
                    rhs: RhsSpec, cache: AssemblyCache,
                    threads: int = 1) -> ResidualFunctional:
    """Residual F(.) - B(u, .); the deterministic load only hits the 0-block."""
    zero = MultiIndex.zero()
    fine_space = cache.space(cache.fine_mesh(structure.mesh(zero))[0])
    fine_loads = {zero: cache.rhs_load(fine_space, rhs)}
    return _assemble_residual(structure, u, fine_loads, {}, cache, threads)


def dual_residual(goal: GoalFunctional, u: MlFunction, z: MlFunction,
                  cache: AssemblyCache, threads: int = 1) -> ResidualFunctional:
    """Residual <g'(u), .> - B(., z) with z the discrete dual at u."""
    structure = u.structure
    details = structure.detail_indices()
    fine_targets = [(nu, cache.space(cache.fine_mesh(structure.mesh(nu))[0]))
                    for nu in structure.index_set]
    detail_targets = [(nu, cache.space(structure.t0)) for nu in details]
    fine_loads = derivative_load(goal, u, fine_targets, cache)
    detail_loads = derivative_load(goal, u, detail_targets, cache)
    return _assemble_residual(structure, z, fine_loads, detail_loads,
                              cache, threads)


@dataclass
class IndicatorBundle:
    """Spatial indicators keyed (nu, xi) and parametric indicators keyed nu."""

    spatial: dict       # nu -> (xi ids array, indicator values array)
    parametric: dict    # nu -> indicator value
    total: float

    def spatial_sq(self, nu):
        xi, vals = self.spatial[nu]
        return vals ** 2

    def total_sq(self) -> float:
        acc = sum(float(np.sum(vals ** 2)) for _, vals in self.spatial.values())
        acc += sum(v ** 2 for v in self.parametric.values())
        return acc


def spatial_indicators(res: ResidualFunctional, nu: MultiIndex,
                       cache: AssemblyCache):
    """All two-level indicators of one active index: (xi ids, values)."""
    mesh = res.structure.mesh(nu)
    fine = cache.fine_mesh(mesh)[0]
    fine_space = cache.space(fine)
    xi = new_interior_vertices(mesh)
    dofs = fine_space.dof_of[xi]
    stiff = cache.stiffness_interior(fine_space, Constant(1.0))
    norms = np.sqrt(stiff.diagonal()[dofs])
    vals = np.abs(res.fine[nu][dofs]) / norms
    return xi, vals


def spatial_indicator(res: ResidualFunctional, nu: MultiIndex, xi: int,
                      cache: AssemblyCache) -> float:
    ids, vals = spatial_indicators(res, nu, cache)
    pos = np.flatnonzero(ids == xi)
    if not len(pos):
        raise ValueError(f"{xi} is not a two-level vertex of the mesh of {nu}")
    return float(vals[pos[0]])


def parametric_indicator(res: ResidualFunctional, nu: MultiIndex,
                         cache: AssemblyCache) -> float:
    """Energy norm of the coarse-space lift of the residual at a detail index."""
    rhs = res.detail[nu]
    lu = cache.lu(cache.space(res.structure.t0))
    lift = lu.solve(rhs)
    return float(np.sqrt(max(lift @ rhs, 0.0)))


def dump_top_indicators(bundle: IndicatorBundle, stream, k: int = 20) -> None:
    """Write the k largest indicators (spatial and parametric) for debugging."""
    from .param import format_index
    items = []
    for nu, (xi, vals) in bundle.spatial.items():
        items.extend(("spatial", nu, int(x), float(v))
                     for x, v in zip(xi, vals))
    items.extend(("parametric", nu, -1, float(v))
                 for nu, v in bundle.parametric.items())
    items.sort(key=lambda t: -t[3])
    stream.write(f"total {bundle.total!r}\n")
    for kind, nu, xi, val in items[:k]:
        where = f"xi={xi}" if kind == "spatial" else "--"
        stream.write(f"{kind:10s} nu={format_index(nu):12s} {where:10s} "
                     f"{val:.12e}\n")


def estimate_bundle(res: ResidualFunctional, cache: AssemblyCache,
                    threads: int = 1) -> IndicatorBundle:
    def spat(nu):
        return nu, spatial_indicators(res, nu, cache)

    def para(nu):
        return nu, parametric_indicator(res, nu, cache)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            spatial = dict(pool.map(spat, res.structure.index_set))
            parametric = dict(pool.map(para, res.detail_indices))
    else:
        spatial = dict(map(spat, res.structure.index_set))
        parametric = dict(map(para, res.detail_indices))

    total_sq = 0.0
    for nu in res.structure.index_set:
        total_sq += float(np.sum(spatial[nu][1] ** 2))
    for nu in res.detail_indices:
        total_sq += parametric[nu] ** 2
    return IndicatorBundle(spatial, parametric, float(np.sqrt(total_sq)))
