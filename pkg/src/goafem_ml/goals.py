"""Quantities of interest and their Gateaux-derivative loads.

All four shipped goals are quadratic in the solution, so the derivative
pairing <g'(w), v> is exactly linear in w and central differences of g
reproduce it up to roundoff.  Legendre orthonormality collapses every
parametric integral to a sum over active indices:

* weighted_l2_sq   g(u) = sum_nu  u_nu^T M_w u_nu
* convection       g(u) = sum_nu  int w u_nu (d1 u_nu + d2 u_nu)
* second_moment    g(u) = scale * sum_nu      l_w(u_nu)^2
* variance         g(u) = scale * sum_{nu!=0} l_w(u_nu)^2
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import (AssemblyCache, CharacteristicWeight, mollifier_weight,
                  weight_load, weighted_convection, weighted_mass)
from .mlspace import MlFunction
from .param import MultiIndex

KINDS = ("weighted_l2_sq", "convection", "second_moment", "variance")


@dataclass(frozen=True)
class GoalFunctional:
    kind: str
    weight: object              # CharacteristicWeight or MollifierWeight
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown goal kind {self.kind!r}")


#: weight regions of the four experimental setups
SQUARE_S = ((0.625, 0.5625), (0.875, 0.5625), (0.875, 0.8125), (0.625, 0.8125))
TRIANGLE_T = ((1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
TRIANGLE_TG = ((1.0, 0.5), (1.0, 1.0), (0.5, 1.0))
MOLLIFIER_X0 = (0.4, -0.5)
MOLLIFIER_R = 0.15


def goal_for_setup(setup: int) -> GoalFunctional:
    if setup == 1:
        return GoalFunctional("weighted_l2_sq", CharacteristicWeight(SQUARE_S))
    if setup == 2:
        return GoalFunctional("convection", CharacteristicWeight(TRIANGLE_T))
    if setup == 3:
        return GoalFunctional("second_moment",
                              CharacteristicWeight(TRIANGLE_TG), scale=100.0)
    if setup == 4:
        return GoalFunctional("variance",
                              mollifier_weight(MOLLIFIER_X0, MOLLIFIER_R),
                              scale=100.0)
    raise ValueError(f"unknown setup {setup}")


def value(goal: GoalFunctional, u: MlFunction, cache: AssemblyCache) -> float:
    """Evaluate g(u) for a multilevel function."""
    total = 0.0
    zero = MultiIndex.zero()
    for nu in u.structure.index_set:
        coeffs = u.block(nu)
        space = cache.space(u.structure.mesh(nu))
        if goal.kind == "weighted_l2_sq":
            mat = weighted_mass(space, space, goal.weight, cache)
            total += float(coeffs @ (mat @ coeffs))
        elif goal.kind == "convection":
            mat = weighted_convection(space, space, goal.weight, cache)
            total += float(coeffs @ (mat @ coeffs))
        elif goal.kind == "second_moment":
            total += float(weight_load(space, goal.weight, cache) @ coeffs) ** 2
        elif goal.kind == "variance":
            if nu != zero:
                total += float(weight_load(space, goal.weight, cache)
                               @ coeffs) ** 2
    return goal.scale * total


def derivative_load(goal: GoalFunctional, w: MlFunction, targets,
                    cache: AssemblyCache):
    """Per-block loads <g'(w), phi_i P_nu> on the given target blocks.

    ``targets`` is a list of (nu, FeSpace) pairs; blocks of nu without a
    contribution (e.g. nu outside w's index set for the quadratic goals)
    come back as zero vectors.
    """
    zero = MultiIndex.zero()
    out = {}
    for nu, test_space in targets:
        wnu = w.block(nu)
        if wnu is None or (goal.kind == "variance" and nu == zero):
            out[nu] = np.zeros(test_space.ndof)
            continue
        w_space = cache.space(w.structure.mesh(nu))
        if goal.kind == "weighted_l2_sq":
            mat = weighted_mass(test_space, w_space, goal.weight, cache)
            out[nu] = goal.scale * 2.0 * (mat @ wnu)
        elif goal.kind == "convection":
            # <g'(w), v> = int w [v (d w_nu) + w_nu (d v)], d = d1 + d2
            c1 = weighted_convection(test_space, w_space, goal.weight, cache)
            c2 = weighted_convection(w_space, test_space, goal.weight, cache)
            out[nu] = goal.scale * (c1 @ wnu + c2.T @ wnu)
        elif goal.kind in ("second_moment", "variance"):
            lw = float(weight_load(w_space, goal.weight, cache) @ wnu)
            out[nu] = (goal.scale * 2.0 * lw
                       * weight_load(test_space, goal.weight, cache))
    return out


def dual_rhs(goal: GoalFunctional, u: MlFunction,
             cache: AssemblyCache) -> MlFunction:
    """Right-hand side <g'(u), .> of the discrete dual problem on u's space."""
    structure = u.structure
    targets = [(nu, cache.space(structure.mesh(nu)))
               for nu in structure.index_set]
    loads = derivative_load(goal, u, targets, cache)
    return MlFunction(structure,
                      [loads[nu] for nu in structure.index_set])


def derivative_pairing(goal: GoalFunctional, w: MlFunction, v: MlFunction,
                       cache: AssemblyCache) -> float:
    """<g'(w), v> for two functions on the same structure."""
    if v.structure.index_set != w.structure.index_set:
        raise ValueError("functions must share a structure")
    loads = derivative_load(
        goal, w, [(nu, cache.space(v.structure.mesh(nu)))
                  for nu in v.structure.index_set], cache)
    return float(sum(loads[nu] @ v.block(nu) for nu in v.structure.index_set))
