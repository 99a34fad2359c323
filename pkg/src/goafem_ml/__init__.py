"""Goal-oriented adaptive multilevel stochastic Galerkin FEM."""

from .adaptive import (AdaptiveLoop, ConvergenceLog, MarkingDecision,
                       RunConfig, doerfler_minimal, fitted_slope,
                       reference_errors, run_setup)
from .fem import AssemblyCache, CharacteristicWeight, MollifierWeight, fe_space
from .goals import GoalFunctional, goal_for_setup
from .mesh import Mesh, common_refinement, initial_mesh, new_interior_vertices, \
    refine_nvb, uniform_refine
from .mlspace import (MlFunction, MultilevelStructure, build_operator, embed,
                      enriched_structure, refine_structure)
from .param import IndexSet, MultiIndex, coupling_coeff, coupling_weight, \
    detail_set, legendre_eval
from .problem import CoefficientField, ProblemSpec, problem_for_setup, \
    rhs_load_spec
from .solver import galerkin_residual_check, solve

__all__ = [name for name in dir() if not name.startswith("_")]
