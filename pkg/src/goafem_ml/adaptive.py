"""Goal-oriented adaptive loop with combined Doerfler marking.

Each iteration solves the primal problem, then the dual problem with the
derivative load taken at the current primal solution (the order matters for
nonlinear goals), computes the primal and dual indicator bundles, and forms
two candidate markings over the joint list of spatial and parametric items:
one capturing a theta fraction of mu^2, one of mu^2 + zeta^2.  The smaller
marking wins, with ties going to the primal one.  Refinement bisects the
marked two-level vertices per active index and activates the marked detail
indices on the initial mesh.  The loop stops once the goal-error estimate
mu * sqrt(mu^2 + zeta^2) drops below the tolerance.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import estimator, goals, solver
from .fem import AssemblyCache
from .goals import GoalFunctional
from .mesh import initial_mesh
from .mlspace import (MlFunction, MultilevelStructure, build_operator,
                      refine_structure)
from .param import MultiIndex
from .problem import ProblemSpec, problem_for_setup

#: stopping tolerances: the paper's full-scale values and the 100x relaxed
#: desk-scale defaults used by the acceptance runs
PAPER_TOL = {1: 3e-7, 2: 5e-6, 3: 6e-7, 4: 4e-5}
PAPER_REF_TOL = {1: 1e-7, 2: 1e-6, 3: 2e-7, 4: 1e-5}
DESK_TOL = {k: 100.0 * v for k, v in PAPER_TOL.items()}

CSV_VERSION = "# goafem-ml v1"
CSV_COLUMNS = ("iter", "dofs", "mu", "zeta", "product", "goal_value",
               "n_indices", "max_param", "seconds")


@dataclass
class RunConfig:
    setup: int
    theta: float = 0.5
    tol: float = None
    ref_tol: float = None
    max_iter: int = 30
    solver_tol: float = 1e-10
    output_dir: str = "."
    threads: int = 1

    def __post_init__(self):
        if self.setup not in (1, 2, 3, 4):
            raise ValueError(f"setup must be 1..4, got {self.setup}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.tol is None:
            self.tol = DESK_TOL[self.setup]
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.ref_tol is not None and self.ref_tol >= self.tol:
            raise ValueError("ref_tol must be smaller than tol")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.solver_tol <= 0.0:
            raise ValueError("solver_tol must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def doerfler_minimal(items, theta: float):
    """Minimal-cardinality bulk chasing on (key, squared indicator) items.

    Greedily takes the largest squared indicators until their sum reaches
    theta times the total.  Ties are broken by the key order (which sorts
    spatial before parametric items), so the selection is deterministic.
    Returns the selected keys in selection order.
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    ordered = sorted(items, key=lambda kv: (-kv[1], kv[0]))
    # summing in selection order keeps the greedy test and the a posteriori
    # verification bit-consistent (trailing zero items change nothing)
    total = 0.0
    for _, val in ordered:
        total += val
    if total <= 0.0:
        return []
    acc = 0.0
    chosen = []
    for key, val in ordered:
        if acc >= theta * total or val <= 0.0:
            break
        chosen.append(key)
        acc += val
    return chosen


@dataclass
class MarkingDecision:
    chosen: str                     # "primal" | "combined"
    n_primal: int
    n_combined: int
    marked_indices: tuple           # subset of the detail set
    marked_vertices: dict           # nu -> array of two-level vertex ids


@dataclass
class AdaptiveState:
    iteration: int
    structure: MultilevelStructure
    primal: MlFunction = None
    dual: MlFunction = None
    mu_bundle: estimator.IndicatorBundle = None
    zeta_bundle: estimator.IndicatorBundle = None
    goal_value: float = None
    solve_reports: tuple = ()

    @property
    def mu(self) -> float:
        return self.mu_bundle.total

    @property
    def zeta(self) -> float:
        return self.zeta_bundle.total

    @property
    def product(self) -> float:
        return self.mu * np.sqrt(self.mu ** 2 + self.zeta ** 2)

    @property
    def solved(self) -> bool:
        return self.primal is not None


@dataclass
class LogRow:
    iter: int
    dofs: int
    mu: float
    zeta: float
    product: float
    goal_value: float
    n_indices: int
    max_param: int
    seconds: float


@dataclass
class ConvergenceLog:
    setup: int
    rows: list = field(default_factory=list)
    ref_errors: list = None         # aligned with rows when present
    reached_tol: bool = False

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write(CSV_VERSION + "\n")
            writer = csv.writer(f)
            header = list(CSV_COLUMNS)
            if self.ref_errors is not None:
                header.append("ref_error")
            writer.writerow(header)
            for i, r in enumerate(self.rows):
                row = [r.iter, r.dofs, f"{r.mu:.16e}", f"{r.zeta:.16e}",
                       f"{r.product:.16e}", f"{r.goal_value:.16e}",
                       r.n_indices, r.max_param, f"{r.seconds:.6e}"]
                if self.ref_errors is not None:
                    row.append(f"{self.ref_errors[i]:.16e}")
                writer.writerow(row)


def fitted_slope(dofs, products, points: int = 5) -> float:
    """Least-squares slope of log(product) vs log(dofs), last ``points`` rows."""
    dofs = np.asarray(dofs, dtype=float)[-points:]
    products = np.asarray(products, dtype=float)[-points:]
    if len(dofs) < 2:
        return float("nan")
    return float(np.polyfit(np.log(dofs), np.log(products), 1)[0])


class AdaptiveLoop:
    """Driver owning the problem data, assembly cache and solver settings."""

    def __init__(self, problem: ProblemSpec, goal: GoalFunctional,
                 solver_tol: float = 1e-10, threads: int = 1,
                 initial: MultilevelStructure = None,
                 include_parametric: bool = True):
        self.problem = problem
        self.goal = goal
        self.solver_tol = solver_tol
        self.threads = threads
        self.cache = AssemblyCache(problem.coefficient)
        if initial is None:
            t0 = initial_mesh(problem.domain, problem.initial_triangles)
            initial = MultilevelStructure.initial(t0)
        self.initial = initial
        # test harness switch: freeze the index set at {0} and mark only
        # spatial items, reducing the loop to a deterministic two-level AFEM
        self.include_parametric = include_parametric

    def initial_state(self) -> AdaptiveState:
        return AdaptiveState(0, self.initial)

    def solve_state(self, state: AdaptiveState) -> AdaptiveState:
        """Primal solve, dual solve at the primal solution, both bundles."""
        if state.solved:
            return state
        op = build_operator(state.structure, self.cache)
        rhs = self._rhs_function(state.structure)
        primal, rep_p = solver.solve(op, rhs, self.solver_tol, self.cache)
        dual_load = goals.dual_rhs(self.goal, primal, self.cache)
        dual, rep_d = solver.solve(op, dual_load, self.solver_tol, self.cache)

        res_p = estimator.primal_residual(state.structure, primal,
                                          self.problem.rhs, self.cache,
                                          self.threads)
        res_d = estimator.dual_residual(self.goal, primal, dual, self.cache,
                                        self.threads)
        state.primal = primal
        state.dual = dual
        state.mu_bundle = estimator.estimate_bundle(res_p, self.cache,
                                                    self.threads)
        state.zeta_bundle = estimator.estimate_bundle(res_d, self.cache,
                                                      self.threads)
        state.goal_value = goals.value(self.goal, primal, self.cache)
        state.solve_reports = (rep_p, rep_d)
        return state

    def _rhs_function(self, structure: MultilevelStructure) -> MlFunction:
        rhs = MlFunction.zeros(structure, self.cache)
        zero = MultiIndex.zero()
        space = self.cache.space(structure.mesh(zero))
        rhs.blocks[structure.index_set.pos[zero]] = \
            self.cache.rhs_load(space, self.problem.rhs).copy()
        return rhs

    def _items(self, state: AdaptiveState, combined: bool):
        """Joint (key, squared indicator) list in canonical order.

        Keys sort spatial items before parametric ones, then by index
        position and vertex id, which fixes all marking tie-breaks.
        """
        mu, zeta = state.mu_bundle, state.zeta_bundle
        items = []
        for i, nu in enumerate(state.structure.index_set):
            xi, vals = mu.spatial[nu]
            sq = vals ** 2
            if combined:
                sq = sq + zeta.spatial[nu][1] ** 2
            items.extend(((0, i, int(x)), float(s)) for x, s in zip(xi, sq))
        if self.include_parametric:
            for j, nu in enumerate(state.structure.detail_indices()):
                sq = mu.parametric[nu] ** 2
                if combined:
                    sq += zeta.parametric[nu] ** 2
                items.append(((1, j, -1), sq))
        return items

    def mark(self, state: AdaptiveState, theta: float) -> MarkingDecision:
        primal_items = self._items(state, combined=False)
        combined_items = self._items(state, combined=True)
        sel_primal = doerfler_minimal(primal_items, theta)
        sel_combined = doerfler_minimal(combined_items, theta)
        if len(sel_primal) <= len(sel_combined):
            chosen, keys, items = "primal", sel_primal, primal_items
        else:
            chosen, keys, items = "combined", sel_combined, combined_items

        self._verify_doerfler(items, keys, theta)
        details = state.structure.detail_indices()
        indices = tuple(details[j] for kind, j, _ in keys if kind == 1)
        vertices = {}
        for kind, i, xi in keys:
            if kind == 0:
                nu = state.structure.index_set.indices[i]
                vertices.setdefault(nu, []).append(xi)
        vertices = {nu: np.array(sorted(v), dtype=np.int64)
                    for nu, v in vertices.items()}
        return MarkingDecision(chosen, len(sel_primal), len(sel_combined),
                               indices, vertices)

    @staticmethod
    def _verify_doerfler(items, keys, theta):
        ordered = sorted(items, key=lambda kv: (-kv[1], kv[0]))
        total = 0.0
        for _, val in ordered:
            total += val
        selected = set(keys)
        got = 0.0
        for key, val in ordered:
            if key in selected:
                got += val
        if got < theta * total and got < total:
            raise AssertionError("Doerfler inequality violated after marking")

    def step(self, state: AdaptiveState, theta: float):
        """One loop iteration: solve, estimate, mark, refine."""
        state = self.solve_state(state)
        decision = self.mark(state, theta)
        refined = refine_structure(state.structure, decision.marked_indices,
                                   decision.marked_vertices)
        self._trim_cache(refined)
        return AdaptiveState(state.iteration + 1, refined), decision

    def _trim_cache(self, structure: MultilevelStructure) -> None:
        keep = {structure.t0.fingerprint}
        keep.add(self.cache.fine_mesh(structure.t0)[0].fingerprint)
        for nu in structure.index_set:
            mesh = structure.mesh(nu)
            keep.add(mesh.fingerprint)
            keep.add(self.cache.fine_mesh(mesh)[0].fingerprint)
        self.cache.retain(keep)

    def run(self, config: RunConfig, keep_states: bool = False):
        """Iterate to the tolerance or the iteration cap; log each iterate."""
        log = ConvergenceLog(config.setup)
        states = []
        state = self.initial_state()
        while True:
            tic = time.perf_counter()
            state = self.solve_state(state)
            product = state.product
            log.rows.append(LogRow(
                state.iteration, state.structure.dim(self.cache),
                state.mu, state.zeta, product, state.goal_value,
                len(state.structure.index_set),
                state.structure.index_set.num_active,
                time.perf_counter() - tic))
            if keep_states:
                states.append(state)
            if product < config.tol:
                log.reached_tol = True
                break
            if state.iteration >= config.max_iter:
                break
            state, _ = self.step(state, config.theta)
        return (log, states) if keep_states else (log, state)


def run_setup(config: RunConfig, goal: GoalFunctional = None,
              problem: ProblemSpec = None, keep_states: bool = False):
    """Convenience wrapper: build the loop for a setup and run it."""
    problem = problem or problem_for_setup(config.setup)
    goal = goal or goals.goal_for_setup(config.setup)
    loop = AdaptiveLoop(problem, goal, config.solver_tol, config.threads)
    return loop.run(config, keep_states=keep_states)


def reference_errors(ref_log: ConvergenceLog, tol: float):
    """Base-run rows and |g(u_ref) - g(u_l)| from a reference-tolerance run.

    The adaptive trajectory does not depend on the stopping tolerance, so
    the base run at ``tol`` is the prefix of the reference run up to (and
    including) the first row whose estimate product drops below ``tol``.
    """
    g_ref = ref_log.rows[-1].goal_value
    base_rows = []
    for row in ref_log.rows:
        base_rows.append(row)
        if row.product < tol:
            break
    errors = [abs(g_ref - r.goal_value) for r in base_rows]
    base = ConvergenceLog(ref_log.setup, base_rows,
                          reached_tol=base_rows[-1].product < tol)
    return base, errors
