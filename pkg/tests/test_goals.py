"""Goal functional values, derivative loads and the Monte Carlo oracle."""

import numpy as np
import pytest

from goafem_ml import fem, goals
from goafem_ml import mesh as M
from goafem_ml import mlspace as ML
from goafem_ml.param import IndexSet, MultiIndex, eval_tensor_poly

ZERO = MultiIndex.zero()
E1 = MultiIndex.unit(1)
E2 = MultiIndex.unit(2)


def random_function(cache, meshes, rng):
    idx = IndexSet(meshes)
    s = ML.MultilevelStructure(idx, meshes, meshes[ZERO])
    return ML.MlFunction(
        s, [rng.standard_normal(cache.space(s.mesh(nu)).ndof) * 0.3
            for nu in idx])


@pytest.fixture
def setup_goals():
    return [goals.goal_for_setup(k) for k in (1, 2, 3, 4)]


def test_deterministic_constant_weighted_l2(cache):
    # constant c on an unconstrained space with unit-mass weight gives c^2
    mesh = M.initial_mesh("unit_square", 32)
    goal = goals.goal_for_setup(1)
    space = cache.space(mesh, constrained=False)
    mass = fem.weighted_mass(space, space, goal.weight, cache)
    c = 1.7
    vec = np.full(space.ndof, c)
    assert abs(float(vec @ (mass @ vec)) - c * c) < 1e-12


def test_variance_of_deterministic_is_zero(cache, square8):
    rng = np.random.default_rng(0)
    goal = goals.goal_for_setup(4)
    mesh = M.initial_mesh("slit", 512)
    s = ML.MultilevelStructure.initial(mesh)
    u = ML.MlFunction(s, [rng.standard_normal(cache.space(mesh).ndof)])
    assert goals.value(goal, u, cache) == 0.0


def test_second_moment_vs_monte_carlo(cache):
    # sample y, evaluate (l_w(u(., y)))^2 and average; orthonormality should
    # reproduce the closed per-block sum to ~3 significant digits
    rng = np.random.default_rng(123)
    mesh = M.initial_mesh("unit_square", 32)
    meshes = {ZERO: mesh, E1: mesh, E2: mesh, E1.plus(1): mesh}
    u = random_function(cache, meshes, rng)
    goal = goals.goal_for_setup(3)
    exact = goals.value(goal, u, cache)

    space = cache.space(mesh)
    load = fem.weight_load(space, goal.weight, cache)
    lvals = {nu: float(load @ u.block(nu)) for nu in u.structure.index_set}
    samples = rng.uniform(-1.0, 1.0, size=(100_000, 2))
    acc = 0.0
    for y in samples:
        ly = sum(val * eval_tensor_poly(nu, y) for nu, val in lvals.items())
        acc += 100.0 * ly * ly
    mc = acc / len(samples)
    assert abs(mc - exact) < 5e-3 * abs(exact)


def test_variance_reduction_identity(cache):
    # Var[L] = E[L^2] - (E[L])^2 with E[L] = l_w(u_0)
    rng = np.random.default_rng(7)
    mesh = M.initial_mesh("unit_square", 32)
    meshes = {ZERO: mesh, E1: mesh, E2: mesh}
    u = random_function(cache, meshes, rng)
    g2 = goals.GoalFunctional("second_moment", goals.goal_for_setup(1).weight,
                              scale=100.0)
    gv = goals.GoalFunctional("variance", g2.weight, scale=100.0)
    space = cache.space(mesh)
    load = fem.weight_load(space, g2.weight, cache)
    mean = float(load @ u.block(ZERO))
    lhs = goals.value(gv, u, cache)
    rhs = goals.value(g2, u, cache) - 100.0 * mean ** 2
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))
    assert lhs >= 0.0
    assert goals.value(g2, u, cache) >= 100.0 * mean ** 2 - 1e-12


def test_central_difference_exactness(cache, setup_goals):
    # quadratic goals: (g(u+ev) - g(u-ev)) / 2e equals <g'(u), v> exactly
    rng = np.random.default_rng(31)
    for setup, goal in zip((1, 2, 3, 4), setup_goals):
        domain = {1: "unit_square", 2: "l_shaped",
                  3: "unit_square", 4: "slit"}[setup]
        count = 384 if setup == 2 else 512
        t0 = M.initial_mesh(domain, count)
        fine = M.uniform_refine(t0)
        meshes = {ZERO: fine, E1: t0, E2: t0}
        u = random_function(cache, meshes, rng)
        v = random_function(cache, meshes, rng)
        eps = 1e-3
        up = ML.MlFunction(u.structure,
                           [a + eps * b for a, b in zip(u.blocks, v.blocks)])
        dn = ML.MlFunction(u.structure,
                           [a - eps * b for a, b in zip(u.blocks, v.blocks)])
        fd = (goals.value(goal, up, cache) - goals.value(goal, dn, cache)) / (2 * eps)
        pairing = goals.derivative_pairing(goal, u, v, cache)
        assert abs(fd - pairing) <= 1e-9 * max(1.0, abs(pairing)), setup


def test_zero_function_zero_derivative(cache, setup_goals):
    for setup, goal in zip((1, 2, 3, 4), setup_goals):
        domain = {1: "unit_square", 2: "l_shaped",
                  3: "unit_square", 4: "slit"}[setup]
        count = 384 if setup == 2 else 512
        t0 = M.initial_mesh(domain, count)
        s = ML.MultilevelStructure.initial(t0)
        u = ML.MlFunction.zeros(s, cache)
        loads = goals.derivative_load(goal, u, [(ZERO, cache.space(t0))], cache)
        assert np.abs(loads[ZERO]).max() == 0.0
        assert goals.value(goal, u, cache) == 0.0


def test_derivative_affine_in_base_point(cache, setup_goals):
    # <g'(u + t h) - g'(u), v> is linear in t for quadratic goals: the
    # increments at t=1 and t=2 are exactly proportional
    rng = np.random.default_rng(17)
    goal = goals.goal_for_setup(1)
    mesh = M.initial_mesh("unit_square", 128)
    meshes = {ZERO: mesh, E1: mesh}
    u = random_function(cache, meshes, rng)
    h = random_function(cache, meshes, rng)
    v = random_function(cache, meshes, rng)

    def pairing_at(t):
        ut = ML.MlFunction(u.structure,
                           [a + t * b for a, b in zip(u.blocks, h.blocks)])
        return goals.derivative_pairing(goal, ut, v, cache)

    d0, d1, d2 = pairing_at(0.0), pairing_at(1.0), pairing_at(2.0)
    assert abs((d2 - d0) - 2.0 * (d1 - d0)) < 1e-11 * max(1.0, abs(d1))


def test_weighted_l2_derivative_symmetry(cache):
    rng = np.random.default_rng(23)
    goal = goals.goal_for_setup(1)
    mesh = M.initial_mesh("unit_square", 128)
    meshes = {ZERO: mesh, E1: mesh}
    u = random_function(cache, meshes, rng)
    v = random_function(cache, meshes, rng)
    assert abs(goals.derivative_pairing(goal, u, v, cache)
               - goals.derivative_pairing(goal, v, u, cache)) < 1e-12


def test_derivative_on_disjoint_support_is_zero(cache):
    goal = goals.goal_for_setup(3)  # weight on T_g near (1, 1)
    mesh = M.initial_mesh("unit_square", 32)
    s = ML.MultilevelStructure.initial(mesh)
    space = cache.space(mesh)
    # u supported away from T_g: l_w(u_0) = 0, so the load vanishes
    vec = np.zeros(space.ndof)
    near_origin = np.flatnonzero(
        (mesh.vertices[space.free, 0] < 0.3)
        & (mesh.vertices[space.free, 1] < 0.3))
    vec[near_origin] = 1.0
    u = ML.MlFunction(s, [vec])
    loads = goals.derivative_load(goal, u, [(ZERO, space)], cache)
    assert np.abs(loads[ZERO]).max() == 0.0


def test_mollifier_goal_embed_invariance(cache):
    rng = np.random.default_rng(40)
    goal = goals.goal_for_setup(4)
    t0 = M.initial_mesh("slit", 512)
    meshes = {ZERO: t0, E1: t0}
    u = random_function(cache, meshes, rng)
    hat = ML.enriched_structure(u.structure, cache)
    emb = ML.embed(u, hat, cache)
    g1 = goals.value(goal, u, cache)
    g2 = goals.value(goal, emb, cache)
    assert abs(g1 - g2) < 1e-10 * max(1.0, abs(g1))
