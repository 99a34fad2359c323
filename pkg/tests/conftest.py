"""Shared fixtures and independent oracle helpers.

The oracles here deliberately avoid the library's own assembly paths:
spatial integrals use tensorized Gauss quadrature on a collapsed square
(Duffy transform), parametric integrals use 64-point Gauss-Legendre, and
polygon areas come from shapely where needed.
"""

import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from goafem_ml import fem
from goafem_ml import mesh as meshmod
from goafem_ml import problem


@pytest.fixture
def field():
    return problem.CoefficientField()


@pytest.fixture
def cache(field):
    return fem.AssemblyCache(field)


@pytest.fixture
def square2():
    return meshmod.initial_mesh("unit_square", 2)


@pytest.fixture
def square8():
    return meshmod.initial_mesh("unit_square", 8)


@pytest.fixture
def square512():
    return meshmod.initial_mesh("unit_square", 512)


def duffy_points(n=12):
    """Quadrature on the reference simplex, exact to high polynomial degree."""
    x, w = leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    u = U.ravel()
    v = (V * (1.0 - U)).ravel()
    wq = (WU * WV * (1.0 - U)).ravel()
    return u, v, wq


def quad_triangle(tri_pts, f, n=12):
    """High-order quadrature of f over a physical triangle (oracle)."""
    u, v, wq = duffy_points(n)
    p0, p1, p2 = np.asarray(tri_pts, dtype=float)
    pts = p0 + np.outer(u, p1 - p0) + np.outer(v, p2 - p0)
    jac = abs((p1[0] - p0[0]) * (p2[1] - p0[1])
              - (p1[1] - p0[1]) * (p2[0] - p0[0]))
    return jac * np.sum(wq * f(pts))


def quad_mesh(mesh, f, n=12):
    return sum(quad_triangle(mesh.vertices[tri], f, n=n)
               for tri in mesh.triangles)


def hat_gradients(tri_pts):
    """Gradients of the three barycentric coordinates on a triangle."""
    p0, p1, p2 = np.asarray(tri_pts, dtype=float)
    area2 = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
    grads = np.empty((3, 2))
    for i, (a, b) in enumerate(((p2, p1), (p0, p2), (p1, p0))):
        e = a - b
        grads[i] = (-e[1], e[0])
    return grads / area2


def barycentric(tri_pts, pts):
    p0, p1, p2 = np.asarray(tri_pts, dtype=float)
    mat = np.array([[p1[0] - p0[0], p2[0] - p0[0]],
                    [p1[1] - p0[1], p2[1] - p0[1]]])
    uv = np.linalg.solve(mat, (np.asarray(pts) - p0).T).T
    lam = np.empty((len(pts), 3))
    lam[:, 1:] = uv
    lam[:, 0] = 1.0 - uv.sum(axis=1)
    return lam


def dense_stiffness_oracle(mesh, coeff_fn, n=12):
    """Full-vertex stiffness with a scalar coefficient, by quadrature."""
    nv = mesh.num_vertices
    K = np.zeros((nv, nv))
    for tri in mesh.triangles:
        pts = mesh.vertices[tri]
        grads = hat_gradients(pts)
        cint = quad_triangle(pts, coeff_fn, n=n)
        loc = cint * (grads @ grads.T)
        for a in range(3):
            for b in range(3):
                K[tri[a], tri[b]] += loc[a, b]
    return K


def gauss_y(n=64):
    """Nodes/weights of Gauss-Legendre normalized to the measure dy/2."""
    y, w = leggauss(n)
    return y, w / 2.0


def is_conforming(mesh):
    _, _, counts = mesh.edge_table()
    if counts.max() > 2:
        return False
    if not (mesh.areas() > 0).all():
        return False
    # hanging nodes: any vertex strictly inside another triangle's edge
    edges, _, _ = mesh.edge_table()
    pts = mesh.vertices
    for (a, b) in edges:
        pa, pb = pts[a], pts[b]
        d = pb - pa
        L2 = d @ d
        rel = pts - pa
        t = (rel @ d) / L2
        on = (np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) < 1e-12 * np.sqrt(L2)) \
            & (t > 1e-12) & (t < 1 - 1e-12)
        on[[a, b]] = False
        if on.any():
            return False
    return True


def random_nvb_mesh(base, steps, rng):
    m = base
    for _ in range(steps):
        nplus = meshmod.new_interior_vertices(m)
        if not len(nplus):
            break
        k = int(rng.integers(1, len(nplus) + 1))
        marks = rng.choice(nplus, size=min(k, len(nplus)), replace=False)
        m = meshmod.refine_nvb(m, marks)
    return m
