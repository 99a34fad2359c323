"""P1 finite element assembly and the shared assembly cache.

All element integrals here are exact up to roundoff:

* stiffness matrices with the Fourier-mode coefficients use a closed form
  for integrals of plane waves over triangles (P1 gradients are constant,
  so only the element integral of the coefficient is needed);
* characteristic-function weights are integrated by clipping elements
  against the support polygon and integrating the P1 products on the pieces;
* the mollifier weight is realized as a fixed quadrature point set that does
  not depend on the mesh.

Exactness makes every assembled bilinear form consistent across nested
meshes, so quantities like B(v, v) or goal values are invariant under
prolongation to machine precision.

Cross-mesh operators are assembled on the overlay (coarsest common
refinement) and pulled back through the nodal prolongations.  The
:class:`AssemblyCache` memoizes, per mesh fingerprint, everything that is
reused across solver iterations: overlays, matrices, factorizations, loads.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import mesh as meshmod
from .mesh import Mesh
from .problem import CoefficientField, RhsSpec, mode_frequencies


class AssemblyError(Exception):
    pass


@dataclass
class FeSpace:
    """P1 space on a mesh with Dirichlet vertices eliminated."""

    mesh: Mesh
    free: np.ndarray     # vertex ids carrying dofs
    dof_of: np.ndarray   # vertex id -> dof id, -1 for constrained

    @property
    def ndof(self) -> int:
        return len(self.free)


def fe_space(mesh: Mesh, constrained: bool = True) -> FeSpace:
    free = np.flatnonzero(~mesh.boundary) if constrained \
        else np.arange(mesh.num_vertices)
    dof_of = np.full(mesh.num_vertices, -1, dtype=np.int64)
    dof_of[free] = np.arange(len(free))
    return FeSpace(mesh, free, dof_of)


# ---------------------------------------------------------------------------
# coefficient fields


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    @property
    def key(self):
        return ("const", self.value)


@dataclass(frozen=True)
class FourierMode:
    m: int

    @property
    def key(self):
        return ("mode", self.m)


def _phi1(z):
    """(exp(iz) - 1) / (iz) with the removable singularity filled in."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.5
    zb = z[~small]
    out[~small] = (np.exp(1j * zb) - 1.0) / (1j * zb)
    zs = 1j * z[small]
    acc = np.zeros_like(zs)
    term = np.ones_like(zs)
    for n in range(17):
        acc += term / math.factorial(n + 1)
        term = term * zs
    out[small] = acc
    return out


def _simplex_wave(a, b):
    """I(a, b) = integral of exp(i(u a + v b)) over the unit simplex u+v<=1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    swap = np.abs(b) > np.abs(a)
    aa = np.where(swap, b, a)
    bb = np.where(swap, a, b)
    out = np.empty(aa.shape, dtype=complex)

    small = np.abs(aa) < 0.8   # then |bb| < 0.8 as well
    if small.any():
        x, y = aa[small], bb[small]
        acc = np.zeros_like(x, dtype=complex)
        h = np.ones_like(x, dtype=complex)        # homogeneous sums h_n(x, y)
        xn = np.ones_like(x)
        for n in range(22):
            acc += (1j ** n) * h / math.factorial(n + 2)
            xn = xn * x
            h = h * y + xn
        out[small] = acc
    big = ~small
    if big.any():
        x, y = aa[big], bb[big]
        out[big] = (np.exp(1j * x) * _phi1(y - x) - _phi1(y)) / (1j * x)
    return out


def _geometry(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    if np.any(areas <= 0.0):
        raise AssemblyError("degenerate or misoriented element")
    grads = np.empty((len(p), 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        grads[:, i, 0] = -e[:, 1]
        grads[:, i, 1] = e[:, 0]
    grads /= (2.0 * areas)[:, None, None]
    return areas, grads


def _mode_element_means(mesh: Mesh, field: CoefficientField, m: int):
    """Exact element averages of a_m: (1/|T|) int_T a_m dx per triangle.

    Uses cos(s1)cos(s2) = (cos(s1+s2) + cos(s1-s2))/2 and the closed-form
    plane-wave integral over each triangle.
    """
    b1, b2 = mode_frequencies(m)
    p = mesh.vertices[mesh.triangles]
    means = np.zeros(len(p))
    for sign in (1.0, -1.0):
        k = 2.0 * math.pi * np.array([b1, sign * b2])
        theta = p @ k                       # (nt, 3) phases at the vertices
        ival = _simplex_wave(theta[:, 1] - theta[:, 0],
                             theta[:, 2] - theta[:, 0])
        # int_T e^{ik.x} = 2|T| e^{i theta0} I(a, b); divide by |T| later
        means += np.real(np.exp(1j * theta[:, 0]) * ival)
    return field.mode_scale(m) * means      # 2 * (1/2) * mean of the two waves


def element_coefficient_means(mesh: Mesh, coeff, field: CoefficientField):
    if isinstance(coeff, Constant):
        return np.full(mesh.num_triangles, coeff.value)
    if isinstance(coeff, FourierMode):
        return _mode_element_means(mesh, field, coeff.m)
    raise TypeError(f"unsupported coefficient {coeff!r}")


# ---------------------------------------------------------------------------
# stiffness and loads


def _stiffness_coo(mesh: Mesh, elem_vals):
    areas, grads = _geometry(mesh)
    scale = areas * elem_vals
    rows, cols, vals = [], [], []
    t = mesh.triangles
    for i in range(3):
        for j in range(3):
            rows.append(t[:, i])
            cols.append(t[:, j])
            vals.append(scale * (grads[:, i] * grads[:, j]).sum(axis=1))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _restrict(rows, cols, vals, row_space: FeSpace, col_space: FeSpace):
    ri = row_space.dof_of[rows]
    ci = col_space.dof_of[cols]
    keep = (ri >= 0) & (ci >= 0)
    mat = sp.csr_matrix((vals[keep], (ri[keep], ci[keep])),
                        shape=(row_space.ndof, col_space.ndof))
    mat.sum_duplicates()
    return mat


def stiffness(space: FeSpace, coeff, cache: "AssemblyCache"):
    """int_D coeff grad(phi_i).grad(phi_j) on the space's interior dofs."""
    vals = element_coefficient_means(space.mesh, coeff, cache.field)
    rows, cols, data = _stiffness_coo(space.mesh, vals)
    return _restrict(rows, cols, data, space, space)


def cross_stiffness(row_space: FeSpace, col_space: FeSpace, coeff,
                    cache: "AssemblyCache"):
    """Stiffness block between P1 spaces on two meshes of one NVB family."""
    if row_space.mesh.fingerprint == col_space.mesh.fingerprint:
        return stiffness(row_space, coeff, cache)
    overlay, pa, pb = cache.overlay(row_space.mesh, col_space.mesh)
    full = cache.stiffness_full(overlay, coeff)
    cross = (pa.T @ full @ pb).tocsr()
    return cross[row_space.free][:, col_space.free]


def load_constant_one(space: FeSpace):
    areas = space.mesh.areas()
    vec = np.zeros(space.mesh.num_vertices)
    for i in range(3):
        np.add.at(vec, space.mesh.triangles[:, i], areas / 3.0)
    return vec[space.free]


def load_directional(space: FeSpace, region):
    """Entries -int_{T_f} d(phi_i)/dx1, exact by polygon clipping."""
    mesh = space.mesh
    areas, grads = _geometry(mesh)
    poly = np.asarray(region, dtype=float)
    vec = np.zeros(mesh.num_vertices)
    for t in _bbox_candidates(mesh, poly):
        piece = _clip_convex(mesh.vertices[mesh.triangles[t]], poly)
        if piece is None:
            continue
        area = _polygon_area(piece)
        if area <= 0.0:
            continue
        for i in range(3):
            vec[mesh.triangles[t, i]] -= grads[t, i, 0] * area
    return vec[space.free]


def load_rhs(space: FeSpace, rhs: RhsSpec):
    if rhs.kind == "constant_one":
        return load_constant_one(space)
    if rhs.kind == "directional":
        return load_directional(space, rhs.region)
    if rhs.kind == "zero":
        return np.zeros(space.ndof)
    raise ValueError(f"unknown rhs kind {rhs.kind!r}")


# ---------------------------------------------------------------------------
# weight functions (goal functionals)


def _polygon_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_convex(subject, clip_poly):
    """Sutherland-Hodgman clip of a polygon against a convex CCW polygon."""
    pts = [tuple(p) for p in subject]
    n = len(clip_poly)
    for k in range(n):
        if not pts:
            return None
        a = clip_poly[k]
        b = clip_poly[(k + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]

        def inside(p):
            return ex * (p[1] - a[1]) - ey * (p[0] - a[0]) >= -1e-14

        def intersect(p, q):
            dx, dy = q[0] - p[0], q[1] - p[1]
            denom = ex * dy - ey * dx
            t = (ex * (a[1] - p[1]) - ey * (a[0] - p[0])) / denom
            return (p[0] + t * dx, p[1] + t * dy)

        out = []
        for i in range(len(pts)):
            cur, nxt = pts[i], pts[(i + 1) % len(pts)]
            cur_in, nxt_in = inside(cur), inside(nxt)
            if cur_in:
                out.append(cur)
                if not nxt_in:
                    out.append(intersect(cur, nxt))
            elif nxt_in:
                out.append(intersect(cur, nxt))
        pts = out
    if len(pts) < 3:
        return None
    return np.asarray(pts)


def _bbox_candidates(mesh: Mesh, poly):
    p = mesh.vertices[mesh.triangles]
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    mask = ((p[:, :, 0].min(axis=1) <= hi[0]) & (p[:, :, 0].max(axis=1) >= lo[0])
            & (p[:, :, 1].min(axis=1) <= hi[1]) & (p[:, :, 1].max(axis=1) >= lo[1]))
    return np.flatnonzero(mask)


def _barycentric(tri_pts, pts):
    mat = np.array([[tri_pts[1, 0] - tri_pts[0, 0], tri_pts[2, 0] - tri_pts[0, 0]],
                    [tri_pts[1, 1] - tri_pts[0, 1], tri_pts[2, 1] - tri_pts[0, 1]]])
    rhs = (pts - tri_pts[0]).T
    uv = np.linalg.solve(mat, rhs).T
    lam = np.empty((len(pts), 3))
    lam[:, 1] = uv[:, 0]
    lam[:, 2] = uv[:, 1]
    lam[:, 0] = 1.0 - uv.sum(axis=1)
    return lam


def _clip_moments(mesh: Mesh, poly):
    """Per element meeting poly: (tri id, |T cap poly|, int lam_i, int lam_i lam_j).

    First and second moments of the barycentric coordinates over the clipped
    region, exact for the quadratic products via the edge-midpoint rule.
    """
    out = []
    for t in _bbox_candidates(mesh, poly):
        tri_pts = mesh.vertices[mesh.triangles[t]]
        piece = _clip_convex(tri_pts, poly)
        if piece is None:
            continue
        lam = _barycentric(tri_pts, piece)
        first = np.zeros(3)
        second = np.zeros((3, 3))
        area = 0.0
        for k in range(1, len(piece) - 1):
            corners = np.array([lam[0], lam[k], lam[k + 1]])
            sub = np.array([piece[0], piece[k], piece[k + 1]])
            a_sub = _polygon_area(sub)
            mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
            area += a_sub
            first += (a_sub / 3.0) * mids.sum(axis=0)
            second += (a_sub / 3.0) * (mids.T @ mids)
        if area > 1e-300:
            out.append((int(t), area, first, second))
    return out


@dataclass(frozen=True)
class CharacteristicWeight:
    """w = chi_P / |P| for a convex CCW polygon P (normalization optional)."""

    polygon: tuple
    normalized: bool = True

    @property
    def poly_array(self):
        return np.asarray(self.polygon, dtype=float)

    @property
    def scale(self) -> float:
        return 1.0 / abs(_polygon_area(self.poly_array)) if self.normalized else 1.0

    @property
    def key(self):
        return ("char", self.polygon, self.normalized)


class MollifierWeight:
    """Smooth bump on the disk B(x0, r), numerically normalized to unit mass.

    The functional int w(x) v(x) dx is realized as a fixed quadrature point
    set (Gauss in radius, uniform in angle) that is independent of any mesh,
    so its values are exactly invariant under mesh refinement.
    """

    def __init__(self, x0, r, n_radial: int = 64, n_angular: int = 256):
        self.x0 = (float(x0[0]), float(x0[1]))
        self.r = float(r)
        nodes, wts = np.polynomial.legendre.leggauss(n_radial)
        rho = 0.5 * self.r * (nodes + 1.0)
        wr = 0.5 * self.r * wts
        phi = 2.0 * math.pi * np.arange(n_angular) / n_angular
        raw = np.exp(-self.r ** 2 / (self.r ** 2 - rho ** 2))
        ww = np.repeat(raw * rho * wr, n_angular) * (2.0 * math.pi / n_angular)
        xx = self.x0[0] + np.repeat(rho, n_angular) * np.cos(np.tile(phi, n_radial))
        yy = self.x0[1] + np.repeat(rho, n_angular) * np.sin(np.tile(phi, n_radial))
        self.points = np.column_stack([xx, yy])
        self.norm_const = 1.0 / ww.sum()
        self.weights = ww * self.norm_const
        self.key = ("mollifier", self.x0, self.r, n_radial, n_angular)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        d2 = ((x - np.asarray(self.x0)) ** 2).sum(axis=-1)
        out = np.zeros_like(d2)
        inside = d2 < self.r ** 2
        out[inside] = self.norm_const * np.exp(
            -self.r ** 2 / (self.r ** 2 - d2[inside]))
        return out


def mollifier_weight(x0, r) -> MollifierWeight:
    return MollifierWeight(x0, r)


# ---------------------------------------------------------------------------
# weighted operators


def _char_ops_full(mesh: Mesh, weight: CharacteristicWeight):
    """Weighted mass, convection and load on all vertices, exactly clipped."""
    nv = mesh.num_vertices
    _, grads = _geometry(mesh)
    s = weight.scale
    rows, cols, mvals, cvals = [], [], [], []
    load = np.zeros(nv)
    for t, area, first, second in _clip_moments(mesh, weight.poly_array):
        verts = mesh.triangles[t]
        d = grads[t, :, 0] + grads[t, :, 1]
        for i in range(3):
            load[verts[i]] += s * first[i]
            for j in range(3):
                rows.append(verts[i])
                cols.append(verts[j])
                mvals.append(s * second[i, j])
                cvals.append(s * first[i] * d[j])
    if rows:
        rows = np.array(rows)
        cols = np.array(cols)
        mass = sp.csr_matrix((mvals, (rows, cols)), shape=(nv, nv))
        conv = sp.csr_matrix((cvals, (rows, cols)), shape=(nv, nv))
    else:
        mass = sp.csr_matrix((nv, nv))
        conv = sp.csr_matrix((nv, nv))
    return mass, conv, load


def _mollifier_ops_full(mesh: Mesh, weight: MollifierWeight, locator):
    nv = mesh.num_vertices
    tri, lam = locator.locate(weight.points)
    ok = tri >= 0
    if not ok.all():
        raise AssemblyError("mollifier quadrature point outside the mesh")
    verts = mesh.triangles[tri]
    load = np.zeros(nv)
    for i in range(3):
        np.add.at(load, verts[:, i], weight.weights * lam[:, i])
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(verts[:, i])
            cols.append(verts[:, j])
            vals.append(weight.weights * lam[:, i] * lam[:, j])
    mass = sp.csr_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(nv, nv))
    return mass, None, load


def weighted_mass(row_space: FeSpace, col_space: FeSpace, weight,
                  cache: "AssemblyCache"):
    """int w phi_i phi_j between two spaces of one NVB family."""
    if row_space.mesh.fingerprint == col_space.mesh.fingerprint:
        full = cache.weight_ops(row_space.mesh, weight)[0]
        return full[row_space.free][:, col_space.free]
    overlay, pa, pb = cache.overlay(row_space.mesh, col_space.mesh)
    full = cache.weight_ops(overlay, weight)[0]
    return (pa.T @ full @ pb).tocsr()[row_space.free][:, col_space.free]


def weighted_convection(row_space: FeSpace, col_space: FeSpace, weight,
                        cache: "AssemblyCache"):
    """int w phi_i (d1 + d2) phi_j between two spaces of one NVB family."""
    if not isinstance(weight, CharacteristicWeight):
        raise TypeError("convection terms support characteristic weights only")
    if row_space.mesh.fingerprint == col_space.mesh.fingerprint:
        full = cache.weight_ops(row_space.mesh, weight)[1]
        return full[row_space.free][:, col_space.free]
    overlay, pa, pb = cache.overlay(row_space.mesh, col_space.mesh)
    full = cache.weight_ops(overlay, weight)[1]
    return (pa.T @ full @ pb).tocsr()[row_space.free][:, col_space.free]


def weight_load(space: FeSpace, weight, cache: "AssemblyCache"):
    """Load vector of the functional v -> int w v dx."""
    return cache.weight_ops(space.mesh, weight)[2][space.free]


def functional_lw(space: FeSpace, weight, coeffs, cache: "AssemblyCache"):
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.ndof,):
        raise ValueError("coefficient vector does not match the space")
    return float(weight_load(space, weight, cache) @ coeffs)


# ---------------------------------------------------------------------------
# point location


class PointLocator:
    def __init__(self, mesh: Mesh, grid: int = 0):
        self.mesh = mesh
        p = mesh.vertices[mesh.triangles]
        self.lo = mesh.vertices.min(axis=0)
        self.hi = mesh.vertices.max(axis=0)
        if grid <= 0:
            grid = int(np.clip(math.isqrt(mesh.num_triangles) or 1, 4, 256))
        self.grid = grid
        self.cell = (self.hi - self.lo) / grid
        self.cell[self.cell == 0.0] = 1.0
        self.bins = [[] for _ in range(grid * grid)]
        blo = np.clip(((p.min(axis=1) - self.lo) / self.cell).astype(int),
                      0, grid - 1)
        bhi = np.clip(((p.max(axis=1) - self.lo) / self.cell).astype(int),
                      0, grid - 1)
        for t in range(len(p)):
            for gx in range(blo[t, 0], bhi[t, 0] + 1):
                for gy in range(blo[t, 1], bhi[t, 1] + 1):
                    self.bins[gx * grid + gy].append(t)
        # inverse affine maps for vectorized barycentric evaluation
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self._origin = p[:, 0]
        self._inv = np.empty((len(p), 2, 2))
        self._inv[:, 0, 0] = d2[:, 1] / det
        self._inv[:, 0, 1] = -d2[:, 0] / det
        self._inv[:, 1, 0] = -d1[:, 1] / det
        self._inv[:, 1, 1] = d1[:, 0] / det

    def locate(self, points, tol: float = 1e-12):
        points = np.asarray(points, dtype=float)
        nq = len(points)
        tri = np.full(nq, -1, dtype=np.int64)
        lam = np.zeros((nq, 3))
        cells = np.clip(((points - self.lo) / self.cell).astype(int),
                        0, self.grid - 1)
        flat = cells[:, 0] * self.grid + cells[:, 1]
        order = np.argsort(flat, kind="stable")
        starts = np.searchsorted(flat[order], np.unique(flat[order]))
        boundaries = np.append(starts, nq)
        for k in range(len(boundaries) - 1):
            qids = order[boundaries[k]:boundaries[k + 1]]
            open_ids = qids
            for t in self.bins[flat[qids[0]]]:
                if not len(open_ids):
                    break
                rel = points[open_ids] - self._origin[t]
                uv = rel @ self._inv[t].T
                l0 = 1.0 - uv[:, 0] - uv[:, 1]
                ok = (uv[:, 0] >= -tol) & (uv[:, 1] >= -tol) & (l0 >= -tol)
                hit = open_ids[ok]
                tri[hit] = t
                lam[hit, 0] = l0[ok]
                lam[hit, 1] = uv[ok, 0]
                lam[hit, 2] = uv[ok, 1]
                open_ids = open_ids[~ok]
        return tri, lam


# ---------------------------------------------------------------------------
# assembly cache


class AssemblyCache:
    """Memoizes meshes, matrices, factorizations and loads for one problem.

    Keys are mesh content fingerprints, so identical meshes produced at
    different iterations share entries.  Thread safe for the coarse-grained
    pattern used here (concurrent lookups may duplicate work, never corrupt).
    """

    def __init__(self, field: CoefficientField):
        self.field = field
        self._lock = threading.RLock()
        self._store = {}
        self.lu_hits = 0

    def _memo(self, key, fps, builder):
        with self._lock:
            hit = key in self._store
            if hit:
                val = self._store[key][0]
        if hit:
            return val
        val = builder()
        with self._lock:
            self._store[key] = (val, frozenset(fps), frozenset())
        return val

    def retain(self, keep_fps) -> None:
        """Drop cached entries whose input meshes are no longer live.

        Derived meshes (uniform refinements, overlays) of live meshes stay
        live themselves, so entries built on top of them survive too.
        """
        keep = set(keep_fps)
        with self._lock:
            changed = True
            while changed:
                changed = False
                for _, inputs, outputs in self._store.values():
                    if inputs <= keep and not outputs <= keep:
                        keep |= outputs
                        changed = True
            stale = [k for k, (_, inputs, _) in self._store.items()
                     if not inputs <= keep]
            for k in stale:
                del self._store[k]

    # -- meshes and spaces

    def space(self, mesh: Mesh, constrained: bool = True) -> FeSpace:
        return self._memo(("space", mesh.fingerprint, constrained),
                          (mesh.fingerprint,), lambda: fe_space(mesh, constrained))

    def fine_mesh(self, mesh: Mesh):
        """(uniform refinement, nodal prolongation) of a mesh."""
        key = ("fine", mesh.fingerprint)
        with self._lock:
            if key in self._store:
                return self._store[key][0]
        pair = meshmod.uniform_refine_with_map(mesh)
        with self._lock:
            self._store[key] = (pair, frozenset((mesh.fingerprint,)),
                                frozenset((pair[0].fingerprint,)))
        return pair

    def overlay(self, a: Mesh, b: Mesh):
        key = ("overlay", a.fingerprint, b.fingerprint)
        with self._lock:
            if key in self._store:
                return self._store[key][0]
        triple = meshmod.common_refinement(a, b)
        with self._lock:
            self._store[key] = (
                triple, frozenset((a.fingerprint, b.fingerprint)),
                frozenset((triple[0].fingerprint,)))
        return triple

    def locator(self, mesh: Mesh) -> PointLocator:
        return self._memo(("locator", mesh.fingerprint), (mesh.fingerprint,),
                          lambda: PointLocator(mesh))

    # -- matrices and loads

    def stiffness_full(self, mesh: Mesh, coeff):
        def build():
            vals = element_coefficient_means(mesh, coeff, self.field)
            rows, cols, data = _stiffness_coo(mesh, vals)
            mat = sp.csr_matrix((data, (rows, cols)),
                                shape=(mesh.num_vertices, mesh.num_vertices))
            mat.sum_duplicates()
            return mat
        return self._memo(("stiff_full", mesh.fingerprint, coeff.key),
                          (mesh.fingerprint,), build)

    def stiffness_interior(self, space: FeSpace, coeff):
        key = ("stiff_int", space.mesh.fingerprint, coeff.key)
        return self._memo(key, (space.mesh.fingerprint,),
                          lambda: stiffness(space, coeff, self))

    def cross(self, row_space: FeSpace, col_space: FeSpace, coeff):
        key = ("cross", row_space.mesh.fingerprint,
               col_space.mesh.fingerprint, coeff.key)
        return self._memo(
            key, (row_space.mesh.fingerprint, col_space.mesh.fingerprint),
            lambda: cross_stiffness(row_space, col_space, coeff, self))

    def lu(self, space: FeSpace):
        """Cached sparse LU of the mean-field stiffness on the space."""
        key = ("lu", space.mesh.fingerprint)
        with self._lock:
            if key in self._store:
                self.lu_hits += 1
        def build():
            mat = self.stiffness_interior(space, Constant(1.0)).tocsc()
            return spla.splu(mat)
        return self._memo(key, (space.mesh.fingerprint,), build)

    def rhs_load(self, space: FeSpace, rhs: RhsSpec):
        key = ("rhs", space.mesh.fingerprint, rhs.kind, rhs.region)
        return self._memo(key, (space.mesh.fingerprint,),
                          lambda: load_rhs(space, rhs))

    def weight_ops(self, mesh: Mesh, weight):
        """(mass, convection, load) of a weight on all vertices of a mesh."""
        key = ("wops", mesh.fingerprint, weight.key)
        def build():
            if isinstance(weight, CharacteristicWeight):
                return _char_ops_full(mesh, weight)
            if isinstance(weight, MollifierWeight):
                return _mollifier_ops_full(mesh, weight, self.locator(mesh))
            raise TypeError(f"unsupported weight {weight!r}")
        return self._memo(key, (mesh.fingerprint,), build)
