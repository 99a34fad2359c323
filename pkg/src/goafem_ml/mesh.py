"""Conforming 2D triangle meshes with newest-vertex-bisection refinement.

Triangles are stored as vertex triples (v0, v1, v2) with the refinement edge
(v0, v1), i.e. opposite the newest vertex v2, and counterclockwise
orientation.  Bisection of (a, b, c) at the midpoint m of (a, b) produces the
children (c, a, m) and (b, c, m), whose refinement edges are the remaining
original edges; three successive bisections therefore split an element into
four, with new vertices at all three edge midpoints.

Meshes are immutable after construction; every refinement returns a new mesh
together with the P1 nodal prolongation from parent to child vertices.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
import scipy.sparse as sp


class MeshError(Exception):
    """Structural mesh failure (non-conforming input, wrong family, ...)."""


class ConfigurationError(Exception):
    """Unsupported mesh/domain configuration request."""


class Mesh:
    def __init__(self, vertices, triangles, boundary, generation=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary = np.ascontiguousarray(boundary, dtype=bool)
        if generation is None:
            generation = np.zeros(len(self.triangles), dtype=np.int64)
        self.generation = np.ascontiguousarray(generation, dtype=np.int64)
        for arr in (self.vertices, self.triangles, self.boundary, self.generation):
            arr.flags.writeable = False
        self._fingerprint = None
        self._edge_data = None

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def fingerprint(self) -> str:
        """Content hash; equal meshes (same arrays) share cache entries."""
        if self._fingerprint is None:
            h = hashlib.sha1()
            h.update(self.vertices.tobytes())
            h.update(self.triangles.tobytes())
            h.update(self.boundary.tobytes())
            self._fingerprint = h.hexdigest()
        return self._fingerprint

    def __repr__(self):
        return f"Mesh({self.num_vertices} vertices, {self.num_triangles} triangles)"

    def areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle(self) -> float:
        p = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
            dot = (u * v).sum(axis=1)
            angles.append(np.arctan2(np.abs(cross), dot))
        return float(np.min(angles))

    def edge_table(self):
        """Edges as sorted vertex pairs plus per-triangle edge ids.

        Returns (edges (ne,2), tri_edges (nt,3), counts (ne,)) where
        tri_edges[:, 0] is the refinement edge (v0, v1), then (v1, v2),
        (v2, v0).  counts is the number of adjacent triangles per edge.
        """
        if self._edge_data is None:
            t = self.triangles
            raw = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            lo = raw.min(axis=1)
            hi = raw.max(axis=1)
            keys, inverse, counts = np.unique(
                lo * np.int64(self.num_vertices) + hi,
                return_inverse=True, return_counts=True)
            edges = np.column_stack([keys // self.num_vertices,
                                     keys % self.num_vertices])
            tri_edges = inverse.reshape(3, -1).T
            self._edge_data = (edges, np.ascontiguousarray(tri_edges), counts)
        return self._edge_data


def _orient_longest_edge_first(vertices, triangles):
    """Rotate vertex triples so the longest edge is (v0, v1).

    Used only on initial meshes (the NVB convention fixes all descendants).
    Ties are broken toward the earlier edge slot, deterministically.
    """
    p = vertices[triangles]
    lens = np.stack([
        ((p[:, 1] - p[:, 0]) ** 2).sum(axis=1),
        ((p[:, 2] - p[:, 1]) ** 2).sum(axis=1),
        ((p[:, 0] - p[:, 2]) ** 2).sum(axis=1),
    ], axis=1)
    which = np.argmax(lens, axis=1)
    out = triangles.copy()
    out[which == 1] = triangles[which == 1][:, [1, 2, 0]]
    out[which == 2] = triangles[which == 2][:, [2, 0, 1]]
    return out


def _boundary_from_edges(nv, triangles):
    raw = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                          triangles[:, [2, 0]]])
    raw = np.sort(raw, axis=1)
    edges, counts = np.unique(raw, axis=0, return_counts=True)
    flags = np.zeros(nv, dtype=bool)
    flags[edges[counts == 1].ravel()] = True
    return flags


def refine_edges(mesh: Mesh, marked_edge_mask):
    """Bisect all triangles needed so every marked edge gets its midpoint.

    Performs NVB closure (a triangle with any marked edge must first bisect
    its refinement edge) and then one to three bisections per triangle.
    Returns (refined mesh, prolongation) where the prolongation is the
    (nv_new x nv_old) sparse P1 interpolation matrix on all vertices.

    New vertices are appended in ascending order of their parent edge id,
    which makes the construction reproducible and lets uniform refinement
    double as the enumeration of two-level vertices.
    """
    edges, tri_edges, counts = mesh.edge_table()
    marked = np.array(marked_edge_mask, dtype=bool, copy=True)
    if marked.shape != (len(edges),):
        raise ValueError("marked mask must have one entry per edge")
    if not marked.any():
        ident = sp.identity(mesh.num_vertices, format="csr")
        return mesh, ident

    # closure: the refinement edge of any touched triangle must be marked
    ref_edge = tri_edges[:, 0]
    while True:
        touched = marked[tri_edges].any(axis=1)
        need = touched & ~marked[ref_edge]
        if not need.any():
            break
        marked[ref_edge[need]] = True

    nv = mesh.num_vertices
    marked_ids = np.flatnonzero(marked)
    new_of_edge = np.full(len(edges), -1, dtype=np.int64)
    new_of_edge[marked_ids] = nv + np.arange(len(marked_ids))

    new_coords = 0.5 * (mesh.vertices[edges[marked_ids, 0]]
                        + mesh.vertices[edges[marked_ids, 1]])
    new_boundary = counts[marked_ids] == 1

    a, b, c = mesh.triangles.T
    m_ab = new_of_edge[tri_edges[:, 0]]
    m_bc = new_of_edge[tri_edges[:, 1]]
    m_ca = new_of_edge[tri_edges[:, 2]]
    has = marked[tri_edges]
    gen = mesh.generation

    chunks = []  # (parent ids, triangles, generations)

    keep = ~has.any(axis=1)
    if keep.any():
        ids = np.flatnonzero(keep)
        chunks.append((ids, mesh.triangles[keep], gen[keep]))

    def emit(mask, tris, bumps):
        ids = np.flatnonzero(mask)
        if not len(ids):
            return
        for tri, bump in zip(tris, bumps):
            chunks.append((ids, np.stack(tri, axis=1), gen[mask] + bump))

    only_r = has[:, 0] & ~has[:, 1] & ~has[:, 2]
    emit(only_r,
         [(c[only_r], a[only_r], m_ab[only_r]),
          (b[only_r], c[only_r], m_ab[only_r])],
         [1, 1])

    r_e1 = has[:, 0] & has[:, 1] & ~has[:, 2]
    emit(r_e1,
         [(c[r_e1], a[r_e1], m_ab[r_e1]),
          (m_ab[r_e1], b[r_e1], m_bc[r_e1]),
          (c[r_e1], m_ab[r_e1], m_bc[r_e1])],
         [1, 2, 2])

    r_e2 = has[:, 0] & ~has[:, 1] & has[:, 2]
    emit(r_e2,
         [(m_ab[r_e2], c[r_e2], m_ca[r_e2]),
          (a[r_e2], m_ab[r_e2], m_ca[r_e2]),
          (b[r_e2], c[r_e2], m_ab[r_e2])],
         [2, 2, 1])

    full = has.all(axis=1)
    emit(full,
         [(m_ab[full], c[full], m_ca[full]),
          (a[full], m_ab[full], m_ca[full]),
          (m_ab[full], b[full], m_bc[full]),
          (c[full], m_ab[full], m_bc[full])],
         [2, 2, 2, 2])

    parent = np.concatenate([ch[0] for ch in chunks])
    tris = np.concatenate([ch[1] for ch in chunks])
    gens = np.concatenate([ch[2] for ch in chunks])
    order = np.argsort(parent, kind="stable")

    vertices = np.concatenate([mesh.vertices, new_coords])
    boundary = np.concatenate([mesh.boundary, new_boundary])
    refined = Mesh(vertices, tris[order], boundary, gens[order])

    rows = np.concatenate([np.arange(nv),
                           nv + np.arange(len(marked_ids)),
                           nv + np.arange(len(marked_ids))])
    cols = np.concatenate([np.arange(nv),
                           edges[marked_ids, 0], edges[marked_ids, 1]])
    vals = np.concatenate([np.ones(nv), np.full(2 * len(marked_ids), 0.5)])
    prol = sp.csr_matrix((vals, (rows, cols)), shape=(len(vertices), nv))
    return refined, prol


def uniform_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four (three successive bisections)."""
    refined, _ = uniform_refine_with_map(mesh)
    return refined


def uniform_refine_with_map(mesh: Mesh):
    edges, _, _ = mesh.edge_table()
    return refine_edges(mesh, np.ones(len(edges), dtype=bool))


def new_interior_vertices(mesh: Mesh):
    """Vertex ids (in the uniform refinement) of new interior vertices.

    These are the midpoints of interior edges; by the enumeration rule of
    :func:`refine_edges`, interior edge number e becomes fine vertex
    ``mesh.num_vertices + e``.
    """
    edges, _, counts = mesh.edge_table()
    return mesh.num_vertices + np.flatnonzero(counts == 2)


def refine_nvb(mesh: Mesh, marked_vertices) -> Mesh:
    """Coarsest conforming NVB refinement containing the marked new vertices.

    ``marked_vertices`` are ids from :func:`new_interior_vertices`.  Marking
    nothing returns the identical mesh object; marking all of them returns
    the uniform refinement.
    """
    marked_vertices = np.asarray(marked_vertices, dtype=np.int64)
    edges, _, counts = mesh.edge_table()
    if len(marked_vertices) == 0:
        return mesh
    edge_ids = marked_vertices - mesh.num_vertices
    if edge_ids.min() < 0 or edge_ids.max() >= len(edges):
        raise ValueError("marked vertex is not a two-level vertex of this mesh")
    if np.any(counts[edge_ids] != 2):
        raise ValueError("marked vertex lies on the boundary")
    mask = np.zeros(len(edges), dtype=bool)
    mask[edge_ids] = True
    refined, _ = refine_edges(mesh, mask)
    return refined


def _rows_view(arr):
    """View an (n, 2) float array as records for exact row membership tests."""
    a = np.ascontiguousarray(arr)
    return a.view([("x", a.dtype), ("y", a.dtype)]).ravel()


def common_refinement(a: Mesh, b: Mesh):
    """Coarsest mesh refining both inputs, with P1 maps from each input.

    Both meshes must belong to the same NVB family; midpoint coordinates are
    then bitwise identical on both sides, so vertices can be matched exactly.
    Returns (overlay, prol_a, prol_b) with prol_* mapping nodal values on the
    input to nodal values on the overlay.
    """
    if a.fingerprint == b.fingerprint:
        ident = sp.identity(a.num_vertices, format="csr")
        return a, ident, ident

    prol_a = sp.identity(a.num_vertices, format="csr")
    prol_b = sp.identity(b.num_vertices, format="csr")
    for _ in range(1000):
        progress = False
        for which in ("a", "b"):
            mesh, other = (a, b) if which == "a" else (b, a)
            edges, _, _ = mesh.edge_table()
            mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            # same-family midpoints agree bitwise, so exact matching is safe
            mask = np.isin(_rows_view(mids), _rows_view(other.vertices))
            if mask.any():
                refined, prol = refine_edges(mesh, mask)
                if which == "a":
                    a, prol_a = refined, prol @ prol_a
                else:
                    b, prol_b = refined, prol @ prol_b
                progress = True
        if not progress:
            break
    else:
        raise MeshError("common refinement did not stabilize")

    if a.num_vertices != b.num_vertices:
        raise MeshError("meshes are not from the same NVB family")
    va = _rows_view(a.vertices)
    vb = _rows_view(b.vertices)
    order_a = np.argsort(va)
    slot = np.searchsorted(va, vb, sorter=order_a)
    if slot.max() >= len(va):
        raise MeshError("meshes are not from the same NVB family")
    perm = order_a[slot]
    if not np.array_equal(va[perm], vb):
        raise MeshError("meshes are not from the same NVB family")

    def tri_keys(tris):
        s = np.sort(tris, axis=1).astype(np.int64)
        nv = a.num_vertices
        return np.sort((s[:, 0] * nv + s[:, 1]) * nv + s[:, 2])

    if not np.array_equal(tri_keys(a.triangles), tri_keys(perm[b.triangles])):
        raise MeshError("vertex-complete meshes disagree; not one NVB family")

    reindex = sp.csr_matrix(
        (np.ones(b.num_vertices), (perm, np.arange(b.num_vertices))),
        shape=(a.num_vertices, b.num_vertices))
    return a, prol_a, reindex @ prol_b


def _grid_mesh(x0, y0, n, h, keep_cell):
    """Criss-cross pattern over an n x n cell grid, cells filtered by mask.

    Each kept cell is split along its (0,0)-(1,1) diagonal; the diagonal is
    the refinement edge of both halves (longest-edge convention).
    """
    vid = np.full((n + 1, n + 1), -1, dtype=np.int64)
    coords = []
    tris = []
    for j in range(n):
        for i in range(n):
            if not keep_cell(i, j):
                continue
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            ids = []
            for (ci, cj) in corners:
                if vid[ci, cj] < 0:
                    vid[ci, cj] = len(coords)
                    coords.append((x0 + ci * h, y0 + cj * h))
                ids.append(vid[ci, cj])
            p00, p10, p11, p01 = ids
            tris.append((p11, p00, p10))
            tris.append((p00, p11, p01))
    vertices = np.array(coords, dtype=float)
    triangles = np.array(tris, dtype=np.int64)
    boundary = _boundary_from_edges(len(vertices), triangles)
    return Mesh(vertices, triangles, boundary)


def initial_mesh(domain: str, target_count: int, slit_delta: float = 0.005) -> Mesh:
    """Structured initial mesh of right-angled triangles for a named domain.

    Supported domains: "unit_square" (0,1)^2, "l_shaped"
    (-1,1)^2 \\ (-1,0]^2, and "slit", the square (-1,1)^2 minus the thin
    triangle conv{(0,0), (-1,delta), (-1,-delta)} that regularizes the slit
    along the negative x-axis.
    """
    if domain == "unit_square":
        n = math.isqrt(target_count // 2)
        if 2 * n * n != target_count or n < 1:
            raise ConfigurationError(
                f"unit square needs 2*n^2 triangles, got {target_count}")
        return _grid_mesh(0.0, 0.0, n, 1.0 / n, lambda i, j: True)

    if domain == "l_shaped":
        if target_count % 6 != 0:
            raise ConfigurationError(
                f"L-shape needs 6*k^2 triangles, got {target_count}")
        n2 = 2 * target_count // 3
        n = math.isqrt(n2)
        if n * n != n2 or n % 2 != 0:
            raise ConfigurationError(
                f"L-shape needs 6*k^2 triangles on an even grid, got {target_count}")
        half = n // 2
        return _grid_mesh(-1.0, -1.0, n, 2.0 / n,
                          lambda i, j: not (i < half and j < half))

    if domain == "slit":
        n = math.isqrt(target_count // 2)
        if 2 * n * n != target_count or n % 2 != 0:
            raise ConfigurationError(
                f"slit domain needs 2*n^2 triangles on an even grid, got {target_count}")
        base = _grid_mesh(-1.0, -1.0, n, 2.0 / n, lambda i, j: True)
        return _open_slit(base, slit_delta)

    raise ConfigurationError(f"unknown domain {domain!r}")


def _open_slit(mesh: Mesh, delta: float) -> Mesh:
    """Duplicate vertices along y=0, x<0 and shear them onto the slit faces."""
    vertices = np.array(mesh.vertices)
    triangles = np.array(mesh.triangles)
    on_slit = np.flatnonzero((np.abs(vertices[:, 1]) == 0.0)
                             & (vertices[:, 0] < 0.0))
    if len(on_slit) == 0:
        raise ConfigurationError("slit line is not resolved by the grid")
    twin = {}
    extra = []
    for v in on_slit:
        twin[v] = len(vertices) + len(extra)
        extra.append(vertices[v])
    vertices = np.vstack([vertices, np.array(extra)])

    centroids_y = vertices[triangles].mean(axis=1)[:, 1]
    for t in range(len(triangles)):
        if centroids_y[t] <= 0.0:
            continue
        for k in range(3):
            vt = twin.get(triangles[t, k])
            if vt is not None:
                triangles[t, k] = vt

    for v, vt in twin.items():
        x = vertices[v, 0]
        vertices[vt, 1] = -delta * x   # upper face, y = -delta*x > 0
        vertices[v, 1] = delta * x     # lower face
    triangles = _orient_longest_edge_first(vertices, triangles)
    boundary = _boundary_from_edges(len(vertices), triangles)
    return Mesh(vertices, triangles, boundary)


def write_dump(mesh: Mesh, path) -> None:
    """Plain-text mesh dump: "nv nt", vertex lines, triangle lines."""
    with open(path, "w") as f:
        f.write(f"{mesh.num_vertices} {mesh.num_triangles}\n")
        for (x, y), flag in zip(mesh.vertices, mesh.boundary):
            f.write(f"{float(x)!r} {float(y)!r} {int(flag)}\n")
        for t in mesh.triangles:
            f.write(f"{t[0]} {t[1]} {t[2]}\n")


def read_dump(path) -> Mesh:
    """Read a mesh dump (generation info is not stored in dumps)."""
    with open(path) as f:
        nv, nt = map(int, f.readline().split())
        vertices = np.empty((nv, 2))
        boundary = np.empty(nv, dtype=bool)
        for i in range(nv):
            x, y, flag = f.readline().split()
            vertices[i] = (float(x), float(y))
            boundary[i] = bool(int(flag))
        triangles = np.empty((nt, 3), dtype=np.int64)
        for i in range(nt):
            triangles[i] = list(map(int, f.readline().split()))
    return Mesh(vertices, triangles, boundary)
