"""Multilevel structures, block Galerkin operators and block vectors.

A multilevel structure pairs a finite index set P with one mesh per active
index (indices outside P implicitly live on the initial mesh T0).  The
associated approximation space is the direct sum over nu in P of
(P1 space on the mesh of nu) x span{P_nu}; its Galerkin matrix is block
sparse with mean-field diagonal blocks and one off-diagonal block per pair
of indices differing by a single increment in a single parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import AssemblyCache, Constant, FourierMode
from .mesh import Mesh, new_interior_vertices, refine_nvb
from .param import DIAGONAL, IndexSet, MultiIndex, coupling_weight, detail_set


class StructureError(Exception):
    pass


@dataclass(frozen=True)
class MultilevelStructure:
    index_set: IndexSet
    meshes: dict                      # MultiIndex -> Mesh, for nu in P
    t0: Mesh

    def __post_init__(self):
        missing = [nu for nu in self.index_set if nu not in self.meshes]
        if missing:
            raise StructureError(f"missing meshes for {missing}")

    @classmethod
    def initial(cls, t0: Mesh) -> "MultilevelStructure":
        zero = MultiIndex.zero()
        return cls(IndexSet([zero]), {zero: t0}, t0)

    def mesh(self, nu: MultiIndex) -> Mesh:
        return self.meshes.get(nu, self.t0)

    def spaces(self, cache: AssemblyCache):
        return [cache.space(self.mesh(nu)) for nu in self.index_set]

    def dim(self, cache: AssemblyCache) -> int:
        return sum(s.ndof for s in self.spaces(cache))

    def detail_indices(self):
        return detail_set(self.index_set)

    def fingerprint_key(self):
        return tuple((nu, self.mesh(nu).fingerprint) for nu in self.index_set)


@dataclass
class MlFunction:
    """Block coefficient vector, one P1 coefficient block per active index."""

    structure: MultilevelStructure
    blocks: list                      # aligned with structure.index_set

    @classmethod
    def zeros(cls, structure: MultilevelStructure, cache: AssemblyCache):
        return cls(structure, [np.zeros(s.ndof) for s in structure.spaces(cache)])

    def block(self, nu: MultiIndex):
        pos = self.structure.index_set.pos.get(nu)
        return None if pos is None else self.blocks[pos]

    def copy(self) -> "MlFunction":
        return MlFunction(self.structure, [b.copy() for b in self.blocks])

    def concatenated(self):
        return np.concatenate(self.blocks) if self.blocks else np.zeros(0)


def block_dot(xs, ys) -> float:
    return float(sum(np.dot(x, y) for x, y in zip(xs, ys)))


class BlockOperator:
    """Symmetric block-sparse Galerkin matrix of the parametric form B.

    Only structurally nonzero blocks are stored: the mean-field diagonal and
    the single-mode couplings; pairs without coupling are absent.
    """

    def __init__(self, structure: MultilevelStructure, spaces, blocks):
        self.structure = structure
        self.spaces = spaces
        self.blocks = blocks          # (i, j) -> csr matrix
        self.dims = [s.ndof for s in spaces]

    @property
    def total_dim(self) -> int:
        return sum(self.dims)

    def apply(self, xs):
        ys = [np.zeros(n) for n in self.dims]
        for (i, j), mat in self.blocks.items():
            ys[i] += mat @ xs[j]
        return ys

    def quadratic_form(self, xs) -> float:
        return block_dot(xs, self.apply(xs))

    def to_dense(self):
        n = self.total_dim
        out = np.zeros((n, n))
        offs = np.concatenate([[0], np.cumsum(self.dims)])
        for (i, j), mat in self.blocks.items():
            out[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = mat.toarray()
        return out


def build_operator(structure: MultilevelStructure,
                   cache: AssemblyCache) -> BlockOperator:
    """Assemble the Galerkin matrix of B on the structure's space."""
    indices = structure.index_set.indices
    spaces = structure.spaces(cache)
    blocks = {}
    for i, nu in enumerate(indices):
        blocks[(i, i)] = cache.stiffness_interior(spaces[i], Constant(1.0))
        for j in range(i + 1, len(indices)):
            cw = coupling_weight(nu, indices[j])
            if cw is None or cw is DIAGONAL:
                continue
            m, weight = cw
            mat = weight * cache.cross(spaces[i], spaces[j], FourierMode(m))
            blocks[(i, j)] = mat
            blocks[(j, i)] = mat.T.tocsr()
    return BlockOperator(structure, spaces, blocks)


def enriched_structure(structure: MultilevelStructure,
                       cache: AssemblyCache) -> MultilevelStructure:
    """Uniformly refined meshes for active indices plus all detail indices."""
    meshes = {}
    for nu in structure.index_set:
        meshes[nu] = cache.fine_mesh(structure.mesh(nu))[0]
    for nu in structure.detail_indices():
        meshes[nu] = structure.t0
    pset = structure.index_set.union(structure.detail_indices())
    return MultilevelStructure(pset, meshes, structure.t0)


def refine_structure(structure: MultilevelStructure, marked_indices,
                     marked_vertices) -> MultilevelStructure:
    """One multilevel refinement step.

    ``marked_indices`` is a subset of the detail set; ``marked_vertices``
    maps active indices to subsets of their two-level vertices.
    """
    details = set(structure.detail_indices())
    for nu in marked_indices:
        if nu not in details:
            raise StructureError(f"{nu} is not in the detail set")
    meshes = {}
    for nu in structure.index_set:
        marks = np.asarray(marked_vertices.get(nu, ()), dtype=np.int64)
        if len(marks):
            allowed = set(new_interior_vertices(structure.mesh(nu)).tolist())
            if not set(marks.tolist()) <= allowed:
                raise StructureError(f"marked vertices for {nu} are not in N+")
        meshes[nu] = refine_nvb(structure.mesh(nu), marks)
    for nu in marked_indices:
        meshes[nu] = structure.t0
    pset = structure.index_set.union(marked_indices)
    return MultilevelStructure(pset, meshes, structure.t0)


def embed(func: MlFunction, target: MultilevelStructure,
          cache: AssemblyCache) -> MlFunction:
    """Represent a function on a refined structure (same values pointwise)."""
    src = func.structure
    if not set(src.index_set.indices) <= set(target.index_set.indices):
        raise StructureError("target does not contain the source index set")
    out = MlFunction.zeros(target, cache)
    for nu in src.index_set:
        src_mesh = src.mesh(nu)
        dst_mesh = target.mesh(nu)
        src_space = cache.space(src_mesh)
        dst_space = cache.space(dst_mesh)
        if src_mesh.fingerprint == dst_mesh.fingerprint:
            vec = func.block(nu)
        else:
            overlay, pa, pb = cache.overlay(src_mesh, dst_mesh)
            if overlay.num_vertices != dst_mesh.num_vertices:
                raise StructureError("target structure does not refine source")
            # pb is then a permutation between the two vertex numberings
            prol = (pb.T @ pa)[dst_space.free][:, src_space.free]
            vec = prol @ func.block(nu)
        out.blocks[target.index_set.pos[nu]] = np.asarray(vec)
    return out
