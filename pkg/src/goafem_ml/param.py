"""Multi-index bookkeeping and orthonormal Legendre polynomials.

Parametric discretizations are indexed by finitely supported multi-indices
nu = (nu_1, nu_2, ...) with nu_m in N_0, stored sparsely as (m, nu_m) pairs
with all stored entries >= 1.  Univariate polynomials are orthonormal with
respect to the uniform probability measure dy/2 on [-1, 1]; tensorized
products P_nu over the support of nu form the parametric basis.
"""

from __future__ import annotations

import math
from functools import total_ordering

import numpy as np

#: sentinel returned by :func:`coupling_weight` when nu == mu
DIAGONAL = "diagonal"


@total_ordering
class MultiIndex:
    """Finitely supported sequence of nonnegative integers.

    Immutable and hashable.  Ordering is graded lexicographic: indices are
    compared first by total degree, then position by position with larger
    leading entries first, so e.g. (1) < (0,1) < (2) < (1,1) < (0,2).
    """

    __slots__ = ("_items", "_key")

    def __init__(self, items=()):
        data = []
        for m, v in items:
            m, v = int(m), int(v)
            if v == 0:
                continue
            if m < 1 or v < 0:
                raise ValueError(f"invalid multi-index entry ({m}, {v})")
            data.append((m, v))
        data.sort()
        if len({m for m, _ in data}) != len(data):
            raise ValueError("duplicate parameter positions")
        self._items = tuple(data)
        max_m = self._items[-1][0] if self._items else 0
        dense = self.dense(max_m)
        self._key = (self.degree(), tuple(-v for v in dense), self._items)

    @classmethod
    def zero(cls) -> "MultiIndex":
        return cls(())

    @classmethod
    def unit(cls, m: int) -> "MultiIndex":
        return cls(((m, 1),))

    @property
    def items(self):
        return self._items

    def degree(self) -> int:
        return sum(v for _, v in self._items)

    def support(self):
        return tuple(m for m, _ in self._items)

    def max_param(self) -> int:
        return self._items[-1][0] if self._items else 0

    def __getitem__(self, m: int) -> int:
        for mm, v in self._items:
            if mm == m:
                return v
        return 0

    def dense(self, upto: int):
        """Entries (nu_1, ..., nu_upto) as a tuple."""
        out = [0] * upto
        for m, v in self._items:
            if m <= upto:
                out[m - 1] = v
        return tuple(out)

    def plus(self, m: int) -> "MultiIndex":
        return MultiIndex(tuple((mm, v) for mm, v in self._items if mm != m)
                          + ((m, self[m] + 1),))

    def minus(self, m: int):
        """nu - e_m, or None if the result would have a negative entry."""
        if self[m] == 0:
            return None
        return MultiIndex(tuple((mm, v) for mm, v in self._items if mm != m)
                          + ((m, self[m] - 1),))

    def __eq__(self, other):
        return isinstance(other, MultiIndex) and self._items == other._items

    def __lt__(self, other):
        return self._key < other._key

    def __hash__(self):
        return hash(self._items)

    def __repr__(self):
        return f"MultiIndex({self._items!r})"

    def __str__(self):
        return format_index(self)


def format_index(nu: MultiIndex, width: int = 0) -> str:
    """Render nu as "(0)", "(1)", "(0,1)", ... up to max(width, max support)."""
    upto = max(width, nu.max_param(), 1)
    return "(" + ",".join(str(v) for v in nu.dense(upto)) + ")"


class IndexSet:
    """Ordered finite set of multi-indices containing the zero index.

    Iteration order is the canonical graded-lexicographic order, which fixes
    the block layout of all derived linear algebra.
    """

    def __init__(self, indices):
        idx = sorted(set(indices))
        if MultiIndex.zero() not in idx:
            raise ValueError("index sets must contain the zero index")
        self.indices = tuple(idx)
        self.pos = {nu: i for i, nu in enumerate(self.indices)}
        supp = set()
        for nu in self.indices:
            supp.update(nu.support())
        self.support = tuple(sorted(supp))

    @property
    def num_active(self) -> int:
        """Number of active parameters M_P = #supp(P)."""
        return len(self.support)

    def __contains__(self, nu) -> bool:
        return nu in self.pos

    def __iter__(self):
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __eq__(self, other):
        return isinstance(other, IndexSet) and self.indices == other.indices

    def __hash__(self):
        return hash(self.indices)

    def union(self, more) -> "IndexSet":
        return IndexSet(self.indices + tuple(more))

    def __repr__(self):
        width = max((nu.max_param() for nu in self.indices), default=1)
        inner = ", ".join(format_index(nu, width) for nu in self.indices)
        return "{" + inner + "}"


def detail_set(pset: IndexSet):
    """Candidate enrichment indices one increment away from the active set.

    Q = { mu not in P : mu = nu +- e_m, nu in P, 1 <= m <= M_P + 1 },
    where entries of mu stay nonnegative.  Returned as a sorted tuple.
    """
    out = set()
    for nu in pset:
        for m in range(1, pset.num_active + 2):
            up = nu.plus(m)
            if up not in pset:
                out.add(up)
            down = nu.minus(m)
            if down is not None and down not in pset:
                out.add(down)
    return tuple(sorted(out))


def legendre_eval(n: int, y):
    """Value of the n-th Legendre polynomial orthonormal w.r.t. dy/2.

    Three-term recurrence in orthonormal form,
    y*P_n = c_{n+1} P_{n+1} + c_n P_{n-1} with c_n = n/sqrt(4n^2-1).
    """
    if n < 0:
        raise ValueError("degree must be nonnegative")
    y = np.asarray(y, dtype=float)
    p_prev = np.ones_like(y)
    if n == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = math.sqrt(3.0) * y
    for k in range(1, n):
        p, p_prev = (y * p - coupling_coeff(k) * p_prev) / coupling_coeff(k + 1), p
    return p if p.ndim else float(p)


def eval_tensor_poly(nu: MultiIndex, y) -> float:
    """P_nu(y) for a parameter vector y (indexed from parameter 1)."""
    y = np.asarray(y, dtype=float)
    val = 1.0
    for m, v in nu.items:
        val *= legendre_eval(v, y[m - 1])
    return val


def coupling_coeff(n: int) -> float:
    """Recurrence coefficient c_n = n / sqrt(4n^2 - 1), n >= 1."""
    if n < 1:
        raise ValueError("coupling coefficient requires n >= 1")
    return n / math.sqrt(4.0 * n * n - 1.0)


def coupling_weight(nu: MultiIndex, mu: MultiIndex):
    """Coupling of test/trial indices through a single parameter factor y_m.

    Returns (m, c) if mu = nu +- e_m for exactly one m, where c is the value
    of the integral of y_m P_{nu_m} P_{mu_m} d(pi_m); DIAGONAL if nu == mu
    (only the mean-field term couples, the odd moment vanishes); None if the
    indices differ in more than one position or by more than one increment.
    """
    if nu == mu:
        return DIAGONAL
    keys = set(nu.support()) | set(mu.support())
    diff = [(m, mu[m] - nu[m]) for m in sorted(keys) if mu[m] != nu[m]]
    if len(diff) != 1 or abs(diff[0][1]) != 1:
        return None
    m, step = diff[0]
    n = max(nu[m], mu[m])
    return m, coupling_coeff(n)
