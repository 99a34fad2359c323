"""Parametric diffusion coefficient and per-setup problem data.

The diffusion coefficient is a(x, y) = a0 + sum_m y_m a_m(x) with a0 = 1 and
planar Fourier modes a_m(x) = A m^-2 cos(2 pi b1(m) x1) cos(2 pi b2(m) x2) of
increasing total order.  With A < 1/zeta(2) the series is uniformly dominated
by tau = A zeta(2) < 1, which gives the ellipticity constants
lambda = 1 - tau and Lambda = 1 + tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ZETA2 = math.pi ** 2 / 6.0


def mode_frequencies(m: int):
    """Wave numbers (b1, b2) of the m-th Fourier mode, m >= 1."""
    if m < 1:
        raise ValueError("mode index must be >= 1 (a0 is handled separately)")
    k = (math.isqrt(8 * m + 1) - 1) // 2   # largest k with k(k+1)/2 <= m
    b1 = m - k * (k + 1) // 2
    return b1, k - b1


@dataclass(frozen=True)
class CoefficientField:
    """Affine-parametric coefficient with amplitude A, a0 constant one."""

    amplitude: float = 0.9 / ZETA2
    a0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.amplitude < 1.0 / ZETA2:
            raise ValueError("amplitude must lie in (0, 1/zeta(2))")

    @property
    def tau(self) -> float:
        return self.amplitude * ZETA2

    @property
    def ellipticity(self) -> float:
        return 1.0 - self.tau

    @property
    def continuity(self) -> float:
        return 1.0 + self.tau

    def mode_scale(self, m: int) -> float:
        return self.amplitude / float(m * m)

    def eval_mode(self, m: int, x):
        """Pointwise value of a_m; x is (..., 2)."""
        b1, b2 = mode_frequencies(m)
        x = np.asarray(x, dtype=float)
        return (self.mode_scale(m)
                * np.cos(2.0 * math.pi * b1 * x[..., 0])
                * np.cos(2.0 * math.pi * b2 * x[..., 1]))


def eval_am(field: CoefficientField, m: int, x):
    return field.eval_mode(m, x)


@dataclass(frozen=True)
class RhsSpec:
    """Right-hand side: constant one, or -int_{region} d v/d x1 over a triangle.

    The extra "zero" kind (no load at all) exists for degenerate-problem
    tests; the experimental setups use only the other two.
    """

    kind: str                      # "constant_one" | "directional" | "zero"
    region: tuple = ()             # triangle vertices for "directional"


#: triangle carrying the directional-derivative load of setup 3
T_F = ((0.0, 0.0), (0.5, 0.0), (0.0, 0.5))


def rhs_load_spec(setup: int) -> RhsSpec:
    if setup in (1, 2, 4):
        return RhsSpec("constant_one")
    if setup == 3:
        return RhsSpec("directional", T_F)
    raise ValueError(f"unknown setup {setup}")


@dataclass(frozen=True)
class ProblemSpec:
    domain: str
    initial_triangles: int
    rhs: RhsSpec
    coefficient: CoefficientField

    @property
    def lam(self) -> float:
        return self.coefficient.ellipticity

    @property
    def Lam(self) -> float:
        return self.coefficient.continuity


_DOMAINS = {1: ("unit_square", 512), 2: ("l_shaped", 384),
            3: ("unit_square", 512), 4: ("slit", 512)}


def problem_for_setup(setup: int) -> ProblemSpec:
    if setup not in _DOMAINS:
        raise ValueError(f"unknown setup {setup}")
    domain, count = _DOMAINS[setup]
    return ProblemSpec(domain, count, rhs_load_spec(setup), CoefficientField())
