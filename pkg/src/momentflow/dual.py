"""Dual-space elements, constraint subspaces, and the equivalent metrics.

A ``DualElement`` models a distribution made of a density plus a scalar
point mass at x = 1.  The point mass is invisible to every moment of
positive order and to the centered primitive, but carries total mass, which
is exactly what is needed to identify zero-mass dual elements with ordinary
densities: ``zero_mass_embed`` attaches the balancing atom -mu_0(g).

The family of inner products

    (u | v)_n = int_0^1 Pu Pv dx + mass(u) mass(v),

with P the n-centered primitive of the density part, are mutually
equivalent; any of them realizes the ambient Hilbert metric in which the
diffusion flows of this package are gradient flows.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .grid import GridFunction, Polynomial, trapezoid_weights
from .moments import (
    centered_primitive,
    moment,
    moment_weight_row,
    random_polynomial,
)


@dataclass(frozen=True)
class DualElement:
    """Density part plus the coefficient of the point mass at x = 1."""

    regular: GridFunction | Polynomial
    atom: float | Fraction = 0

    def kind(self) -> type:
        return type(self.regular)


def as_dual(u) -> DualElement:
    if isinstance(u, DualElement):
        return u
    return DualElement(u, 0)


def total_mass(u: DualElement | GridFunction | Polynomial):
    """mu_0 including the atom; the atom contributes only at order zero."""
    u = as_dual(u)
    return moment(u.regular, 0) + u.atom


def dual_moment(u: DualElement | GridFunction | Polynomial, n: int):
    """mu_n of a dual element; the atom at 1 drops out for n >= 1."""
    u = as_dual(u)
    mn = moment(u.regular, n)
    return mn + u.atom if n == 0 else mn


def zero_mass_embed(g: GridFunction | Polynomial) -> DualElement:
    """Attach the balancing atom so that the result has zero total mass.

    This is the inverse of the identification that drops the atom; the minus
    sign is the unique choice making the total mass vanish.
    """
    return DualElement(g, -moment(g, 0))


def rebalance(u: DualElement) -> DualElement:
    """Replace the atom by the balancing one; idempotent."""
    return zero_mass_embed(u.regular)


def dual_inner(u, v, n: int):
    """(u | v)_n; exact when both density parts are polynomials."""
    u, v = as_dual(u), as_dual(v)
    pu = centered_primitive(u.regular, n)
    pv = centered_primitive(v.regular, n)
    if isinstance(pu, Polynomial) and isinstance(pv, Polynomial):
        return (pu * pv).definite_integral() + total_mass(u) * total_mass(v)
    if isinstance(pu, Polynomial) or isinstance(pv, Polynomial):
        raise TypeError("mixing exact and grid operands is not supported")
    w = trapezoid_weights(pu.n_points)
    return float(w @ (pu.values * pv.values)) + total_mass(u) * total_mass(v)


def dual_norm_sq(u, n: int):
    return dual_inner(u, u, n)


_KINDS = ("zero_zero", "zero_free", "line", "full")


@dataclass(frozen=True)
class ConstraintSpace:
    """Admissible subspace for the pair (mu_0, mu_n).

    The four canonical forms are both moments pinned to zero
    (``zero_zero``), only the mass pinned (``zero_free``), a proportionality
    mu_n = slope * mu_0 (``line``), and no constraint at all (``full``).
    """

    kind: str
    slope: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "line":
            if self.slope is None or not np.isfinite(self.slope):
                raise ValueError("line constraints need a finite slope")
        elif self.slope is not None:
            raise ValueError("slope only applies to line constraints")

    @classmethod
    def zero_zero(cls) -> "ConstraintSpace":
        return cls("zero_zero")

    @classmethod
    def zero_free(cls) -> "ConstraintSpace":
        return cls("zero_free")

    @classmethod
    def line(cls, slope: float) -> "ConstraintSpace":
        return cls("line", float(slope))

    @classmethod
    def full(cls) -> "ConstraintSpace":
        return cls("full")

    @property
    def forces_zero_mass(self) -> bool:
        return self.kind in ("zero_zero", "zero_free")

    @property
    def n_constraints(self) -> int:
        return {"zero_zero": 2, "zero_free": 1, "line": 1, "full": 0}[self.kind]

    def constraint_rows(self, n: int, n_points: int) -> np.ndarray:
        """Quadrature functionals whose kernel is the admissible grid space."""
        m0 = moment_weight_row(0, n_points)
        mn = moment_weight_row(n, n_points)
        if self.kind == "zero_zero":
            return np.stack([m0, mn])
        if self.kind == "zero_free":
            return m0[None, :]
        if self.kind == "line":
            return (mn - self.slope * m0)[None, :]
        return np.empty((0, n_points))

    def violation(self, f: GridFunction, n: int) -> float:
        rows = self.constraint_rows(n, f.n_points)
        if rows.size == 0:
            return 0.0
        return float(np.max(np.abs(rows @ f.values)))

    def label(self) -> str:
        if self.kind == "line":
            return f"line(slope={self.slope:g})"
        return self.kind


def norm_equivalence_report(samples: int, n_list, seed: int = 0,
                            degree: int = 6) -> dict:
    """Sample the ratio of the n-metric norm to the reference n = 1 norm.

    Random integer-coefficient polynomials (embedded with zero total mass)
    probe the equivalence constants empirically; the report records the
    observed extremes for each n.  No reference values exist to assert
    against, so the numbers are informational.
    """
    if samples < 1:
        raise ValueError("at least one sample required")
    rng = np.random.default_rng(seed)
    report = {}
    for n in n_list:
        ratios = []
        while len(ratios) < samples:
            u = zero_mass_embed(random_polynomial(rng, degree))
            base = dual_norm_sq(u, 1)
            if base == 0:
                continue
            ratios.append(float(dual_norm_sq(u, n) / base) ** 0.5)
        report[int(n)] = {"min": min(ratios), "max": max(ratios),
                          "samples": samples}
    return report


def interpolation_constant_probe(n: int, samples: int, seed: int = 0,
                                 degree: int = 6) -> float:
    """Empirical maximum of |mu_n(g)|^2 / (||g||_L2 ||g||_dual).

    The dual norm is the n = 1 member of the equivalent family, used as the
    fixed reference metric.  The probe only certifies finiteness; the actual
    constant depends on the chosen equivalent norm.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    while count < samples:
        g = random_polynomial(rng, degree)
        l2 = float((g * g).definite_integral()) ** 0.5
        if l2 == 0.0:
            continue
        dual = float(dual_norm_sq(as_dual(g), 1)) ** 0.5
        ratio = float(moment(g, n)) ** 2 / (l2 * dual)
        worst = max(worst, ratio)
        count += 1
    return worst
