"""Linear heat dynamics under moment constraints.

The operator is never discretized from its strong form.  It is defined
variationally: on the constrained grid space V = {f : Bf = 0} the image Af
is characterized by (Af | h)_metric = (f | h)_L2 for every test h in V.
Constraints are kept as explicit quadrature rows and imposed through
Lagrange multipliers, so the same assembly serves every constraint kind.

The strong form -u'' + potential_coefficient(u) (1-x)^(n-2), with a point
mass correction for the unconstrained-mass cases, is computed independently
and used purely as a cross-check of the variational construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg

from .dual import ConstraintSpace, DualElement, as_dual, dual_inner, zero_mass_embed
from .errors import NumericalError
from .grid import (
    GridFunction,
    Polynomial,
    grid_points,
    poly_to_grid,
    second_derivative,
    trapezoid_weights,
)
from .moments import moment, moment_weight_row


def endpoint_values(f):
    if isinstance(f, Polynomial):
        return f(Fraction(0)), f(Fraction(1))
    return float(f.values[0]), float(f.values[-1])


def potential_coefficient(f, n: int):
    """Strength of the induced potential along (1-x)^(n-2).

    Equal to (n-1)(2n-1) f(0) - (n-1)^2 (2n-1) mu_{n-2}(f) for n >= 2 and
    identically zero for n = 1, the only index without induced potential.
    """
    if n < 1:
        raise ValueError("index must be positive")
    if n == 1:
        return Fraction(0) if isinstance(f, Polynomial) else 0.0
    f0, _ = endpoint_values(f)
    return (n - 1) * (2 * n - 1) * f0 - (n - 1) ** 2 * (2 * n - 1) * moment(f, n - 2)


@dataclass(frozen=True)
class AtomCoefficient:
    """Point-mass coefficient for the unconstrained-mass cases.

    ``endpoint_ok`` reports whether the residual endpoint condition holds;
    it is only binding when the constraint space is the whole plane, where
    the orthogonality condition over-determines the coefficient.
    """

    value: float
    endpoint_ok: bool


def atom_coefficient(f0: float, f1: float, space: ConstraintSpace,
                     endpoint_tol: float = 1e-9) -> AtomCoefficient:
    """Coefficient c fixed by (c + f(1), f(0) - f(1)) lying in Y-perp."""
    if space.kind == "line":
        return AtomCoefficient(-f1 - space.slope * (f0 - f1), True)
    if space.kind == "full":
        return AtomCoefficient(-f1, bool(abs(f0 - f1) <= endpoint_tol))
    raise ValueError("atom coefficient only applies to line or full constraints")


def integration_by_parts_residual(u, h, n: int) -> float:
    """|LHS - RHS| of the pairing identity for second derivatives.

    LHS pairs the zero-mass embedding of u'' with h in the n-metric; RHS is
    -(u|h)_L2 plus a 3-vector of endpoint and moment data of u against
    (mu_0, mu_1, mu_n) of h.  Exact inputs give an exact zero; grid inputs
    close to O(h^2).
    """
    if n < 1:
        raise ValueError("index must be positive")
    exact = isinstance(u, Polynomial)
    if exact != isinstance(h, Polynomial):
        raise TypeError("operands must share a representation")
    upp = u.derivative().derivative() if exact else second_derivative(u)
    lhs = dual_inner(zero_mass_embed(upp), as_dual(h), n)
    u0, u1 = endpoint_values(u)
    mu_tail = moment(u, n - 2) if n >= 2 else 0
    coeff = [
        u1,
        n * u0 - n * (n - 1) * mu_tail,
        (1 - n) * u0 - u1 + n * (n - 1) * mu_tail,
    ]
    data = [moment(h, 0), moment(h, 1), moment(h, n)]
    if exact:
        rhs = -(u * h).definite_integral()
    else:
        w = trapezoid_weights(u.n_points)
        rhs = -float(w @ (u.values * h.values))
    rhs = rhs + sum(a * b for a, b in zip(coeff, data))
    return abs(float(lhs - rhs))


def _cumulative_matrix(n_points: int) -> np.ndarray:
    """Matrix form of the running trapezoid integral."""
    h = 1.0 / (n_points - 1)
    c = h * np.tril(np.ones((n_points, n_points)), -1)
    c[:, 0] *= 0.5
    c += (h / 2.0) * np.eye(n_points)
    c[0, :] = 0.0
    return c


@dataclass
class OperatorAssembly:
    """Discrete forms for one (n, constraint space, grid) combination.

    ``metric`` is the Gram matrix of the ambient dual inner product on grid
    values, ``weights`` carries the L2 form, and ``constraints`` holds the
    moment rows whose kernel is the admissible subspace.
    """

    n: int
    space: ConstraintSpace
    n_points: int
    x: np.ndarray
    weights: np.ndarray
    metric: np.ndarray
    constraints: np.ndarray
    _null_basis: np.ndarray | None = field(default=None, repr=False)
    _eig: tuple | None = field(default=None, repr=False)
    _step_cache: dict = field(default_factory=dict, repr=False)

    def null_basis(self) -> np.ndarray:
        if self._null_basis is None:
            if self.constraints.shape[0] == 0:
                self._null_basis = np.eye(self.n_points)
            else:
                self._null_basis = scipy.linalg.null_space(self.constraints)
        return self._null_basis

    def eigensystem(self):
        """Constrained generalized eigensystem, cached.

        Solved as (metric) v = mu (L2) v on the admissible subspace, whose
        reversed reciprocals are the operator eigenvalues; this orientation
        keeps the well-conditioned L2 form on the factorized side.
        """
        if self._eig is None:
            z = self.null_basis()
            gz = z.T @ self.metric @ z
            wz = z.T @ (self.weights[:, None] * z)
            gz = 0.5 * (gz + gz.T)
            wz = 0.5 * (wz + wz.T)
            try:
                mu, vec = scipy.linalg.eigh(gz, wz)
            except scipy.linalg.LinAlgError as exc:
                raise NumericalError(f"eigensolver failed: {exc}") from exc
            lam = 1.0 / mu[::-1]
            vec = vec[:, ::-1]
            self._eig = (lam, vec, z, wz)
        return self._eig

    def metric_norm_sq(self, values: np.ndarray) -> float:
        return float(values @ self.metric @ values)

    def l2_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float((self.weights * a) @ b)


def assemble_operator(n: int, space: ConstraintSpace,
                      n_points: int) -> OperatorAssembly:
    """Build the discrete metric, L2 form, and constraint rows."""
    if n < 1:
        raise ValueError("index must be positive")
    if n_points < 17:
        raise ValueError("at least 17 grid points required")
    x = grid_points(n_points)
    w = trapezoid_weights(n_points)
    mn = moment_weight_row(n, n_points)
    cmat = _cumulative_matrix(n_points)
    centered = cmat - np.outer(np.ones(n_points), mn)
    metric = centered.T @ (w[:, None] * centered)
    m0 = moment_weight_row(0, n_points)
    metric += np.outer(m0, m0)
    metric = 0.5 * (metric + metric.T)
    rows = space.constraint_rows(n, n_points)
    asm = OperatorAssembly(n=n, space=space, n_points=n_points, x=x,
                           weights=w, metric=metric, constraints=rows)
    return asm


def spectrum(asm: OperatorAssembly, k: int) -> np.ndarray:
    """The k smallest eigenvalues of the constrained operator, ascending."""
    if k < 1:
        raise ValueError("need at least one eigenvalue")
    lam = asm.eigensystem()[0]
    if k > lam.size:
        raise ValueError("fewer modes than requested")
    return lam[:k].copy()


def _potential_row(n: int, n_points: int) -> np.ndarray:
    """Row vector g with g @ f = potential_coefficient(f, n) on the grid."""
    if n == 1:
        return np.zeros(n_points)
    row = -(n - 1) ** 2 * (2 * n - 1) * moment_weight_row(n - 2, n_points)
    row[0] += (n - 1) * (2 * n - 1)
    return row


def _potential_metric_rep(n: int, n_points: int) -> np.ndarray:
    """Grid functional h -> (embedded weight polynomial | h)_metric.

    For n >= 2 the pairing of the embedded (1-x)^(n-2) against h in the
    n-metric collapses to n/((n-1)(2n-1)) (mu_1(h) - mu_n(h)).
    """
    if n == 1:
        return np.zeros(n_points)
    scale = n / ((n - 1) * (2 * n - 1))
    return scale * (moment_weight_row(1, n_points) - moment_weight_row(n, n_points))


def heat_step(asm: OperatorAssembly, u: GridFunction, dt: float,
              scheme: str = "implicit_euler", eta: float = 1.0) -> GridFunction:
    """Advance the constrained heat semigroup by one step of length dt.

    ``implicit_euler`` solves the saddle system (metric/dt + L2 form) with
    the constraint rows as multipliers.  ``eta`` scales the induced
    potential inside the generator: 1 is the variational operator, 0 is the
    bare heat equation under the same moment conditions; values other than
    1 add a rank-one nonsymmetric coupling.  ``exponential`` applies the
    exact matrix exponential through the cached eigensystem and requires
    eta = 1.
    """
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    if scheme == "exponential":
        if eta != 1.0:
            raise ValueError("exponential stepping only covers the variational operator")
        lam, vec, z, wz = asm.eigensystem()
        q = z.T @ u.values
        coeff = vec.T @ (wz @ q)
        damped = np.exp(-lam * dt) * coeff
        return GridFunction(z @ (vec @ damped))
    if scheme != "implicit_euler":
        raise ValueError(f"unknown scheme {scheme!r}")
    key = (float(dt), float(eta))
    cached = asm._step_cache.get(key)
    n_pts, n_con = asm.n_points, asm.constraints.shape[0]
    if cached is None:
        system = asm.metric / dt + np.diag(asm.weights)
        if eta != 1.0:
            system += (eta - 1.0) * np.outer(
                _potential_metric_rep(asm.n, n_pts), _potential_row(asm.n, n_pts))
        kkt = np.zeros((n_pts + n_con, n_pts + n_con))
        kkt[:n_pts, :n_pts] = system
        kkt[:n_pts, n_pts:] = asm.constraints.T
        kkt[n_pts:, :n_pts] = asm.constraints
        try:
            cached = scipy.linalg.lu_factor(kkt)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"singular step system: {exc}") from exc
        asm._step_cache[key] = cached
    rhs = np.zeros(n_pts + n_con)
    rhs[:n_pts] = asm.metric @ u.values / dt
    sol = scipy.linalg.lu_solve(cached, rhs)
    out = GridFunction(sol[:n_pts])
    violation = asm.space.violation(out, asm.n)
    if violation > 1e-8 * max(1.0, float(np.max(np.abs(out.values)))):
        raise NumericalError(f"constraint drift {violation:.3e} after step")
    return out


def strong_apply(u: GridFunction, n: int, space: ConstraintSpace,
                 constraint_tol: float | None = None) -> DualElement:
    """Strong-form image: -u'' plus the induced potential, mass-balanced.

    For the unconstrained-mass spaces the point mass additionally carries
    the orthogonality coefficient.  This is the diagnostic counterpart of
    the variational operator; agreement between the two is a consistency
    check, not a definition.  Inputs must satisfy the moment constraints,
    by default to within 100 h^2 (the quadrature moments of an exactly
    admissible smooth function are themselves only O(h^2) small).
    """
    if constraint_tol is None:
        constraint_tol = 100.0 * u.spacing ** 2
    violation = space.violation(u, n)
    if violation > constraint_tol:
        raise ValueError(f"input violates moment constraints by {violation:.3e}")
    image = -1.0 * second_derivative(u)
    if n >= 2:
        gamma = potential_coefficient(u, n)
        weight = (1.0 - grid_points(u.n_points)) ** (n - 2)
        image = GridFunction(image.values + gamma * weight)
    out = zero_mass_embed(image)
    if space.kind in ("line", "full"):
        u0, u1 = endpoint_values(u)
        c = atom_coefficient(u0, u1, space).value
        out = DualElement(out.regular, out.atom - c)
    return out


def weak_strong_residual(u: Polynomial, tests, n: int, space: ConstraintSpace,
                         n_points: int) -> float:
    """Worst weak-form gap between the strong image and the L2 pairing.

    Both u and the test functions are exact polynomials admissible for the
    constraint space, evaluated on the grid; the gap decays at the scheme
    order O(h^2) under refinement.
    """
    ug = poly_to_grid(u, n_points)
    w = trapezoid_weights(n_points)
    image = strong_apply(ug, n, space)
    worst = 0.0
    for h in tests:
        hg = poly_to_grid(h, n_points)
        lhs = dual_inner(image, as_dual(hg), n)
        rhs = float(w @ (ug.values * hg.values))
        worst = max(worst, abs(lhs - rhs))
    return worst


def regularity_residuals(u: GridFunction, n: int) -> tuple:
    """Moments (mu_0, mu_n) of u'' minus the induced potential term.

    Smooth states reached by the constrained flow at positive times
    annihilate both moments; on the grid the residuals decay at O(h^2).
    """
    work = second_derivative(u)
    if n >= 2:
        gamma = potential_coefficient(u, n)
        weight = (1.0 - grid_points(u.n_points)) ** (n - 2)
        work = GridFunction(work.values - gamma * weight)
    return float(moment(work, 0)), float(moment(work, n))


def atom_consistency_residual(before: GridFunction, mid: GridFunction,
                              after: GridFunction, dt: float, n: int,
                              space: ConstraintSpace) -> float:
    """Gap in the orthogonality condition fixing the point-mass coefficient.

    Along the flow the total mass evolves at exactly the point-mass
    coefficient, so a central difference of the mass over three consecutive
    states reconstructs it independently of the endpoint formula.  The
    reconstruction is then inserted into the orthogonality condition; flow
    states at positive times satisfy it to discretization error.  (A direct
    second-difference reconstruction is useless here: the grid image of the
    operator mimics the point mass with a boundary spike.)
    """
    if space.kind not in ("line", "full"):
        raise ValueError("only line or full constraints carry a point mass")
    mass = moment_weight_row(0, mid.n_points)
    c_hat = float(mass @ (after.values - before.values)) / (2.0 * dt)
    u0, u1 = endpoint_values(mid)
    first = c_hat + u1
    second = u0 - u1
    if space.kind == "line":
        return abs(first + space.slope * second)
    return max(abs(first), abs(second))


