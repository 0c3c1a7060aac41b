"""Gradient flow of the L^p energy in the constrained dual metric.

Each time step is a proximal (implicit Euler) step: the next state
minimizes (1/p) int |f|^p + 1/(2 dt) ||f - u||^2 in the ambient metric over
grid functions satisfying the moment constraints.  Proximal stepping is the
discrete counterpart of the subdifferential flow of a convex lower
semicontinuous energy, so descent, contraction in the metric, and the
convexity of t -> ||u(t)||_p^p are inherited structurally rather than
imposed.  For p > 2 this realizes a porous-medium-type flow, for p in
(1, 2) a fast-diffusion-type flow, and p = 2 reproduces the linear heat
semigroup, which doubles as a cross-module oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from .dual import ConstraintSpace
from .errors import NumericalError
from .grid import GridFunction, Polynomial, one_minus_x_power, quadrature, trapezoid_weights
from .heat import OperatorAssembly, assemble_operator
from .moments import moment, moment_weight_row


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of one nonlinear flow run."""

    p: float
    n: int
    space: ConstraintSpace
    n_points: int = 513
    dt: float = 1e-3
    t_final: float = 5.0
    # stationarity tolerance of the proximal solve, relative to the
    # amplitude of the step's input data
    prox_tol: float = 1e-9
    eps_reg: float = 1e-8
    newton_max_iter: int = 60

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError("the flow is defined for exponents p > 1 only")
        if self.n < 1:
            raise ValueError("moment index must be positive")
        if self.n_points < 17:
            raise ValueError("at least 17 grid points required")
        if self.dt <= 0.0 or self.t_final <= 0.0:
            raise ValueError("time step and horizon must be positive")
        if self.prox_tol <= 0.0:
            raise ValueError("proximal tolerance must be positive")
        if self.eps_reg < 0.0:
            raise ValueError("regularization must be nonnegative")


@dataclass(frozen=True)
class FlowRecord:
    """One time-step snapshot of the monitored quantities."""

    t: float
    mu0: float
    mu1: float
    mun: float
    lp_energy: float
    hy_norm_sq: float
    dissipation_residual: float

    def as_row(self) -> tuple:
        return (self.t, self.mu0, self.mu1, self.mun, self.lp_energy,
                self.hy_norm_sq, self.dissipation_residual)


CSV_HEADER = "t,mu0,mu1,mun,lp_energy,hy_norm_sq,dissipation_residual"


@dataclass
class FlowResult:
    config: FlowConfig
    records: list
    final: GridFunction
    states: np.ndarray | None = None


def energy(f: GridFunction, p: float) -> float:
    """(1/p) int |f|^p by the shared quadrature."""
    if not p > 1.0:
        raise ValueError("exponent must exceed 1")
    return float(trapezoid_weights(f.n_points) @ np.abs(f.values) ** p) / p


def _density_gradient(values: np.ndarray, p: float, eps: float) -> np.ndarray:
    if p >= 2.0 or eps == 0.0:
        return np.abs(values) ** (p - 2.0) * values if p != 2.0 else values.copy()
    return values * (values ** 2 + eps ** 2) ** ((p - 2.0) / 2.0)


def _density_curvature(values: np.ndarray, p: float, eps: float) -> np.ndarray:
    if p >= 2.0 or eps == 0.0:
        return (p - 1.0) * np.abs(values) ** (p - 2.0)
    s = values ** 2 + eps ** 2
    return s ** ((p - 4.0) / 2.0) * ((p - 1.0) * values ** 2 + eps ** 2)


def energy_gradient(f: GridFunction, p: float, eps_reg: float = 0.0) -> GridFunction:
    """Pointwise density |f|^(p-2) f of the energy derivative.

    For p < 2 the modulus is smoothed through sqrt(f^2 + eps^2) so the
    density stays differentiable across zeros; eps_reg = 0 gives the exact
    density.
    """
    if not p > 1.0:
        raise ValueError("exponent must exceed 1")
    return GridFunction(_density_gradient(f.values, p, eps_reg))


class _NewtonFailure(Exception):
    pass


def _newton_prox(u_prev: np.ndarray, asm: OperatorAssembly, p: float,
                 dt: float, eps: float, tol: float, max_iter: int,
                 warm: np.ndarray) -> np.ndarray:
    """Damped Newton on the KKT system of the constrained proximal problem.

    Stationarity is tested with the least-squares multiplier before any
    factorization, so a converged warm start costs no dense solve.  The
    tolerance is relative to the data amplitude; an iteration that stops
    making progress above it fails rather than burning the budget.
    """
    w = asm.weights
    n_pts = asm.n_points
    rows = asm.constraints
    n_con = rows.shape[0]
    g_over_dt = asm.metric / dt
    gram_inv = np.linalg.inv(rows @ rows.T) if n_con else None
    diag = np.arange(n_pts)
    tol = tol * max(1.0, float(np.max(np.abs(u_prev))))

    def stationarity(grad, feas):
        if n_con:
            multipliers = -gram_inv @ (rows @ grad)
            res = grad + rows.T @ multipliers
        else:
            res = grad
        return max(float(np.max(np.abs(res))), float(np.max(np.abs(feas))) if n_con else 0.0)

    f = warm.copy()
    kkt = np.empty((n_pts + n_con, n_pts + n_con))
    kkt[n_pts:, n_pts:] = 0.0
    kkt[:n_pts, n_pts:] = rows.T
    kkt[n_pts:, :n_pts] = rows
    best = np.inf
    stalled = 0
    for _ in range(max_iter):
        grad = w * _density_gradient(f, p, eps) + g_over_dt @ (f - u_prev)
        feas = rows @ f if n_con else np.zeros(0)
        measure = stationarity(grad, feas)
        if measure <= tol:
            return f
        if measure >= 0.9 * best:
            stalled += 1
            if stalled >= 5:
                raise _NewtonFailure(f"stalled at residual {measure:.3e}")
        else:
            stalled = 0
            best = measure
        kkt[:n_pts, :n_pts] = g_over_dt
        kkt[diag, diag] += w * _density_curvature(f, p, eps)
        rhs = np.concatenate([-grad, -feas])
        try:
            lu = scipy.linalg.lu_factor(kkt, check_finite=False)
            sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise _NewtonFailure(str(exc)) from exc
        step = sol[:n_pts]

        def directional(scale):
            trial = f + scale * step
            g_trial = w * _density_gradient(trial, p, eps) + \
                g_over_dt @ (trial - u_prev)
            return float(g_trial @ step)

        # the objective is convex along the step: the full step is safe
        # whenever the slope stays nonpositive, otherwise bisect the slope
        # to the one-dimensional minimizer
        if directional(1.0) <= 0.0:
            scale = 1.0
        else:
            lo, hi = 0.0, 1.0
            for _ in range(40):
                midpoint = 0.5 * (lo + hi)
                if directional(midpoint) <= 0.0:
                    lo = midpoint
                else:
                    hi = midpoint
            scale = 0.5 * (lo + hi)
            if scale <= 0.0:
                raise _NewtonFailure("line search stalled")
        f = f + scale * step
    raise _NewtonFailure("no convergence within iteration budget")


def prox_step(u_prev: GridFunction, cfg: FlowConfig,
              asm: OperatorAssembly | None = None,
              warm: GridFunction | None = None) -> GridFunction:
    """One proximal step of length cfg.dt from u_prev.

    On Newton failure with p < 2 the regularization is first relaxed and
    re-tightened as a continuation; if that fails too, the step is retried
    once as two half steps before giving up.
    """
    asm = asm if asm is not None else assemble_operator(cfg.n, cfg.space,
                                                        cfg.n_points)
    start = (warm if warm is not None else u_prev).values
    try:
        out = _prox_values(u_prev.values, cfg, asm, cfg.dt, start)
    except _NewtonFailure:
        try:
            mid = _prox_values(u_prev.values, cfg, asm, cfg.dt / 2.0, start)
            out = _prox_values(mid, cfg, asm, cfg.dt / 2.0, mid)
        except _NewtonFailure as exc:
            raise NumericalError(
                f"proximal solve failed (p={cfg.p}, dt={cfg.dt}): {exc}") from exc
    return GridFunction(out)


def _prox_values(u_prev: np.ndarray, cfg: FlowConfig, asm: OperatorAssembly,
                 dt: float, warm: np.ndarray) -> np.ndarray:
    try:
        return _newton_prox(u_prev, asm, cfg.p, dt, cfg.eps_reg,
                            cfg.prox_tol, cfg.newton_max_iter, warm)
    except _NewtonFailure:
        if cfg.p >= 2.0:
            raise
        # continuation: solve with heavier smoothing, anneal back down
        eps = 1e-2
        state = warm.copy()
        while eps > cfg.eps_reg:
            state = _newton_prox(u_prev, asm, cfg.p, dt, eps,
                                 max(cfg.prox_tol, eps * 1e-4),
                                 cfg.newton_max_iter, state)
            eps *= 0.1
        return _newton_prox(u_prev, asm, cfg.p, dt, cfg.eps_reg,
                            cfg.prox_tol, cfg.newton_max_iter, state)


def _make_record(t: float, values: np.ndarray, cfg: FlowConfig,
                 asm: OperatorAssembly, prev_half_norm: float | None,
                 dt: float) -> FlowRecord:
    gf = GridFunction(values)
    v = asm.metric_norm_sq(values)
    lp = energy(gf, cfg.p)
    if prev_half_norm is None:
        residual = 0.0
    else:
        residual = abs((0.5 * v - prev_half_norm) / dt + cfg.p * lp)
    return FlowRecord(
        t=t,
        mu0=float(moment_weight_row(0, cfg.n_points) @ values),
        mu1=float(moment_weight_row(1, cfg.n_points) @ values),
        mun=float(moment_weight_row(cfg.n, cfg.n_points) @ values),
        lp_energy=lp,
        hy_norm_sq=v,
        dissipation_residual=residual,
    )


def run_flow(u0: GridFunction, cfg: FlowConfig,
             asm: OperatorAssembly | None = None,
             store_states: bool = False) -> FlowResult:
    """Advance the flow to t_final, recording one snapshot per step.

    The dissipation residual of step k compares the discrete derivative of
    half the squared metric norm with -p times the energy at the step's end
    state; it vanishes at first order in dt for the exact identity.
    """
    asm = asm if asm is not None else assemble_operator(cfg.n, cfg.space,
                                                        cfg.n_points)
    if u0.n_points != cfg.n_points:
        raise ValueError("initial data lives on the wrong grid")
    drift = cfg.space.violation(u0, cfg.n)
    if drift > 1e-7:
        raise ValueError(
            f"initial data violates constraints by {drift:.3e}; project it first")
    records = [_make_record(0.0, u0.values, cfg, asm, None, cfg.dt)]
    states = [u0.values.copy()] if store_states else None
    state = u0
    previous = u0
    steps = int(round(cfg.t_final / cfg.dt))
    half_norm = 0.5 * records[0].hy_norm_sq
    for k in range(1, steps + 1):
        # linear extrapolation stays feasible and warm-starts the Newton solve
        warm = GridFunction(2.0 * state.values - previous.values)
        previous = state
        state = prox_step(state, cfg, asm, warm=warm)
        rec = _make_record(k * cfg.dt, state.values, cfg, asm, half_norm, cfg.dt)
        half_norm = 0.5 * rec.hy_norm_sq
        records.append(rec)
        if states is not None:
            states.append(state.values.copy())
    return FlowResult(config=cfg, records=records, final=state,
                      states=np.array(states) if states is not None else None)


def run_linear_flow(u0: GridFunction, cfg: FlowConfig,
                    asm: OperatorAssembly | None = None,
                    scheme: str = "implicit_euler", eta: float = 1.0,
                    store_states: bool = False) -> FlowResult:
    """Advance the linear (p = 2) semigroup, recording the same snapshots.

    This path steps through the dedicated saddle-point solver of the linear
    module rather than the proximal Newton loop, so it serves as the
    independent oracle for the p = 2 nonlinear flow.
    """
    from .heat import heat_step

    if cfg.p != 2.0:
        raise ValueError("the linear path is the p = 2 flow")
    asm = asm if asm is not None else assemble_operator(cfg.n, cfg.space,
                                                        cfg.n_points)
    records = [_make_record(0.0, u0.values, cfg, asm, None, cfg.dt)]
    states = [u0.values.copy()] if store_states else None
    state = u0
    steps = int(round(cfg.t_final / cfg.dt))
    half_norm = 0.5 * records[0].hy_norm_sq
    for k in range(1, steps + 1):
        state = heat_step(asm, state, cfg.dt, scheme=scheme, eta=eta)
        rec = _make_record(k * cfg.dt, state.values, cfg, asm, half_norm, cfg.dt)
        half_norm = 0.5 * rec.hy_norm_sq
        records.append(rec)
        if states is not None:
            states.append(state.values.copy())
    return FlowResult(config=cfg, records=records, final=state,
                      states=np.array(states) if states is not None else None)


def project_admissible(f, n: int, space: ConstraintSpace):
    """Shift f by a combination of 1 and (1-x)^n into the admissible set.

    Polynomial inputs are corrected exactly; grid inputs use the shared
    quadrature moments, so the projected moments vanish to rounding error.
    """
    if space.kind == "full":
        return f
    if isinstance(f, Polynomial):
        return _project_poly(f, n, space)
    return _project_grid(f, n, space)


def _project_poly(f: Polynomial, n: int, space: ConstraintSpace) -> Polynomial:
    from fractions import Fraction

    wn = one_minus_x_power(n)
    if space.kind == "zero_free":
        return f - Polynomial.constant(moment(f, 0))
    if space.kind == "zero_zero":
        from .moments import _fraction_solve

        gram = [[Fraction(1), Fraction(1, n + 1)],
                [Fraction(1, n + 1), Fraction(1, 2 * n + 1)]]
        a, b = _fraction_solve(gram, [moment(f, 0), moment(f, n)])
        return f - Polynomial.constant(a) - b * wn
    slope = Fraction(space.slope)
    residual = moment(f, n) - slope * moment(f, 0)
    coeff_const = Fraction(1, n + 1) - slope
    coeff_wn = Fraction(1, 2 * n + 1) - slope * Fraction(1, n + 1)
    if abs(coeff_const) >= abs(coeff_wn):
        return f - Polynomial.constant(residual / coeff_const)
    return f - (residual / coeff_wn) * wn


def _project_grid(f: GridFunction, n: int, space: ConstraintSpace) -> GridFunction:
    m0 = moment_weight_row(0, f.n_points)
    mn = moment_weight_row(n, f.n_points)
    ones = np.ones(f.n_points)
    wn_vals = (1.0 - np.linspace(0.0, 1.0, f.n_points)) ** n
    if space.kind == "zero_free":
        return GridFunction(f.values - float(m0 @ f.values) * ones)
    if space.kind == "zero_zero":
        gram = np.array([[m0 @ ones, m0 @ wn_vals], [mn @ ones, mn @ wn_vals]])
        a, b = np.linalg.solve(gram, np.array([m0 @ f.values, mn @ f.values]))
        return GridFunction(f.values - a * ones - b * wn_vals)
    row = mn - space.slope * m0
    residual = float(row @ f.values)
    coeff_const = float(row @ ones)
    coeff_wn = float(row @ wn_vals)
    if abs(coeff_const) >= abs(coeff_wn):
        return GridFunction(f.values - (residual / coeff_const) * ones)
    return GridFunction(f.values - (residual / coeff_wn) * wn_vals)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares decay fit over the tail window of a run."""

    model: str
    rate: float
    r_squared: float
    intercept: float
    t_lo: float
    t_hi: float
    n_used: int


def fit_decay(records, model: str, window: tuple | None = None,
              floor: float = 1e-28, min_points: int = 20) -> DecayFit:
    """Fit the squared-norm decay over the tail window.

    ``polynomial`` fits log v against log t and reports the slope;
    ``exponential`` fits log v against t and reports the positive rate.
    The window defaults to the second half of the run and is truncated at
    the first sample at or below the floor, before underflow pollutes the
    logarithms.
    """
    if model not in ("polynomial", "exponential"):
        raise ValueError(f"unknown decay model {model!r}")
    t = np.array([r.t for r in records])
    v = np.array([r.hy_norm_sq for r in records])
    below = np.nonzero(v <= floor)[0]
    if below.size:
        t, v = t[: below[0]], v[: below[0]]
    if window is None:
        window = (t[-1] / 2.0, t[-1]) if t.size else (0.0, 0.0)
    mask = (t >= window[0]) & (t <= window[1]) & (t > 0.0)
    t, v = t[mask], v[mask]
    if t.size < min_points:
        raise ValueError(f"only {t.size} usable records in the fit window")
    xs = np.log(t) if model == "polynomial" else t
    ys = np.log(v)
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r_sq = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    rate = float(slope) if model == "polynomial" else float(-slope)
    return DecayFit(model=model, rate=rate, r_squared=float(r_sq),
                    intercept=float(intercept), t_lo=float(t[0]),
                    t_hi=float(t[-1]), n_used=int(t.size))


@dataclass(frozen=True)
class InequalityReport:
    max_violation: float
    c_empirical: float
    n_used: int


def decay_inequality_check(records, p: float, floor: float = 1e-28) -> InequalityReport:
    """Check v' <= 0 and estimate C in v' <= -C v^(p/2) along the run.

    v' comes from central differences of the squared norm; the report
    carries the worst positive violation (zero for a monotone run) and the
    smallest observed ratio -v'/v^(p/2).
    """
    if len(records) < 3:
        raise ValueError("at least three records are needed")
    t = np.array([r.t for r in records])
    v = np.array([r.hy_norm_sq for r in records])
    dv = (v[2:] - v[:-2]) / (t[2:] - t[:-2])
    mid = v[1:-1]
    usable = mid > floor
    if not np.any(usable):
        raise ValueError("flow is identically negligible; nothing to check")
    worst = float(np.max(np.maximum(dv[usable], 0.0)))
    decaying = usable & (dv < 0.0)
    if np.any(decaying):
        c_emp = float(np.min(-dv[decaying] / mid[decaying] ** (p / 2.0)))
    else:
        c_emp = 0.0
    return InequalityReport(max_violation=worst, c_empirical=c_emp,
                            n_used=int(np.sum(usable)))


def embedding_constant(asm: OperatorAssembly, p: float, seed: int = 0,
                       restarts: int = 6, maxiter: int = 400) -> float:
    """Smallest observed ||u||_p^p / ||u||_metric^p on the admissible space.

    Found by quasi-Newton minimization of the scale-invariant quotient over
    the constraint null space, restarted from the slowest linear mode and
    from random directions.  The value certifies the discrete embedding of
    the energy space into the ambient metric space and feeds the predicted
    exponential rate for p < 2.
    """
    if not p > 1.0:
        raise ValueError("exponent must exceed 1")
    z = asm.null_basis()
    gz = z.T @ asm.metric @ z
    gz = 0.5 * (gz + gz.T)
    w = asm.weights

    def quotient(q):
        u = z @ q
        s = float(q @ gz @ q)
        num = float(w @ np.abs(u) ** p)
        val = num / s ** (p / 2.0)
        grad_num = p * (z.T @ (w * np.abs(u) ** (p - 1.0) * np.sign(u)))
        grad = grad_num / s ** (p / 2.0) - val * p * (gz @ q) / s
        return val, grad

    rng = np.random.default_rng(seed)
    starts = [asm.eigensystem()[1][:, 0]]
    starts += [rng.standard_normal(z.shape[1]) for _ in range(restarts - 1)]
    best = np.inf
    for q0 in starts:
        q0 = q0 / float(q0 @ gz @ q0) ** 0.5
        res = minimize(quotient, q0, jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "gtol": 1e-12})
        if np.isfinite(res.fun):
            best = min(best, float(res.fun))
    if not np.isfinite(best):
        raise NumericalError("embedding constant search failed")
    return best


def trajectory_quotient_min(records, p: float, floor: float = 1e-28) -> float:
    """min over records of ||u||_p^p / ||u||_metric^p, from stored data."""
    vals = [
        p * r.lp_energy / r.hy_norm_sq ** (p / 2.0)
        for r in records if r.hy_norm_sq > floor
    ]
    if not vals:
        raise ValueError("no usable records")
    return float(min(vals))


def metric_distance(asm: OperatorAssembly, a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return asm.metric_norm_sq(diff) ** 0.5


def nonlinear_strong_form_gap(state: GridFunction, cfg: FlowConfig,
                              asm: OperatorAssembly, tests) -> dict:
    """Exploratory check that the induced potential emerges from the prox.

    The energy-gradient density phi = |f|^(p-2) f of a converged state is
    pushed through the strong form -phi'' + coeff (1-x)^(n-2) with coeff
    given by the closed formula applied to phi, and the weak action of that
    image is compared against the L2 pairing of phi on admissible tests.
    The gap is a discretization-level diagnostic only.
    """
    from .dual import as_dual, dual_inner, zero_mass_embed
    from .grid import second_derivative
    from .heat import atom_coefficient, potential_coefficient

    phi = energy_gradient(state, cfg.p, cfg.eps_reg)
    image = -1.0 * second_derivative(phi)
    coeff = potential_coefficient(phi, cfg.n)
    if cfg.n >= 2:
        weight = (1.0 - np.linspace(0.0, 1.0, cfg.n_points)) ** (cfg.n - 2)
        image = GridFunction(image.values + coeff * weight)
    dual_image = zero_mass_embed(image)
    if cfg.space.kind in ("line", "full"):
        c = atom_coefficient(float(phi.values[0]), float(phi.values[-1]),
                             cfg.space).value
        from .dual import DualElement

        dual_image = DualElement(dual_image.regular, dual_image.atom - c)
    w = asm.weights
    gap = 0.0
    for h in tests:
        hv = h.values if isinstance(h, GridFunction) else h
        lhs = dual_inner(dual_image, as_dual(GridFunction(hv)), cfg.n)
        rhs = float(w @ (phi.values * hv))
        gap = max(gap, abs(lhs - rhs))
    return {"gap": gap, "potential_coefficient": float(coeff)}
