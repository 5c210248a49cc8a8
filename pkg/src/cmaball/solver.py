"""Dirichlet solver for (omega + i ddbar u)^n = rho omega^n on the ball.

The solver works with the log-determinant residual

    r(u) = log det(g + Hess u) - log(rho det g)

whose linearization at u is the elliptic operator gt^{i jbar} d_i d_jbar
(gt = g + Hess u), discretized by the stencil machinery in `elliptic`.
Globalization is damped Newton plus continuation in the density from
rho_0 := det(g + Hess u_0)/det g of the harmonic-type initial guess; the
line search insists on min-eigenvalue >= MIN_EIG_FLOOR at every trial
point so iterates stay inside the PSH(omega) cone.

Hermitian fields are carried in "compact parts" form -- n real diagonal
arrays plus the upper off-diagonal complex entries -- halving memory,
which is what makes the finest n=2 grid (65^4 nodes) fit in RAM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import elliptic, fd
from .fields import HermitianMetricField, ScalarField
from .grid import BallGrid

PLAIN_F = "plain-f"
EXP_F = "exp-f"

MIN_EIG_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# compact Hermitian parts: (diag, off) with diag[i] = G_ii real and
# off[(i, j)] = G_ij complex for i < j


@dataclass(frozen=True, eq=False)
class CompactMetric:
    """Hermitian metric held in compact parts only.

    Stands in for HermitianMetricField in DirichletProblem on grids where
    the full (..., n, n) complex array would not fit in memory (the
    finest n=2 grid).  `diag[i]` holds G_ii real, `off[(i, j)]` G_ij.
    """

    grid: BallGrid
    diag: tuple
    off: dict

    @classmethod
    def from_expr_matrix(cls, grid: BallGrid, matrix):
        zs = grid.complex_coords()
        pts = np.stack([np.broadcast_to(z, grid.shape) for z in zs], axis=-1)
        n = matrix.n
        diag = tuple(np.ascontiguousarray(matrix._fns[i][i](pts).real)
                     for i in range(n))
        off = {(i, j): np.ascontiguousarray(matrix._fns[i][j](pts))
               for i in range(n) for j in range(i + 1, n)}
        return cls(grid, diag, off)

    def parts(self):
        return list(self.diag), dict(self.off)


def parts_from_matrix(G):
    n = G.shape[-1]
    diag = [np.ascontiguousarray(G[..., i, i].real) for i in range(n)]
    off = {(i, j): np.ascontiguousarray(G[..., i, j])
           for i in range(n) for j in range(i + 1, n)}
    return diag, off


def parts_det(diag, off):
    if len(diag) == 1:
        return diag[0]
    o = off[(0, 1)]
    return diag[0] * diag[1] - (o.real**2 + o.imag**2)


def parts_min_eig(diag, off):
    if len(diag) == 1:
        return diag[0]
    half_tr = 0.5 * (diag[0] + diag[1])
    disc = np.sqrt(np.maximum(half_tr**2 - parts_det(diag, off), 0.0))
    return half_tr - disc


def parts_raised(diag, off, det=None):
    """Parts of H = conj(G^{-1}), the raised-index coefficient field."""
    det = parts_det(diag, off) if det is None else det
    with np.errstate(invalid="ignore", divide="ignore"):
        if len(diag) == 1:
            return [1.0 / diag[0]], {}
        o = off[(0, 1)]
        return ([diag[1] / det, diag[0] / det],
                {(0, 1): -np.conj(o) / det})


def hessian_parts(u_values, n, h):
    """Compact parts of the complex Hessian of a real full-grid array."""
    diag = []
    for i in range(n):
        d = fd.d2(u_values, 2 * i, 2 * i, h)
        d += fd.d2(u_values, 2 * i + 1, 2 * i + 1, h)
        d *= 0.25
        diag.append(d)
    off = {}
    for i in range(n):
        for j in range(i + 1, n):
            xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
            re = fd.d2(u_values, xi, xj, h)
            re += fd.d2(u_values, yi, yj, h)
            re *= 0.25
            im = fd.d2(u_values, xi, yj, h)
            im -= fd.d2(u_values, yi, xj, h)
            im *= 0.25
            entry = re.astype(complex)
            entry.imag = im
            off[(i, j)] = entry
    return diag, off


def add_parts(a, b, consume=False):
    """Parts of a + b; with consume=True, b's arrays are reused in place."""
    if consume:
        for x, y in zip(a[0], b[0]):
            y += x
        for k in a[1]:
            b[1][k] += a[1][k]
        return b
    diag = [x + y for x, y in zip(a[0], b[0])]
    off = {k: a[1][k] + b[1][k] for k in a[1]}
    return diag, off


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """Data of (omega + i ddbar u)^n = rho omega^n, u = phi on the band.

    `boundary` must be defined on all in-ball nodes (its band values pin
    the solution; the interior values seed the initial guess).  The
    exp-f convention is normalized at construction: pass f, rho = e^f is
    stored.
    """

    omega: HermitianMetricField
    density: ScalarField
    boundary: ScalarField
    convention: str = PLAIN_F

    def __post_init__(self):
        if self.convention not in (PLAIN_F, EXP_F):
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.convention == EXP_F:
            object.__setattr__(self, "density", ScalarField(
                self.grid, np.exp(self.density.values), self.density.valid))
            object.__setattr__(self, "convention", PLAIN_F)
        rho = self.density.values[self.density.valid]
        if rho.size and rho.min() < 0:
            raise ValueError("density must be nonnegative")

    @property
    def grid(self) -> BallGrid:
        return self.omega.grid

    def omega_parts(self):
        if isinstance(self.omega, CompactMetric):
            return self.omega.parts()
        return parts_from_matrix(self.omega.values)


@dataclass(frozen=True, eq=False)
class SolutionField:
    u: ScalarField
    residual_norm: float
    min_eig: ScalarField
    iterations: int
    diagnostics: dict = field(default_factory=dict)


class SolveError(RuntimeError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


def _residual_arrays(u_values, problem, g_parts=None, log_rhs=None):
    """(residual array on interior, gt parts, infeasible mask)."""
    grid = problem.grid
    g_parts = problem.omega_parts() if g_parts is None else g_parts
    gt = add_parts(g_parts, hessian_parts(u_values, grid.n, grid.spacing), consume=True)
    det_t = parts_det(*gt)
    if log_rhs is None:
        log_rhs = _log_rhs(problem, g_parts)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.log(det_t)
        r -= log_rhs
    r[~grid.interior] = 0.0
    feas = grid.interior & (det_t > 0) & (parts_min_eig(*gt) > 0)
    infeasible = grid.interior & ~feas
    r[infeasible] = np.nan
    return r, gt, infeasible


def _log_rhs(problem, g_parts, rho=None):
    rho = problem.density.values if rho is None else rho
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log(rho * parts_det(*g_parts))


def residual(u: ScalarField, problem: DirichletProblem) -> ScalarField:
    """Per-node log-determinant residual; NaN marks infeasible nodes."""
    vals = np.nan_to_num(u.values, nan=0.0)
    r, _, infeasible = _residual_arrays(vals, problem)
    valid = problem.grid.interior & u.valid & ~infeasible
    out = np.full(problem.grid.shape, np.nan)
    out[problem.grid.interior] = r[problem.grid.interior]
    return ScalarField(problem.grid, out, valid)


def _gt_stencil_terms(gt):
    """Stencil terms of gt^{i jbar} d_i d_jbar straight from compact parts.

    Builds the scaled coefficient arrays without materializing the raised
    metric, so peak memory stays at one set of real coefficient fields.
    """
    diag, off = gt
    det = parts_det(diag, off)
    with np.errstate(invalid="ignore", divide="ignore"):
        if len(diag) == 1:
            H_diag = [1.0 / diag[0]]
            return elliptic.stencil_from_parts(H_diag, {})
        # H_00 = d1/det, H_11 = d0/det, H_01 = -conj(o)/det
        c0 = elliptic._clean(0.25 * diag[1] / det)
        c1 = elliptic._clean(0.25 * diag[0] / det)
        o = off[(0, 1)]
        a = elliptic._clean(-0.5 * o.real / det)     # 0.5 Re H_01
        b = elliptic._clean(0.5 * o.imag / det)      # 0.5 Im H_01
    return [
        (0, 0, 1.0, c0), (1, 1, 1.0, c0),
        (2, 2, 1.0, c1), (3, 3, 1.0, c1),
        (0, 2, 1.0, a), (1, 3, 1.0, a),
        (0, 3, -1.0, b), (1, 2, 1.0, b),
    ]


def _harmonic_extension(problem, g_parts):
    """Initial guess: solve the canonical-Laplace problem with data phi."""
    grid = problem.grid
    u = np.where(grid.in_ball, np.nan_to_num(problem.boundary.values, nan=0.0),
                 0.0)
    terms = _gt_stencil_terms(g_parts)
    r = elliptic.apply_operator(terms, u, grid.spacing, grid.interior)
    r *= -1.0
    u += elliptic.solve_correction_terms(grid, terms, r, rtol=1e-10)
    return u


def _newton(problem, u, log_rhs, g_parts, tol, max_iter, trace):
    """Damped Newton at fixed right-hand side; returns (u, resnorm, iters)."""
    grid = problem.grid
    r, gt, infeasible = _residual_arrays(u, problem, g_parts, log_rhs)
    if infeasible.any():
        raise SolveError("initial iterate infeasible", u)
    resnorm = np.abs(r[grid.interior]).max()
    for k in range(max_iter):
        if resnorm <= tol:
            return u, resnorm, k
        rtol = float(np.clip(np.sqrt(resnorm), 1e-6, 0.1))
        terms = _gt_stencil_terms(gt)
        gt = None      # free before the trial metric is built (large grids)
        r *= -1.0      # consumed by the linear solve
        delta = elliptic.solve_correction_terms(grid, terms, r, rtol=rtol)
        terms = r = None
        step = 1.0
        while True:
            trial = u + step * delta
            r_t, gt_t, infeasible = _residual_arrays(
                trial, problem, g_parts, log_rhs)
            if not infeasible.any():
                trial_eig = parts_min_eig(*gt_t)[grid.interior].min()
                trial_norm = np.abs(r_t[grid.interior]).max()
                if (trial_eig >= MIN_EIG_FLOOR
                        and trial_norm <= (1.0 - 0.25 * step) * resnorm):
                    break
            step *= 0.5
            if step < 2.0**-24:
                raise SolveError(
                    f"line search stalled at residual {resnorm:.3e}", u)
        u, r, gt, resnorm = trial, r_t, gt_t, trial_norm
        trace.append({"residual": float(resnorm), "step": step})
    if resnorm > tol:
        raise SolveError(f"Newton did not reach tol, residual {resnorm:.3e}",
                         u)
    return u, resnorm, max_iter


def solve(problem: DirichletProblem, tol=1e-9, max_iter=50,
          max_refinements=8, initial=None) -> SolutionField:
    """Solve the Dirichlet problem; continuation in the density on demand.

    The continuation parameter t blends rho_t = (1 - t) rho_0 + t rho
    with rho_0 the density of the initial guess (so t = 0 is solved
    exactly by it); the step toward t = 1 is halved on Newton failure.
    """
    grid = problem.grid
    g_parts = problem.omega_parts()
    rho = problem.density.values
    if np.nanmin(rho[problem.grid.in_ball]) <= 0:
        raise ValueError("solve needs rho > 0; use solve_degenerate")
    if initial is not None:
        u = np.where(grid.in_ball, np.nan_to_num(initial, nan=0.0), 0.0)
        # band data is authoritative regardless of where the guess came from
        u[grid.band] = np.nan_to_num(problem.boundary.values, nan=0.0)[grid.band]
    else:
        u = _harmonic_extension(problem, g_parts)

    def feasible(cand):
        gt = add_parts(g_parts, hessian_parts(cand, grid.n, grid.spacing), consume=True)
        return parts_min_eig(*gt)[grid.interior].min() > MIN_EIG_FLOOR

    if not feasible(u):
        # convexify interior values only (band data must stay phi); the
        # added i ddbar c|z|^2 = cI restores positivity away from the band
        bump = np.where(grid.interior, grid.radius2 - 1.0, 0.0)
        for c in 2.0 ** np.arange(-8, 6):
            if feasible(u + c * bump):
                u = u + c * bump
                break
        else:
            raise SolveError("could not find a feasible initial iterate", u)
    gt0 = add_parts(g_parts, hessian_parts(u, grid.n, grid.spacing), consume=True)
    with np.errstate(invalid="ignore"):
        rho0 = parts_det(*gt0) / parts_det(*g_parts)
    rho0 = np.where(grid.interior, np.maximum(rho0, 1e-10), rho)
    gt0 = None
    trace = []
    iterations = 0
    t, dt = 0.0, 1.0
    refinements = 0
    while t < 1.0:
        t_next = min(1.0, t + dt)
        rho_t = (1.0 - t_next) * rho0 + t_next * rho
        log_rhs = _log_rhs(problem, g_parts, rho=rho_t)
        rho_t = None
        step_tol = tol if t_next == 1.0 else max(tol, 1e-6)
        try:
            u_new, resnorm, iters = _newton(problem, u, log_rhs, g_parts,
                                            step_tol, max_iter, trace)
        except SolveError as err:
            refinements += 1
            dt *= 0.5
            if refinements > max_refinements:
                raise SolveError(
                    f"continuation exhausted: {err}", err.last_iterate)
            continue
        u, t = u_new, t_next
        iterations += iters
    gt = add_parts(g_parts, hessian_parts(u, grid.n, grid.spacing), consume=True)
    eig = np.where(grid.interior, parts_min_eig(*gt), np.nan)
    u_field = ScalarField(grid, np.where(grid.in_ball, u, np.nan),
                          grid.in_ball)
    return SolutionField(
        u=u_field, residual_norm=float(resnorm),
        min_eig=ScalarField(grid, eig, grid.interior),
        iterations=iterations,
        diagnostics={"newton_trace": trace, "refinements": refinements})


def solve_degenerate(problem: DirichletProblem, deltas=(1e-2, 1e-3, 1e-4),
                     **kwargs) -> SolutionField:
    """Degenerate rho >= 0 as the limit of rho + delta; no convergence claim.

    Solves the shifted problems in order and reports the max-norm Cauchy
    differences of consecutive iterates in the diagnostics.
    """
    grid = problem.grid
    iterates, sols = [], []
    initial = kwargs.pop("initial", None)
    for delta in deltas:
        shifted = DirichletProblem(
            problem.omega,
            ScalarField(grid, problem.density.values + delta,
                        problem.density.valid),
            problem.boundary)
        sol = solve(shifted, initial=initial, **kwargs)
        initial = sol.u.values
        iterates.append(np.nan_to_num(sol.u.values, nan=0.0))
        sols.append(sol)
    cauchy = [float(np.abs((b - a)[grid.interior]).max())
              for a, b in zip(iterates, iterates[1:])]
    final = sols[-1]
    diag = dict(final.diagnostics)
    diag.update({"deltas": list(deltas), "cauchy_differences": cauchy})
    return SolutionField(final.u, final.residual_norm, final.min_eig,
                         sum(s.iterations for s in sols), diag)


# ---------------------------------------------------------------------------
# comparison principle (Lemma 1 engine)


@dataclass(frozen=True)
class ComparisonReport:
    status: str              # "pass" | "hypotheses-not-met" | "conclusion-failed"
    details: dict

    @property
    def passed(self):
        return self.status == "pass"


def comparison_check(u: ScalarField, v: ScalarField,
                     omega: HermitianMetricField,
                     slack_coeff=10.0) -> ComparisonReport:
    """Check Lemma 1 numerically: MA(v) >= MA(u) and v <= u on the band
    imply v <= u everywhere (up to the discretization slack)."""
    grid = omega.grid
    slack = slack_coeff * grid.spacing**2
    g_parts = parts_from_matrix(omega.values)
    uv = np.nan_to_num(u.values, nan=0.0)
    vv = np.nan_to_num(v.values, nan=0.0)
    gt_u = add_parts(g_parts, hessian_parts(uv, grid.n, grid.spacing), consume=True)
    gt_v = add_parts(g_parts, hessian_parts(vv, grid.n, grid.spacing), consume=True)
    band = grid.band & u.valid & v.valid
    interior = grid.interior & u.valid & v.valid
    details = {"slack": slack}

    boundary_gap = float((vv - uv)[band].max()) if band.any() else -np.inf
    details["boundary_gap"] = boundary_gap
    v_min_eig = float(parts_min_eig(*gt_v)[interior].min())
    details["v_min_eig"] = v_min_eig
    det_gap = float((parts_det(*gt_u) - parts_det(*gt_v))[interior].max())
    details["determinant_gap"] = det_gap
    hypotheses_ok = (boundary_gap <= slack and v_min_eig > 0.0
                     and det_gap <= slack)
    if not hypotheses_ok:
        return ComparisonReport("hypotheses-not-met", details)

    conclusion_gap = float((vv - uv)[interior].max())
    details["conclusion_gap"] = conclusion_gap
    if conclusion_gap <= slack:
        return ComparisonReport("pass", details)
    return ComparisonReport("conclusion-failed", details)
