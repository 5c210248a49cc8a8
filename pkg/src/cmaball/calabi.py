"""Calabi third-order diagnostics for the deformed metric gt = g + Hess(phi).

The central quantity is

    S = gt^{j rbar} gt^{s kbar} gt^{m lbar} phi_{j kbar m} conj(phi_{r sbar l})

computed three ways that agree analytically:

  * S_direct -- from the third Chern-covariant derivatives of the
    potential phi,
  * S_grad   -- as |nabla^{1,0} gt|^2_{gt} with nabla the Chern
    connection of g (metric compatibility kills nabla g),
  * S_conn   -- as |theta_t - theta|^2_{gt}, the squared connection
    difference.

On top of S the module measures the elliptic inequality
Delta_t S >= -C1 S^{3/2} - C2 by fitting the least feasible constants,
checks the Bianchi-type index identities the derivation rests on, and
supplies the Meyers-lemma arithmetic plus the Moser L^p ladder schedule
used to pass from the inequality to a sup bound.  Constants are measured,
never claimed to match any closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import geometry, linalg
from .fields import (ANTI_DOWN, HOLO_DOWN, HOLO_UP, HermitianMetricField,
                     ScalarField, TensorField)
from .geometry import (ANTI, HOLO, canonical_laplacian, chern_connection,
                       covariant_derivative, curvature, hessian_metric,
                       tensor_norm, tensor_norm2, torsion)

_RECONSTRUCTION_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EndomorphismField:
    """h^j_i = gt_{i kbar} g^{j kbar}, stored as values[..., j, i].

    h is similar to a positive Hermitian matrix, so its eigenvalues are
    real and positive wherever both metrics are.
    """

    grid: object
    values: np.ndarray
    valid: np.ndarray

    @classmethod
    def from_metrics(cls, g: HermitianMetricField,
                     gt: HermitianMetricField) -> "EndomorphismField":
        H = geometry.raised(g)
        vals = np.einsum("...ik,...jk->...ji", gt.values, H, optimize=True)
        valid = g.valid & gt.valid
        out = cls(g.grid, vals, valid)
        recon = np.einsum("...ji,...jk->...ik", vals, g.values, optimize=True)
        err = np.abs(recon - gt.values)[valid]
        if err.size and err.max() > _RECONSTRUCTION_TOL:
            raise ValueError(
                f"h*g does not reconstruct gt (max error {err.max():.3e})")
        eig = out.eigenvalues()
        if eig.size and (np.abs(eig.imag).max() > 1e-8
                         or eig.real.min() <= 0.0):
            raise ValueError("endomorphism spectrum is not real positive")
        return out

    def eigenvalues(self):
        return np.linalg.eigvals(self.values[self.valid])

    def as_tensor(self) -> TensorField:
        return TensorField(self.grid, (HOLO_UP, HOLO_DOWN), self.values,
                           self.valid)


def equivalence_lambda(g: HermitianMetricField,
                       gt: HermitianMetricField) -> float:
    """Least lambda with g/lambda <= gt <= lambda g on all shared nodes."""
    valid = g.valid & gt.valid
    lo, hi = linalg.pencil_eig_bounds(gt.values, g.values)
    lo, hi = lo[valid], hi[valid]
    if lo.size == 0:
        raise ValueError("metrics share no valid nodes")
    if not np.all(np.isfinite(lo)) or lo.min() <= 0.0:
        raise geometry.SingularMetricError("pencil has nonpositive spectrum")
    return float(max(hi.max(), (1.0 / lo).max()))


def _third_derivative_direct(phi: ScalarField, g: HermitianMetricField,
                             theta: TensorField) -> TensorField:
    """phi_{j kbar m} = nabla_m nabla_kbar nabla_j phi (Chern, metric g)."""
    first = covariant_derivative(phi, g, HOLO)
    second = covariant_derivative(first, g, ANTI, theta=theta)
    return covariant_derivative(second, g, HOLO, theta=theta)


def calabi_S(g: HermitianMetricField, gt: HermitianMetricField,
             phi: ScalarField) -> dict:
    """The three S variants as nonnegative scalar fields."""
    theta = chern_connection(g)
    theta_t = chern_connection(gt)

    phi3 = _third_derivative_direct(phi, g, theta)
    S_direct = tensor_norm2(phi3, gt)

    gt_tensor = TensorField(gt.grid, (HOLO_DOWN, ANTI_DOWN), gt.values,
                            gt.valid)
    nabla_gt = covariant_derivative(gt_tensor, g, HOLO, theta=theta)
    S_grad = tensor_norm2(nabla_gt, gt)

    diff = TensorField(gt.grid, theta.variance,
                       theta_t.values - theta.values,
                       theta.valid & theta_t.valid)
    S_conn = tensor_norm2(diff, gt)
    return {"direct": S_direct, "grad": S_grad, "conn": S_conn}


def variant_agreement(variants: dict) -> float:
    """Max pairwise relative deviation of the S variants on shared nodes."""
    fields = list(variants.values())
    valid = fields[0].valid.copy()
    for f in fields[1:]:
        valid &= f.valid
    if not valid.any():
        return np.nan
    stack = np.stack([f.values[valid] for f in fields])
    scale = np.maximum(stack.max(axis=0), 1.0)
    return float(((stack.max(axis=0) - stack.min(axis=0)) / scale).max())


def connection_difference_residual(g: HermitianMetricField,
                                   gt: HermitianMetricField,
                                   max_radius2=None) -> float:
    """Max-norm residual of theta_t - theta = h^{-1} (nabla^{1,0} h).

    The inverse acts from the left (writing gt = g h, the difference of
    the two connection matrices is h^{-1} partial h plus the commutator
    the covariant derivative absorbs); the transposed ordering only
    agrees for pairs whose endomorphism commutes with its derivative and
    fails to refine on generic pairs.  `max_radius2` restricts the max
    to a fixed core ball so residuals on different grids are comparable
    (the valid region itself grows under refinement).
    """
    h = EndomorphismField.from_metrics(g, gt)
    nabla_h = covariant_derivative(h.as_tensor(), g, HOLO)
    hinv = np.linalg.inv(h.values)
    # (h^{-1} nabla_a h)^c_b with the derivative index moved to slot a
    rhs = np.einsum("...cs,...sba->...cab", hinv, nabla_h.values,
                    optimize=True)
    theta = chern_connection(g)
    theta_t = chern_connection(gt)
    valid = nabla_h.valid & theta.valid & theta_t.valid
    if max_radius2 is not None:
        valid = valid & (g.grid.radius2 <= max_radius2)
    res = (theta_t.values - theta.values - rhs)[valid]
    return float(np.abs(res).max()) if res.size else np.nan


def conjugate_relation_residual(g: HermitianMetricField,
                                gt: HermitianMetricField,
                                max_radius2=None) -> float:
    """Max-norm residual of nabla_t h = h^{-1} (nabla h) h (holo part)."""
    h = EndomorphismField.from_metrics(g, gt)
    nh = covariant_derivative(h.as_tensor(), g, HOLO)
    nh_t = covariant_derivative(h.as_tensor(), gt, HOLO)
    hinv = np.linalg.inv(h.values)
    rhs = np.einsum("...cs,...stj,...tb->...cbj",
                    hinv, nh.values, h.values, optimize=True)
    valid = nh.valid & nh_t.valid
    if max_radius2 is not None:
        valid = valid & (g.grid.radius2 <= max_radius2)
    res = (nh_t.values - rhs)[valid]
    return float(np.abs(res).max()) if res.size else np.nan


@dataclass(frozen=True)
class BianchiResiduals:
    """Pointwise max-abs residuals of the three index identities."""

    r012: ScalarField
    r013: ScalarField
    r014: ScalarField

    def max_norms(self, max_radius2=None) -> dict:
        out = {}
        for name in ("r012", "r013", "r014"):
            f = getattr(self, name)
            valid = f.valid
            if max_radius2 is not None:
                valid = valid & (f.grid.radius2 <= max_radius2)
            vals = f.values[valid]
            out[name] = float(np.abs(vals).max()) if vals.size else np.nan
        return out


def bianchi_residuals(gt: HermitianMetricField) -> BianchiResiduals:
    """Residual fields of the first/second Bianchi consequences.

    (012)  R^l_{m i jbar} = R^l_{i m jbar} + T^l_{m i, jbar}
    (013)  the conjugate-type identity on barred indices
    (014)  R^l_{m i jbar, t} = R^l_{m t jbar, i} + T^s_{i t} R^l_{m s jbar}
    """
    grid = gt.grid
    R = curvature(gt)
    T = torsion(gt)
    dbar_T = covariant_derivative(T, gt, ANTI)

    res12 = (R.values
             - np.swapaxes(R.values, -3, -2)
             - dbar_T.values)
    v12 = R.valid & dbar_T.valid

    # barred-index curvature: R^{lbar}_{kbar i jbar} = -conj(R^l_{k j ibar})
    # (conjugating swaps the form slots, picking up the antisymmetry sign);
    # the derivative T^{lbar}_{jbar kbar, i} is conj(dbar_i T^l_{j k})
    # since holomorphic directions do not correct barred indices
    n = grid.n
    res13 = np.empty(R.values.shape, dtype=complex)
    for l in range(n):
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    res13[..., l, k, i, j] = np.conj(
                        -R.values[..., l, k, j, i]
                        + R.values[..., l, j, k, i]
                        - dbar_T.values[..., l, j, k, i])
    v13 = v12

    nabla_R = covariant_derivative(R, gt, HOLO)
    # res14[l, m, i, j, t]: the second term needs R^l_{m t jbar, i},
    # i.e. the derivative slots i and t exchanged
    res14 = (nabla_R.values
             - np.swapaxes(nabla_R.values, -3, -1)
             - np.einsum("...sit,...lmsj->...lmijt", T.values, R.values,
                         optimize=True))
    v14 = nabla_R.valid & T.valid

    def collapse(res, valid):
        flat = np.abs(res).reshape(grid.shape + (-1,)).max(axis=-1)
        return ScalarField(grid, np.where(valid, flat, np.nan), valid)

    return BianchiResiduals(collapse(res12, v12), collapse(res13, v13),
                            collapse(res14, v14))


def elliptic_defect(S: ScalarField, gt: HermitianMetricField,
                    slack_coeff=10.0, c1_grid=None):
    """Least (C1, C2) with Delta_t S + C1 S^{3/2} + C2 >= -slack.

    For each candidate C1 the least feasible C2 follows directly; the
    reported pair minimizes C1 * max(S^{3/2}) + C2, i.e. the strength of
    the resulting bound at the worst node.  Returns
    (defect ScalarField, C1, C2, lapS ScalarField).
    """
    grid = gt.grid
    slack = slack_coeff * grid.spacing**2
    lapS = canonical_laplacian(S, gt)
    valid = lapS.valid & S.valid & grid.interior
    s32 = np.where(S.values > 0.0, S.values, 0.0) ** 1.5
    lap = lapS.values
    if not valid.any():
        raise ValueError("no interior nodes support the defect fit")
    need = -lap[valid] - slack          # C1 s32 + C2 must dominate this
    s32v = s32[valid]
    s32_max = float(s32v.max())
    if c1_grid is None:
        scale = max(float(np.abs(need).max()) / max(s32_max, 1e-30), 1.0)
        c1_grid = np.concatenate([[0.0], np.geomspace(1e-3, scale, 40)])
    best = None
    for c1 in c1_grid:
        c2 = max(0.0, float((need - c1 * s32v).max()))
        cost = c1 * s32_max + c2
        if best is None or cost < best[0]:
            best = (cost, float(c1), c2)
    _, C1, C2 = best
    defect_vals = np.where(valid, lap + C1 * s32 + C2, np.nan)
    defect = ScalarField(grid, defect_vals, valid)
    return defect, C1, C2, lapS


def meyers_bound(c: float, alpha: float, d: float) -> float:
    """Closed-form Meyers lemma bound ((2^{a+1} c) / ((2^a - 1) d))^{1/a}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if d <= 0.0:
        raise ValueError("d must be positive")
    if c < 0.0:
        raise ValueError("c must be nonnegative")
    return (2.0 ** (alpha + 1.0) * c / ((2.0**alpha - 1.0) * d)) ** (1.0 / alpha)


def lp_ladder(S: ScalarField, g: HermitianMetricField, R: float, R0: float,
              m: int, k_max: int = 8):
    """Moser ladder monitor: (k, q_k, r_k, ||S||_{L^{q_k}(B_{r_k})}).

    q_k = (m/(m-1))^k + (m-1)/2 and r_k = R + (R0 - R) 2^{-k}; norms use
    the volume form det(g) * spacing^{2n} on ball-restricted nodes.
    Returns (rows, summary).
    """
    grid = S.grid
    if not 0.0 < R < R0 <= 1.0:
        raise ValueError("need 0 < R < R0 <= 1")
    if m < 2:
        raise ValueError("m must be at least 2")
    weight = linalg.herm_det(g.values) * grid.spacing ** (2 * grid.n)
    base_valid = S.valid & g.valid & (S.values >= 0.0)
    rows = []
    for k in range(1, k_max + 1):
        qk = (m / (m - 1.0)) ** k + 0.5 * (m - 1.0)
        rk = R + (R0 - R) * 2.0**-k
        where = base_valid & (grid.radius2 <= rk**2)
        if not where.any():
            raise ValueError(f"ball of radius {rk} contains no valid nodes")
        vals, w = S.values[where], weight[where]
        pos = vals > 0.0
        if pos.any():
            # log-space sum; q_k grows geometrically and S^{q_k} overflows
            log_norm = logsumexp(qk * np.log(vals[pos])
                                 + np.log(w[pos])) / qk
            norm = float(np.exp(log_norm))
        else:
            norm = 0.0
        rows.append({"k": k, "q": qk, "r": rk, "norm": norm})
    core = base_valid & (grid.radius2 <= R**2)
    sup_S = float(S.values[core].max()) if core.any() else np.nan
    sup_norm = max(row["norm"] for row in rows)
    summary = {"sup_ladder": sup_norm, "max_S_inner": sup_S,
               "gap": sup_norm - sup_S}
    return rows, summary


@dataclass(frozen=True)
class CalabiDiagnostics:
    S_direct: ScalarField
    S_grad: ScalarField
    S_conn: ScalarField
    lam: float
    lapS: ScalarField
    C1: float
    C2: float
    defect: ScalarField
    details: dict = field(default_factory=dict)


def diagnostics(g: HermitianMetricField, phi: ScalarField,
                slack_coeff=10.0) -> CalabiDiagnostics:
    """Full Calabi diagnostics for the instance (g, phi)."""
    gt = hessian_metric(g, phi)
    lam = equivalence_lambda(g, gt)
    variants = calabi_S(g, gt, phi)
    defect, C1, C2, lapS = elliptic_defect(variants["grad"], gt,
                                           slack_coeff=slack_coeff)
    T = torsion(g)
    Rm = curvature(g)
    norms = {}
    for name, t in (("T", T), ("R", Rm),
                    ("nabla_T", covariant_derivative(T, g, HOLO)),
                    ("nabla_R", covariant_derivative(Rm, g, HOLO))):
        nf = tensor_norm(t, g)
        vals = nf.values[nf.valid]
        norms[name] = float(vals.max()) if vals.size else np.nan
    details = {
        "agreement": variant_agreement(variants),
        "theta_identity_residual": connection_difference_residual(g, gt),
        "conjugate_identity_residual": conjugate_relation_residual(g, gt),
        "geometry_norms": norms,
    }
    return CalabiDiagnostics(
        S_direct=variants["direct"], S_grad=variants["grad"],
        S_conn=variants["conn"], lam=lam, lapS=lapS,
        C1=C1, C2=C2, defect=defect, details=details)
