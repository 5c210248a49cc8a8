"""Chern-connection differential geometry on ball grids.

Index conventions (all arrays carry grid axes first, component axes last):

* metric         g[..., i, j]          = g_{i jbar}
* raised metric  H[..., i, j]          = g^{i jbar}   (= conj(g^{-1}))
* connection     theta[..., c, a, b]   = theta^c_{a b} = d_a g_{b dbar} g^{c dbar}
* torsion        T[..., c, a, b]       = theta^c_{a b} - theta^c_{b a}
* curvature      R[..., j, i, a, b]    = R^j_{i a bbar}

Covariant derivatives follow the Chern rule: holomorphic indices are
corrected only in holomorphic directions (+theta on upper, -theta on
lower), antiholomorphic indices only in antiholomorphic directions with
conjugated coefficients.  The curvature tensor carries exactly one barred
derivative index; there is no storage for (2,0)/(0,2) parts.
"""

from __future__ import annotations

import numpy as np

from . import fd, linalg
from .fields import (ANTI_DOWN, HOLO_DOWN, HOLO_UP, HermitianMetricField,
                     ScalarField, TensorField)
from .grid import erode

HOLO = "holo"
ANTI = "anti"

_LETTERS = "abcdefghijkl"


class SingularMetricError(ValueError):
    pass


def raised(g: HermitianMetricField) -> np.ndarray:
    """g^{i jbar} array; raises if g is singular anywhere valid."""
    det = linalg.herm_det(g.values)
    bad = g.valid & ~(det > 0)
    if bad.any():
        node = tuple(int(k) for k in np.argwhere(bad)[0])
        raise SingularMetricError(f"metric not positive definite at node {node}")
    return linalg.herm_inv(g.values)


def complex_hessian(u: ScalarField) -> TensorField:
    """Mixed second derivatives u_{i jbar} as a (d, b) tensor field."""
    n, h = u.grid.n, u.grid.spacing
    out = np.empty(u.grid.shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            out[..., i, j] = fd.dz_dzbar(u.values, i, j, h)
    return TensorField(u.grid, (HOLO_DOWN, ANTI_DOWN), out, erode(u.valid))


def hessian_metric(g: HermitianMetricField, u: ScalarField) -> HermitianMetricField:
    """The deformed metric g + dd-bar u (valid where both are)."""
    hess = complex_hessian(u)
    vals = g.values + hess.values
    # exact Hermitian symmetrization kills rounding asymmetry
    vals = 0.5 * (vals + np.conj(np.swapaxes(vals, -1, -2)))
    return HermitianMetricField(g.grid, vals, hess.valid & g.valid)


def chern_connection(g: HermitianMetricField) -> TensorField:
    """Connection coefficients theta^c_{a b} of the Chern connection."""
    n, h = g.grid.n, g.grid.spacing
    H = raised(g)
    out = np.empty(g.grid.shape + (n, n, n), dtype=complex)
    for a in range(n):
        dg = fd.dz(g.values, a, h)            # [..., b, d] = d_a g_{b dbar}
        out[..., a, :] = np.swapaxes(
            np.einsum("...bd,...cd->...bc", dg, H), -1, -2)
    return TensorField(g.grid, (HOLO_UP, HOLO_DOWN, HOLO_DOWN), out,
                       erode(g.valid))


def torsion(g: HermitianMetricField) -> TensorField:
    """T^c_{a b}; antisymmetric in (a, b) exactly, zero iff Kahler."""
    theta = chern_connection(g)
    vals = theta.values - np.swapaxes(theta.values, -1, -2)
    return TensorField(g.grid, theta.variance, vals, theta.valid)


def curvature(g: HermitianMetricField) -> TensorField:
    """R^j_{i a bbar} = -dbar_b (d_a g . g^{-1})^j_i."""
    n, h = g.grid.n, g.grid.spacing
    H = raised(g)
    out = np.empty(g.grid.shape + (n, n, n, n), dtype=complex)
    dbarg = [fd.dzbar(g.values, b, h) for b in range(n)]
    for a in range(n):
        dag = fd.dz(g.values, a, h)
        for b in range(n):
            ddg = fd.dz_dzbar(g.values, a, b, h)
            t1 = -np.einsum("...jk,...ik->...ji", H, ddg)
            t2 = np.einsum("...ik,...js,...ts,...tk->...ji",
                           dag, H, dbarg[b], H, optimize=True)
            out[..., a, b] = t1 + t2
    return TensorField(g.grid, (HOLO_UP, HOLO_DOWN, HOLO_DOWN, ANTI_DOWN),
                       out, erode(g.valid, times=2))


def lower_curvature(R: TensorField, g: HermitianMetricField) -> TensorField:
    """R_{i jbar a bbar} = g_{k jbar} R^k_{i a bbar}."""
    vals = np.einsum("...kj,...kiab->...ijab", g.values, R.values)
    return TensorField(R.grid, (HOLO_DOWN, ANTI_DOWN, HOLO_DOWN, ANTI_DOWN),
                       vals, R.valid & g.valid)


def covariant_derivative(t, g: HermitianMetricField, direction: str,
                         theta: TensorField | None = None) -> TensorField:
    """Chern covariant derivative; the new index is appended last.

    `direction` is "holo" (index kind 'd') or "anti" (index kind 'b').
    Scalars reduce to plain Wirtinger derivatives.
    """
    if direction not in (HOLO, ANTI):
        raise ValueError(f"direction must be 'holo' or 'anti', got {direction!r}")
    grid = t.grid
    if grid is not g.grid and grid.shape != g.grid.shape:
        raise ValueError("tensor and metric live on different grids")
    n, h = grid.n, grid.spacing

    if isinstance(t, ScalarField):
        out = np.empty(grid.shape + (n,), dtype=complex)
        for m in range(n):
            out[..., m] = (fd.dz(t.values, m, h) if direction == HOLO
                           else fd.dzbar(t.values, m, h))
        kind = HOLO_DOWN if direction == HOLO else ANTI_DOWN
        return TensorField(grid, (kind,), out, erode(t.valid))

    if theta is None:
        theta = chern_connection(g)
    letters = _LETTERS[:t.rank]
    out = np.empty(grid.shape + (n,) * (t.rank + 1), dtype=complex)
    for m in range(n):
        acc = (fd.dz(t.values, m, h) if direction == HOLO
               else fd.dzbar(t.values, m, h))
        th = theta.values[..., m, :]          # [..., c, s] = theta^c_{m s}
        for p, kind in enumerate(t.variance):
            sub_in = letters[:p] + "s" + letters[p + 1:]
            if direction == HOLO and kind == HOLO_UP:
                acc = acc + np.einsum(f"...{letters[p]}s,...{sub_in}->...{letters}",
                                      th, t.values)
            elif direction == HOLO and kind == HOLO_DOWN:
                acc = acc - np.einsum(f"...s{letters[p]},...{sub_in}->...{letters}",
                                      th, t.values)
            elif direction == ANTI and kind == ANTI_DOWN:
                acc = acc - np.einsum(f"...s{letters[p]},...{sub_in}->...{letters}",
                                      np.conj(th), t.values)
        out[..., m] = acc
    kind = HOLO_DOWN if direction == HOLO else ANTI_DOWN
    return TensorField(grid, t.variance + (kind,), out,
                       erode(t.valid & theta.valid))


def tensor_norm2(t: TensorField, g: HermitianMetricField) -> ScalarField:
    """Squared pointwise norm |t|^2_g with indices paired by variance."""
    H = raised(g)
    mats = {HOLO_UP: g.values, HOLO_DOWN: H, ANTI_DOWN: np.conj(H)}
    r = t.rank
    if r == 0:
        vals = (t.values * np.conj(t.values)).real
    else:
        lo = _LETTERS[:r]
        hi = _LETTERS[r:2 * r]
        ops = [t.values, np.conj(t.values)]
        subs = [f"...{lo}", f"...{hi}"]
        for p, kind in enumerate(t.variance):
            ops.append(mats[kind])
            subs.append(f"...{lo[p]}{hi[p]}")
        vals = np.einsum(",".join(subs) + "->...", *ops, optimize=True).real
    vals = np.where(np.isnan(vals), np.nan, np.maximum(vals, 0.0))
    return ScalarField(t.grid, vals, t.valid & g.valid)


def tensor_norm(t: TensorField, g: HermitianMetricField) -> ScalarField:
    """Pointwise norm |t|_g (nonnegative)."""
    n2 = tensor_norm2(t, g)
    return ScalarField(t.grid, np.sqrt(n2.values), n2.valid)


def canonical_laplacian(f: ScalarField, g: HermitianMetricField) -> ScalarField:
    """2 g^{i jbar} f_{i jbar} with centered stencils."""
    hess = complex_hessian(f)
    H = raised(g)
    vals = 2.0 * np.einsum("...ij,...ij->...", H, hess.values)
    if not np.iscomplexobj(f.values):
        vals = vals.real
    return ScalarField(f.grid, vals, hess.valid & g.valid)
