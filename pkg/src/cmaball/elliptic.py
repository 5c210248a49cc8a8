"""Linear solves for the operator  L u = sum_ij H^{i jbar} u_{i jbar}.

H is a raised Hermitian coefficient field, so L is a real second-order
elliptic operator once the Wirtinger stencils are expanded into real
second differences.  The expansion used everywhere is

    u_{i ibar} = (D_{x_i x_i} + D_{y_i y_i}) / 4
    2 Re(H_ij u_{i jbar}) = a/2 (D_{x_i x_j} + D_{y_i y_j})
                          - b/2 D_{x_i y_j} + b/2 D_{y_i x_j},   H_ij = a + i b

with D the centered (pure or four-corner) second differences.  Unknowns
live on the interior node set; everything else is pinned (Dirichlet), so
couplings to pinned nodes simply drop out of the system and enter the
right-hand side through the residual of the current full-grid iterate.

Small systems are assembled sparse and solved directly.  The large n=2
grids use a matrix-free geometric multigrid (weighted Jacobi smoothing,
full-weighting restriction, multilinear prolongation, coefficient
injection to coarse grids) as a preconditioner for BiCGStab; coarse node
sets coincide with fine ones, so injection is exact sampling.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as sla

from .grid import BallGrid

# above this many unknowns the sparse direct factorization stops being
# worth it and the multigrid path takes over; fill-in grows with the
# stencil bandwidth, so the 4-D cutoff is much lower than the 2-D one
_DIRECT_LIMIT = {2: 120_000, 4: 12_000}

_RESTRICT = np.array([0.25, 0.5, 0.25])
_PROLONG = np.array([0.5, 1.0, 0.5])
_D2_KERNEL = np.array([1.0, -2.0, 1.0])
# both correlate passes flip the sign, so the product is the centered
# cross difference (pp - pm - mp + mm)
_D1_KERNEL = np.array([1.0, 0.0, -1.0])


def _shift0(values, axis, offset):
    """Shift with zero fill (Dirichlet-friendly, unlike fd.shift)."""
    if offset == 0:
        return values
    out = np.zeros_like(values)
    src = [slice(None)] * values.ndim
    dst = [slice(None)] * values.ndim
    if offset > 0:
        src[axis] = slice(offset, None)
        dst[axis] = slice(None, -offset)
    else:
        src[axis] = slice(None, offset)
        dst[axis] = slice(-offset, None)
    out[tuple(dst)] = values[tuple(src)]
    return out


def _clean(c):
    return np.nan_to_num(np.ascontiguousarray(c, dtype=float), nan=0.0)


def stencil_from_parts(diag, off):
    """Stencil terms [(p, q, s, c), ...] from compact Hermitian parts.

    `diag[i]` is the real array H_ii, `off[(i, j)]` (i < j) the complex
    H_ij.  p, q are real axes (x_i -> 2i, y_i -> 2i+1); each term
    multiplies the centered second difference D_pq by s * c with scalar
    sign s, so coefficient arrays are shared rather than copied (the
    finest n=2 grid cannot afford duplicates).
    """
    n = len(diag)
    terms = []
    for i in range(n):
        c = _clean(0.25 * diag[i])
        terms.append((2 * i, 2 * i, 1.0, c))
        terms.append((2 * i + 1, 2 * i + 1, 1.0, c))
    for i in range(n):
        for j in range(i + 1, n):
            a = _clean(0.5 * off[(i, j)].real)
            b = _clean(0.5 * off[(i, j)].imag)
            terms.append((2 * i, 2 * j, 1.0, a))
            terms.append((2 * i + 1, 2 * j + 1, 1.0, a))
            terms.append((2 * i, 2 * j + 1, -1.0, b))
            terms.append((2 * i + 1, 2 * j, 1.0, b))
    return terms


def stencil_coefficients(H):
    """Stencil terms of sum_ij H^{i jbar} d_i d_jbar for full matrix H."""
    n = H.shape[-1]
    diag = [H[..., i, i].real for i in range(n)]
    off = {(i, j): H[..., i, j] for i in range(n) for j in range(i + 1, n)}
    return stencil_from_parts(diag, off)


def apply_operator(terms, u, h, out_mask=None):
    """L u on the full grid; `u` must be zero outside its unknown support."""
    h2 = h * h
    out = np.zeros_like(u)
    for p, q, s, c in terms:
        if p == q:
            d = ndimage.correlate1d(u, _D2_KERNEL, axis=p, mode="constant")
            d *= s / h2
        else:
            d = ndimage.correlate1d(u, _D1_KERNEL, axis=p, mode="constant")
            d = ndimage.correlate1d(d, _D1_KERNEL, axis=q, mode="constant",
                                    output=d)
            d *= s / (4.0 * h2)
        d *= c
        out += d
    if out_mask is not None:
        out[~out_mask] = 0.0
    return out


def diagonal(terms, h, shape):
    """Per-node diagonal of the operator (cross terms have zero center)."""
    diag = np.zeros(shape)
    for p, q, s, c in terms:
        if p == q:
            diag -= (2.0 * s / (h * h)) * c
    return diag


def _term_entries(p, q, s, c, h):
    """(offset, weight-field) pairs of one stencil term, excluding center."""
    h2 = h * h
    if p == q:
        e = [0] * c.ndim
        plus = list(e)
        plus[p] = 1
        minus = list(e)
        minus[p] = -1
        return [(tuple(plus), (s / h2) * c), (tuple(minus), (s / h2) * c)]
    entries = []
    for sp in (+1, -1):
        for sq in (+1, -1):
            off = [0] * c.ndim
            off[p], off[q] = sp, sq
            entries.append((tuple(off), (sp * sq * s / (4.0 * h2)) * c))
    return entries


def _shift_ids(ids, offset):
    out = ids
    for axis, off in enumerate(offset):
        if off:
            shifted = np.full_like(out, -1)
            src = [slice(None)] * out.ndim
            dst = [slice(None)] * out.ndim
            if off > 0:
                src[axis] = slice(off, None)
                dst[axis] = slice(None, -off)
            else:
                src[axis] = slice(None, off)
                dst[axis] = slice(-off, None)
            shifted[tuple(dst)] = out[tuple(src)]
            out = shifted
    return out


def assemble_sparse(terms, unknown, h):
    """CSR matrix of the operator restricted to the unknown node set."""
    count = int(unknown.sum())
    ids = np.full(unknown.shape, -1, dtype=np.int64)
    ids[unknown] = np.arange(count)
    rows, cols, vals = [], [], []
    center = np.zeros(count)
    for p, q, s, c in terms:
        if p == q:
            center -= (2.0 * s / (h * h)) * c[unknown]
        for off, w in _term_entries(p, q, s, c, h):
            neigh = _shift_ids(ids, off)[unknown]
            keep = neigh >= 0
            rows.append(ids[unknown][keep])
            cols.append(neigh[keep])
            vals.append(w[unknown][keep])
    rows.append(np.arange(count))
    cols.append(np.arange(count))
    vals.append(center)
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(count, count))
    return A.tocsr()


class Multigrid:
    """Geometric V-cycle for the expanded operator on ball grids."""

    def __init__(self, grid: BallGrid, terms, coarsest_m=9,
                 pre_smooth=2, post_smooth=2, omega=0.8):
        self.pre_smooth = pre_smooth
        self.post_smooth = post_smooth
        self.omega = omega
        self.levels = []
        g, t = grid, terms
        while True:
            unknown = g.interior
            self.levels.append({
                "grid": g, "terms": t, "unknown": unknown, "h": g.spacing,
                "diag": np.where(unknown, diagonal(t, g.spacing, g.shape), 1.0),
            })
            if g.m <= coarsest_m or (g.m - 1) % 2:
                break
            g = g.coarsen()
            sub = (slice(None, None, 2),) * g.dim
            t = [(p, q, s, c[sub].copy()) for p, q, s, c in t]
        bottom = self.levels[-1]
        A = assemble_sparse(bottom["terms"], bottom["unknown"], bottom["h"])
        self._coarse_lu = sla.splu(A.tocsc())

    def _smooth(self, level, u, b, iters):
        unknown, h = level["unknown"], level["h"]
        for _ in range(iters):
            r = apply_operator(level["terms"], u, h, unknown)
            np.subtract(b, r, out=r)
            r /= level["diag"]
            r *= self.omega
            r[~unknown] = 0.0
            u += r
        return u

    def _restrict(self, fine, r):
        r = np.where(fine["unknown"], r, 0.0)
        for axis in range(r.ndim):
            r = ndimage.convolve1d(r, _RESTRICT, axis=axis, mode="constant")
        return r[(slice(None, None, 2),) * r.ndim]

    def _prolong(self, coarse_e, fine_shape):
        e = np.zeros(fine_shape)
        e[(slice(None, None, 2),) * coarse_e.ndim] = coarse_e
        for axis in range(e.ndim):
            e = ndimage.convolve1d(e, _PROLONG, axis=axis, mode="constant")
        return e

    def _cycle(self, depth, b):
        level = self.levels[depth]
        unknown = level["unknown"]
        if depth == len(self.levels) - 1:
            u = np.zeros(level["grid"].shape)
            u[unknown] = self._coarse_lu.solve(b[unknown])
            return u
        u = self._smooth(level, np.zeros(level["grid"].shape), b,
                         self.pre_smooth)
        r = b - apply_operator(level["terms"], u, level["h"], unknown)
        rc = self._restrict(level, r)
        rc = np.where(self.levels[depth + 1]["unknown"], rc, 0.0)
        ec = self._cycle(depth + 1, rc)
        u = u + np.where(unknown, self._prolong(ec, level["grid"].shape), 0.0)
        return self._smooth(level, u, b, self.post_smooth)

    def vcycle(self, b):
        return self._cycle(0, b)


def solve_correction(grid: BallGrid, H, rhs, rtol=1e-12, atol=0.0):
    """Solve  L e = rhs  for e on the interior, e = 0 elsewhere.

    `H` is the raised coefficient field (..., n, n); `rhs` a full-grid real
    array read on interior nodes only.  Returns the full-grid correction.
    """
    return solve_correction_terms(grid, stencil_coefficients(H),
                                  rhs.astype(float), rtol=rtol, atol=atol)


def solve_correction_terms(grid: BallGrid, terms, rhs, rtol=1e-12, atol=0.0):
    """As solve_correction but taking pre-built stencil terms.

    `rhs` is consumed (zeroed outside the interior, NaNs scrubbed, in
    place) to avoid another full-grid copy.
    """
    unknown = grid.interior
    count = int(unknown.sum())
    b = np.nan_to_num(rhs, copy=False)
    b[~unknown] = 0.0
    out = np.zeros(grid.shape)
    if count == 0:
        return out
    if count <= _DIRECT_LIMIT[grid.dim]:
        A = assemble_sparse(terms, unknown, grid.spacing)
        out[unknown] = sla.spsolve(A.tocsc(), b[unknown])
        return out

    mg = Multigrid(grid, terms)

    def to_full(vec):
        full = np.zeros(grid.shape)
        full[unknown] = vec
        return full

    op = sla.LinearOperator(
        (count, count),
        matvec=lambda v: apply_operator(terms, to_full(v), grid.spacing,
                                        unknown)[unknown])
    precond = sla.LinearOperator(
        (count, count), matvec=lambda v: mg.vcycle(to_full(v))[unknown])
    x, info = sla.bicgstab(op, b[unknown], M=precond, rtol=rtol, atol=atol,
                           maxiter=200)
    if info != 0:
        raise RuntimeError(f"linear solve failed to converge (info={info})")
    out[unknown] = x
    return out
