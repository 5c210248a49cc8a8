"""Grid-sampled fields: scalars, tensors, Hermitian metrics.

Fields are immutable after construction.  `values` is a full-grid array
(grid axes first, tensor component axes last) holding NaN wherever the
field is undefined; `valid` is the matching boolean mask.  Operations in
`geometry` shrink validity by one stencil ring per derivative taken.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import BallGrid, erode
from . import symbolic

# index kinds for TensorField variance
HOLO_UP = "u"        # holomorphic contravariant  (e.g. theta^gamma)
HOLO_DOWN = "d"      # holomorphic covariant      (e.g. phi_j)
ANTI_DOWN = "b"      # antiholomorphic covariant  (e.g. phi_kbar)

_KINDS = (HOLO_UP, HOLO_DOWN, ANTI_DOWN)


def _masked(values, grid, valid, dtype):
    values = np.asarray(values, dtype=dtype)
    extra = values.shape[grid.dim:]
    if values.shape[:grid.dim] != grid.shape:
        raise ValueError("values do not match the grid shape")
    out = values.copy()
    out[~valid] = np.nan
    return out, extra


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: BallGrid
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vals, extra = _masked(self.values, self.grid, self.valid,
                              self.values.dtype if
                              np.iscomplexobj(self.values) else float)
        if extra:
            raise ValueError("scalar field cannot carry component axes")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid, fn, valid=None, real=True):
        """Sample fn(points (...,n) complex) on the whole grid."""
        valid = grid.in_ball if valid is None else valid
        zs = grid.complex_coords()
        pts = np.stack([np.broadcast_to(z, grid.shape) for z in zs], axis=-1)
        vals = np.asarray(fn(pts), dtype=float if real else complex)
        vals = np.broadcast_to(vals, grid.shape)
        return cls(grid, vals, valid)

    @classmethod
    def from_expr(cls, grid, expr, valid=None, real=True):
        return cls.from_function(grid, symbolic.compile_expr(expr, grid.n),
                                 valid=valid, real=real)

    def interior_values(self):
        return self.values[self.grid.interior & self.valid]

    def max_abs(self, where=None):
        where = self.valid if where is None else (where & self.valid)
        if not where.any():
            return np.nan
        return float(np.nanmax(np.abs(self.values[where])))


@dataclass(frozen=True, eq=False)
class TensorField:
    grid: BallGrid
    variance: tuple
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        variance = tuple(self.variance)
        if any(k not in _KINDS for k in variance):
            raise ValueError(f"unknown index kind in {variance}")
        vals, extra = _masked(self.values, self.grid, self.valid, complex)
        if extra != (self.grid.n,) * len(variance):
            raise ValueError("component axes do not match the variance list")
        object.__setattr__(self, "variance", variance)
        object.__setattr__(self, "values", vals)

    @property
    def rank(self):
        return len(self.variance)

    def max_abs(self, where=None):
        where = self.valid if where is None else (where & self.valid)
        if not where.any():
            return np.nan
        comp = self.values[where]
        return float(np.nanmax(np.abs(comp)))

    def conj(self):
        """Complex conjugate; 'd' and 'b' indices swap roles."""
        swap = {HOLO_DOWN: ANTI_DOWN, ANTI_DOWN: HOLO_DOWN, HOLO_UP: HOLO_UP}
        return TensorField(self.grid, tuple(swap[k] for k in self.variance),
                           np.conj(self.values), self.valid)


@dataclass(frozen=True, eq=False)
class HermitianMetricField:
    """Per-node positive Hermitian matrix g_{i jbar} (entry [i, j])."""

    grid: BallGrid
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        vals, extra = _masked(self.values, self.grid, self.valid, complex)
        if extra != (self.grid.n, self.grid.n):
            raise ValueError("metric values must be n x n matrices per node")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_matrix(cls, grid, matrix: symbolic.ExprMatrix, valid=None):
        valid = grid.in_ball if valid is None else valid
        zs = grid.complex_coords()
        pts = np.stack([np.broadcast_to(z, grid.shape) for z in zs], axis=-1)
        return cls(grid, matrix(pts), valid)

    def check_hermitian(self, tol=1e-10):
        v = self.values[self.valid]
        return float(np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2)))))

    def as_tensor(self):
        return TensorField(self.grid, (HOLO_DOWN, ANTI_DOWN),
                           self.values, self.valid)


def to_real_coords(points):
    """Complex points (..., n) -> interleaved real coords (..., 2n)."""
    points = np.asarray(points, dtype=complex)
    out = np.empty(points.shape[:-1] + (2 * points.shape[-1],))
    out[..., 0::2] = points.real
    out[..., 1::2] = points.imag
    return out


def interpolate(grid: BallGrid, values: np.ndarray, points: np.ndarray):
    """Multilinear interpolation of a full-grid array at complex points.

    `values` has grid axes first and arbitrary component axes last; result
    is NaN wherever any corner of the containing cell is NaN.
    """
    xi = to_real_coords(points)
    t = (xi + 1.0) / grid.spacing
    i0 = np.floor(t).astype(np.int64)
    np.clip(i0, 0, grid.m - 2, out=i0)
    frac = t - i0
    extra = values.shape[grid.dim:]
    out = np.zeros(xi.shape[:-1] + extra,
                   dtype=values.dtype if np.iscomplexobj(values) else float)
    for corner in range(1 << grid.dim):
        w = np.ones(xi.shape[:-1])
        idx = []
        for p in range(grid.dim):
            bit = (corner >> p) & 1
            idx.append(i0[..., p] + bit)
            w = w * (frac[..., p] if bit else 1.0 - frac[..., p])
        vals = values[tuple(idx)]
        out += w.reshape(w.shape + (1,) * len(extra)) * vals
    return out
