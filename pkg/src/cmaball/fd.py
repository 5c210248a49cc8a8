"""Centered second-order finite differences on full grid arrays.

Operators act on arrays whose leading 2n axes are the grid axes; trailing
axes (tensor components) are untouched.  Nodes whose stencil leaves the
stored array are filled with NaN; validity bookkeeping is done by the
field layer via mask erosion.  One-sided differences are never used.
"""

from __future__ import annotations

import numpy as np


def shift(values: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """values[... i+offset ...] along `axis`, NaN-padded at the edges."""
    if offset == 0:
        return values
    out = np.full_like(values, np.nan)
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


def d1(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Centered first difference along a real axis."""
    return (shift(values, axis, +1) - shift(values, axis, -1)) / (2.0 * h)


def d2(values: np.ndarray, p: int, q: int, h: float) -> np.ndarray:
    """Centered second difference d^2/dxi_p dxi_q (p, q real axes).

    Accumulates in place; full-grid temporaries are expensive on the
    largest grids, so at most two are alive at a time.
    """
    if p == q:
        out = shift(values, p, +1)
        out += shift(values, p, -1)
        out -= 2.0 * values
        out /= h * h
        return out
    out = shift(shift(values, p, +1), q, +1)
    out -= shift(shift(values, p, +1), q, -1)
    out -= shift(shift(values, p, -1), q, +1)
    out += shift(shift(values, p, -1), q, -1)
    out /= 4.0 * h * h
    return out


def dz(values: np.ndarray, i: int, h: float) -> np.ndarray:
    """Holomorphic Wirtinger difference d/dz_i (0-based complex index)."""
    return 0.5 * (d1(values, 2 * i, h) - 1j * d1(values, 2 * i + 1, h))


def dzbar(values: np.ndarray, i: int, h: float) -> np.ndarray:
    """Antiholomorphic Wirtinger difference d/dzbar_i (0-based)."""
    return 0.5 * (d1(values, 2 * i, h) + 1j * d1(values, 2 * i + 1, h))


def dz_dzbar(values: np.ndarray, i: int, j: int, h: float) -> np.ndarray:
    """Mixed difference d^2/dz_i dzbar_j from real second differences.

    Exact (up to rounding) for polynomials of degree <= 2 in the real
    coordinates.
    """
    xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
    re = d2(values, xi, xj, h) + d2(values, yi, yj, h)
    im = d2(values, xi, yj, h) - d2(values, yi, xj, h)
    return 0.25 * re + 0.25j * im
