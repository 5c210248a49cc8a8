"""Uniform Cartesian grids on the unit ball of C^n (real dimension 2n).

Axis ordering is (x1, y1, ..., xn, yn); axis 2i holds Re(z_{i+1}) and axis
2i+1 holds Im(z_{i+1}).  Nodes are tagged exterior / boundary-band /
interior; a node is interior exactly when every node of its full centered
3^(2n) stencil cube lies in the closed ball, so all centered first and
second differences (including mixed ones) are available there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

EXTERIOR = 0
BAND = 1
INTERIOR = 2

# mask comparisons use a tolerance so nodes exactly on the sphere count
_BALL_TOL = 1e-12


@dataclass(frozen=True)
class BallGrid:
    """Grid of m nodes per real axis over [-1, 1]^{2n}, masked to the ball."""

    n: int
    m: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("complex dimension must be 1 or 2")
        if self.m < 5 or self.m % 2 == 0:
            raise ValueError("m must be odd and at least 5")

    @property
    def spacing(self) -> float:
        return 2.0 / (self.m - 1)

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def shape(self):
        return (self.m,) * self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.m)

    def coord(self, p: int) -> np.ndarray:
        """Coordinate p broadcast to the grid shape, stored sparsely."""
        sh = [1] * self.dim
        sh[p] = self.m
        return self.axis.reshape(sh)

    @cached_property
    def radius2(self) -> np.ndarray:
        r2 = np.zeros(self.shape)
        for p in range(self.dim):
            r2 = r2 + self.coord(p) ** 2
        return r2

    @cached_property
    def in_ball(self) -> np.ndarray:
        return self.radius2 <= 1.0 + _BALL_TOL

    @cached_property
    def mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=np.int8)
        inside = self.in_ball
        inner = erode(inside)
        mask[inside] = BAND
        mask[inner] = INTERIOR
        return mask

    @cached_property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    @cached_property
    def band(self) -> np.ndarray:
        return self.mask == BAND

    def points(self, where: np.ndarray) -> np.ndarray:
        """Complex coordinates z (count, n) of the nodes selected by `where`."""
        idx = np.argwhere(where)
        xy = -1.0 + idx * self.spacing
        return (xy[:, 0::2] + 1j * xy[:, 1::2]).reshape(-1, self.n)

    def complex_coords(self):
        """Broadcastable complex coordinate arrays z_1, ..., z_n."""
        return [self.coord(2 * i) + 1j * self.coord(2 * i + 1)
                for i in range(self.n)]

    def coarsen(self) -> "BallGrid":
        """Grid with every other node; coarse nodes coincide with fine ones."""
        if (self.m - 1) % 2:
            raise ValueError("m - 1 must be even to coarsen")
        return BallGrid(self.n, (self.m - 1) // 2 + 1)


def erode(valid: np.ndarray, times: int = 1) -> np.ndarray:
    """Shrink a validity mask by full-cube stencil reach, `times` rings."""
    structure = np.ones((3,) * valid.ndim, dtype=bool)
    return ndimage.binary_erosion(valid, structure=structure,
                                  iterations=times, border_value=0)
