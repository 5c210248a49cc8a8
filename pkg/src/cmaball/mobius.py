"""Automorphisms of the unit ball, translation maps, and pullbacks.

The automorphism sending a to the origin is

    T_a(z) = Gamma(a) (z - a) / (1 - abar^t z),

with the rank-one/stable form Gamma(a) = P_a - v Q_a, where P_a is the
orthogonal projection onto a, Q_a = I - P_a and v = sqrt(1 - |a|^2).
T_a(a) = 0, T_{-a} = T_a^{-1}, and T_a preserves the unit sphere.  For
a = 0 the direction-dependent limit of Gamma is replaced by the identity
map (any automorphism fixing 0 serves equally).

Translation maps L(a, h, z) = T_{a+h}^{-1}(T_a(z)) move a to a + h while
staying inside the automorphism group; they are holomorphic in z with
the explicit Jacobian obtained by the chain rule.

All maps are immutable value objects; `apply` and `jacobian` vectorize
over arbitrary leading point axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fields import HermitianMetricField, ScalarField, interpolate

_DEGENERATE_TOL = 1e-14


def _as_point(a):
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    if a.ndim != 1:
        raise ValueError("a ball point must be a complex n-vector")
    return a


@dataclass(frozen=True, eq=False)
class BallAutomorphism:
    """The map T_a; construct through make_automorphism."""

    a: np.ndarray

    def __post_init__(self):
        a = _as_point(self.a)
        if np.vdot(a, a).real >= 1.0:
            raise ValueError(f"base point lies outside the open ball: {a}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self):
        return self.a.shape[0]

    @cached_property
    def v(self):
        return float(np.sqrt(1.0 - np.vdot(self.a, self.a).real))

    @cached_property
    def gamma(self):
        r2 = np.vdot(self.a, self.a).real
        eye = np.eye(self.n)
        if r2 == 0.0:
            return eye
        P = np.outer(self.a, np.conj(self.a)) / r2
        return P - self.v * (eye - P)

    def inverse(self):
        return BallAutomorphism(-self.a)

    def _denominator(self, points):
        s = np.asarray(points @ np.conj(self.a))
        if np.any(np.abs(1.0 - s) < _DEGENERATE_TOL):
            raise ValueError("degenerate aligned-boundary input to T_a")
        return 1.0 - s

    def apply(self, points):
        points = np.asarray(points, dtype=complex)
        den = self._denominator(points)
        num = (points - self.a) @ self.gamma.T
        return num / den[..., None]

    __call__ = apply

    def jacobian(self, points):
        """Holomorphic Jacobian dT_a/dz, shape (..., n, n), [i, k] = dT^i/dz_k."""
        points = np.asarray(points, dtype=complex)
        den = self._denominator(points)
        inner = (den[..., None, None] * np.eye(self.n)
                 + (points - self.a)[..., :, None] * np.conj(self.a))
        J = np.einsum("im,...mk->...ik", self.gamma, inner)
        return J / (den**2)[..., None, None]


def make_automorphism(a) -> BallAutomorphism:
    return BallAutomorphism(_as_point(a))


@dataclass(frozen=True, eq=False)
class TranslationMap:
    """L(a, h, z) = T_{a+h}^{-1}(T_a(z)); construct through make_translation."""

    first: BallAutomorphism          # T_a
    second_inverse: BallAutomorphism  # T_{-(a+h)} = T_{a+h}^{-1}

    @property
    def a(self):
        return self.first.a

    @property
    def h(self):
        return -self.second_inverse.a - self.first.a

    @property
    def n(self):
        return self.first.n

    def apply(self, points):
        return self.second_inverse.apply(self.first.apply(points))

    __call__ = apply

    def jacobian(self, points):
        mid = self.first.apply(points)
        return np.einsum("...ij,...jk->...ik",
                         self.second_inverse.jacobian(mid),
                         self.first.jacobian(points))

    def compose(self, other: "TranslationMap") -> "TranslationMap":
        """The translation map following this one's target: other after self."""
        if not np.allclose(other.a, self.a + self.h, atol=1e-13):
            raise ValueError("translation maps do not chain: base point mismatch")
        return make_translation(self.a, self.h + other.h)


def make_translation(a, h, eta=None) -> TranslationMap:
    a = _as_point(a)
    h = _as_point(h)
    na = float(np.linalg.norm(a))
    nh = float(np.linalg.norm(h))
    if na + nh >= 1.0:
        raise ValueError(f"|a| + |h| = {na + nh:.6g} >= 1")
    if eta is not None and (na > 1.0 - eta or nh > 0.5 * eta):
        raise ValueError(f"(a, h) violates the margin eta = {eta}")
    return TranslationMap(make_automorphism(a),
                          make_automorphism(a + h).inverse())


def pullback_scalar(L: TranslationMap, u: ScalarField) -> ScalarField:
    """(L*u)(z) = u(L(z)) on u's grid, multilinear interpolation at images."""
    grid = u.grid
    pts = grid.points(grid.in_ball)
    images = L.apply(pts)
    vals = np.full(grid.shape, np.nan)
    vals[grid.in_ball] = interpolate(grid, u.values, images)
    valid = grid.in_ball & np.isfinite(vals)
    return ScalarField(grid, vals, valid)


def pullback_form(L: TranslationMap, g: HermitianMetricField) -> HermitianMetricField:
    """(L*g)_{i jbar}(z) = J^k_i conj(J^l_j) g_{k lbar}(L(z))."""
    grid = g.grid
    pts = grid.points(grid.in_ball)
    images = L.apply(pts)
    J = L.jacobian(pts)
    gL = interpolate(grid, g.values, images)
    pulled = np.einsum("...ki,...lj,...kl->...ij", J, np.conj(J), gL,
                       optimize=True)
    pulled = 0.5 * (pulled + np.conj(np.swapaxes(pulled, -1, -2)))
    vals = np.full(grid.shape + (grid.n, grid.n), np.nan, dtype=complex)
    vals[grid.in_ball] = pulled
    valid = grid.in_ball & np.all(np.isfinite(vals), axis=(-2, -1))
    return HermitianMetricField(grid, vals, valid)
