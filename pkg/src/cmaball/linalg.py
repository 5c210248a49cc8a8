"""Closed-form per-node operations on 1x1 / 2x2 Hermitian matrices.

All functions take arrays shaped (..., n, n) and vectorize over the
leading axes.  Closed forms avoid batched LAPACK calls, which matters on
the largest grids (tens of millions of nodes).
"""

from __future__ import annotations

import numpy as np


def herm_det(G: np.ndarray) -> np.ndarray:
    """Determinant of Hermitian matrices; returned real."""
    n = G.shape[-1]
    if n == 1:
        return G[..., 0, 0].real
    if n == 2:
        return (G[..., 0, 0].real * G[..., 1, 1].real
                - (G[..., 0, 1] * G[..., 1, 0]).real)
    return np.linalg.det(G).real


def herm_inv(G: np.ndarray) -> np.ndarray:
    """Raised-index matrix g^{i jbar} with g^{i jbar} g_{k jbar} = delta_ik.

    For Hermitian G this is conj(G^{-1}).
    """
    n = G.shape[-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        if n == 1:
            return 1.0 / np.conj(G)
        if n == 2:
            det = herm_det(G)[..., None, None]
            inv = np.empty_like(G)
            inv[..., 0, 0] = G[..., 1, 1]
            inv[..., 1, 1] = G[..., 0, 0]
            inv[..., 0, 1] = -G[..., 0, 1]
            inv[..., 1, 0] = -G[..., 1, 0]
            return np.conj(inv) / det
    return np.conj(np.linalg.inv(G))


def plain_inv(G: np.ndarray) -> np.ndarray:
    """Ordinary matrix inverse (closed form for n <= 2)."""
    return np.conj(herm_inv(G))


def herm_eig_bounds(G: np.ndarray):
    """(min, max) eigenvalue of Hermitian matrices, both real arrays."""
    n = G.shape[-1]
    if n == 1:
        e = G[..., 0, 0].real
        return e, e.copy()
    if n == 2:
        half_tr = 0.5 * (G[..., 0, 0].real + G[..., 1, 1].real)
        det = herm_det(G)
        disc = np.sqrt(np.maximum(half_tr**2 - det, 0.0))
        return half_tr - disc, half_tr + disc
    w = np.linalg.eigvalsh(G)
    return w[..., 0], w[..., -1]


def herm_min_eig(G: np.ndarray) -> np.ndarray:
    return herm_eig_bounds(G)[0]


def pencil_eig_bounds(A: np.ndarray, B: np.ndarray):
    """(min, max) generalized eigenvalues of A v = lambda B v, B positive.

    Both A and B Hermitian.  Solved via the characteristic polynomial of
    the pencil, so no per-node factorization is needed.
    """
    n = A.shape[-1]
    if n == 1:
        e = A[..., 0, 0].real / B[..., 0, 0].real
        return e, e.copy()
    if n == 2:
        # det(A - t B) = det(B) t^2 - c1 t + det(A) with
        # c1 = A00 B11 + A11 B00 - A01 B10 - A10 B01 (real for Hermitian A, B)
        detB = herm_det(B)
        detA = herm_det(A)
        c1 = (A[..., 0, 0] * B[..., 1, 1] + A[..., 1, 1] * B[..., 0, 0]
              - A[..., 0, 1] * B[..., 1, 0] - A[..., 1, 0] * B[..., 0, 1]).real
        half = 0.5 * c1 / detB
        disc = np.sqrt(np.maximum(half**2 - detA / detB, 0.0))
        return half - disc, half + disc
    import scipy.linalg as sla
    lo = np.empty(A.shape[:-2])
    hi = np.empty(A.shape[:-2])
    for idx in np.ndindex(A.shape[:-2]):
        w = sla.eigvalsh(A[idx], B[idx])
        lo[idx], hi[idx] = w[0], w[-1]
    return lo, hi
