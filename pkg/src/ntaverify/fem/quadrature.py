"""Quadrature on simplices and balls.

Simplex rules are collapsed Gauss-Jacobi product rules (positive weights,
strictly interior nodes).  Nodes are returned in barycentric coordinates and
weights sum to one, so ``sum(w * f(x)) * volume`` integrates over a simplex.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = ["ball_rule", "composite_rule", "simplex_rule", "subdivide_reference"]


@lru_cache(maxsize=None)
def simplex_rule(d, degree=4):
    """Barycentric nodes ``(q, d+1)`` and weights ``(q,)`` exact to ``degree``."""
    n = degree // 2 + 1
    if d == 1:
        x, w = roots_legendre(n)
        t = 0.5 * (x + 1.0)
        return np.column_stack([1.0 - t, t]), w / w.sum()
    if d == 2:
        xa, wa = roots_jacobi(n, 1.0, 0.0)
        xb, wb = roots_legendre(n)
        a = 0.5 * (xa + 1.0)  # collapsed coordinate with (1-a) weight
        b = 0.5 * (xb + 1.0)
        A, B = np.meshgrid(a, b, indexing="ij")
        WA, WB = np.meshgrid(wa, wb, indexing="ij")
        u = A.ravel()
        v = ((1.0 - A) * B).ravel()
        w = (WA * WB).ravel()
        bary = np.column_stack([1.0 - u - v, u, v])
        return bary, w / w.sum()
    if d == 3:
        xa, wa = roots_jacobi(n, 2.0, 0.0)
        xb, wb = roots_jacobi(n, 1.0, 0.0)
        xc, wc = roots_legendre(n)
        a = 0.5 * (xa + 1.0)
        b = 0.5 * (xb + 1.0)
        c = 0.5 * (xc + 1.0)
        A, B, C = np.meshgrid(a, b, c, indexing="ij")
        WA, WB, WC = np.meshgrid(wa, wb, wc, indexing="ij")
        u = A.ravel()
        v = ((1.0 - A) * B).ravel()
        s = ((1.0 - A) * (1.0 - B) * C).ravel()
        w = (WA * WB * WC).ravel()
        bary = np.column_stack([1.0 - u - v - s, u, v, s])
        return bary, w / w.sum()
    raise ValueError(f"unsupported simplex dimension {d}")


def _children(simplex):
    """Midpoint (red) refinement of a simplex given by barycentric vertex rows."""
    d = simplex.shape[0] - 1
    m = {}
    for i in range(d + 1):
        for j in range(i, d + 1):
            m[i, j] = 0.5 * (simplex[i] + simplex[j])
    if d == 1:
        return [np.array([m[0, 0], m[0, 1]]), np.array([m[0, 1], m[1, 1]])]
    if d == 2:
        return [
            np.array([m[0, 0], m[0, 1], m[0, 2]]),
            np.array([m[0, 1], m[1, 1], m[1, 2]]),
            np.array([m[0, 2], m[1, 2], m[2, 2]]),
            np.array([m[0, 1], m[1, 2], m[0, 2]]),
        ]
    # Bey's refinement: four corner tetrahedra and the octahedron cut along 02-13
    x0, x1, x2, x3 = (m[i, i] for i in range(4))
    x01, x02, x03, x12, x13, x23 = m[0, 1], m[0, 2], m[0, 3], m[1, 2], m[1, 3], m[2, 3]
    return [
        np.array([x0, x01, x02, x03]),
        np.array([x01, x1, x12, x13]),
        np.array([x02, x12, x2, x23]),
        np.array([x03, x13, x23, x3]),
        np.array([x01, x02, x03, x13]),
        np.array([x01, x02, x12, x13]),
        np.array([x02, x03, x13, x23]),
        np.array([x02, x12, x13, x23]),
    ]


@lru_cache(maxsize=None)
def subdivide_reference(d, levels):
    """Barycentric vertices ``(k, d+1, d+1)`` of the ``levels``-fold red refinement."""
    simplices = [np.eye(d + 1)]
    for _ in range(levels):
        simplices = [c for s in simplices for c in _children(s)]
    return np.stack(simplices)


@lru_cache(maxsize=None)
def composite_rule(d, levels, degree=2):
    """Composite rule on the refined reference simplex (barycentric nodes, weights)."""
    subs = subdivide_reference(d, levels)
    bary, w = simplex_rule(d, degree)
    nodes = np.einsum("qi,kij->kqj", bary, subs).reshape(-1, d + 1)
    weights = np.tile(w, subs.shape[0]) / subs.shape[0]
    return nodes, weights


@lru_cache(maxsize=None)
def ball_rule(d, n_radial=None, n_angular=None):
    """Averaging rule on the unit ball: offsets ``(q, d)`` and weights summing to one.

    Polar (``d = 2``) or spherical (``d = 3``) product of Gauss rules; exact
    for polynomials of degree 3 and below.
    """
    if d == 2:
        nr = 3 if n_radial is None else n_radial
        nt = 8 if n_angular is None else n_angular
        xr, wr = roots_jacobi(nr, 0.0, 1.0)  # weight (1 + x) ~ r on [0, 1]
        r = 0.5 * (xr + 1.0)
        theta = 2.0 * np.pi * (np.arange(nt) + 0.5) / nt
        R, T = np.meshgrid(r, theta, indexing="ij")
        W = np.outer(wr, np.full(nt, 1.0 / nt))
        pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
        w = W.ravel()
        return pts, w / w.sum()
    if d == 3:
        nr = 2 if n_radial is None else n_radial
        nt = 6 if n_angular is None else n_angular
        xr, wr = roots_jacobi(nr, 0.0, 2.0)  # weight r^2
        r = 0.5 * (xr + 1.0)
        xc, wc = roots_legendre(3 if n_angular is None else max(2, nt // 2))
        phi = 2.0 * np.pi * (np.arange(nt) + 0.5) / nt
        R, C, P = np.meshgrid(r, xc, phi, indexing="ij")
        W = wr[:, None, None] * wc[None, :, None] * np.full(nt, 1.0 / nt)[None, None, :]
        S = np.sqrt(1.0 - C ** 2)
        pts = np.column_stack([(R * S * np.cos(P)).ravel(), (R * S * np.sin(P)).ravel(),
                               (R * C).ravel()])
        w = W.ravel()
        return pts, w / w.sum()
    raise ValueError(f"unsupported dimension {d}")
