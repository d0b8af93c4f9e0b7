"""Poisson extension of boundary data into the upper half-plane.

``u(x, y) = (1/pi) * int f(x + y tan(theta)) dtheta`` over ``(-pi/2, pi/2)``;
the substitution turns the Poisson kernel into a bounded integrand.  The
theta-range is cut at the images of the datum's breakpoints and support
ends, and at ``x +- y 4^k`` so that the kernel peak is resolved when ``y``
is small; each piece gets a Gauss-Legendre rule.
"""

from __future__ import annotations

import numpy as np
from scipy.special import roots_legendre

__all__ = ["HalfPlanePoisson"]


class HalfPlanePoisson:
    """Harmonic extension of a compactly supported datum on ``{y = 0}``."""

    def __init__(self, datum, nodes=24, support=None):
        self.datum = datum
        self.m = datum.m
        self.nodes = nodes
        self._x, self._w = roots_legendre(nodes)
        bp = np.asarray(datum.breakpoints(), dtype=float)
        if support is None:
            rad = datum.support_radius()
            if not np.isfinite(rad):
                raise ValueError("the Poisson oracle needs a compactly supported datum")
            support = (-rad, rad)
        self.support = (float(support[0]), float(support[1]))
        bp = bp[(bp > self.support[0]) & (bp < self.support[1])]
        self.breaks = np.unique(np.concatenate([[self.support[0]], bp, [self.support[1]]]))

    def evaluate(self, points, chunk=4096):
        """Values ``(n, m)``; points on ``y = 0`` return the datum itself."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((p.shape[0], self.m), dtype=complex)
        on = p[:, 1] <= 0
        if np.any(on):
            out[on] = self.datum(np.column_stack([p[on, 0], np.zeros(on.sum())]))
        idx = np.flatnonzero(~on)
        idx = idx[np.argsort(p[idx, 1], kind="stable")]
        lo_s, hi_s = self.support
        span = hi_s - lo_s
        for s in range(0, idx.size, chunk):
            ii = idx[s: s + chunk]
            x = p[ii, 0][:, None]
            y = p[ii, 1][:, None]
            K = int(np.clip(np.ceil(np.log(span / y.min()) / np.log(4.0)), 0, 30))
            grade = y * 4.0 ** np.arange(K + 1)[None, :]
            cuts = np.concatenate([np.broadcast_to(self.breaks, (ii.size, self.breaks.size)),
                                   x - grade, x + grade, x], axis=1)
            cuts = np.sort(np.clip(cuts, lo_s, hi_s), axis=1)
            th = np.arctan((cuts - x) / y)
            lo, hi = th[:, :-1], th[:, 1:]
            half = 0.5 * (hi - lo)
            mid = 0.5 * (hi + lo)
            T = mid[:, :, None] + half[:, :, None] * self._x[None, None, :]
            arg = x[:, :, None] + y[:, :, None] * np.tan(T)
            f = self.datum(np.column_stack([arg.ravel(), np.zeros(arg.size)]))
            f = f.reshape(ii.size, lo.shape[1], self.nodes, self.m)
            out[ii] = np.einsum("nk,q,nkqm->nm", half, self._w, f) / np.pi
        return out

    def values_at(self, points, cells=None, bary=None):
        return self.evaluate(points)

    def trace(self, xp):
        xp = np.asarray(xp, dtype=float).reshape(-1)
        return self.datum(np.column_stack([xp, np.zeros(xp.size)]))
