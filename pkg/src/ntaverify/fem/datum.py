"""Boundary data: smooth bump families, constants, tabulated data and cutoff products."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import RegularGridInterpolator

__all__ = [
    "BoundaryDatum",
    "BumpDatum",
    "ConstantDatum",
    "CutoffDatum",
    "TabulatedDatum",
    "bump_profile",
    "cutoff_profile",
]


def bump_profile(rho):
    """``exp(1 - 1/(1 - rho^2))`` for ``rho < 1``, else 0; equals 1 at the center."""
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    inside = rho < 1.0
    r2 = rho[inside] ** 2
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2))
    return out


def cutoff_profile(s, inner, outer):
    """C^1 radial cutoff: 1 for ``s <= inner``, 0 for ``s >= outer``, cubic in between."""
    t = np.clip((np.asarray(s, dtype=float) - inner) / (outer - inner), 0.0, 1.0)
    return 1.0 - t * t * (3.0 - 2.0 * t)


class BoundaryDatum:
    """A function ``f: R^d -> C^m`` evaluated at boundary points.

    Subclasses implement :meth:`__call__` returning ``(n, m)`` complex values.
    ``breakpoints()`` lists the abscissae (``d = 2``) where ``f`` restricted
    to a horizontal line is not smooth; quadrature oracles split there.
    """

    m = 1

    def __call__(self, x):  # pragma: no cover - interface
        raise NotImplementedError

    def breakpoints(self):
        return np.zeros(0)

    def support_radius(self):
        """Radius of a ball about the origin (in ``x'``) containing the support."""
        return np.inf

    def scaled(self, c):
        return _ScaledDatum(self, c)

    def __mul__(self, c):
        return self.scaled(c)

    __rmul__ = __mul__


def _dist(x, center):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = center.shape[0]
    return np.linalg.norm(x[:, :k] - center, axis=1)


class ConstantDatum(BoundaryDatum):
    """``f = c`` everywhere (``c`` an ``m``-vector)."""

    def __init__(self, value=1.0):
        self.value = np.atleast_1d(np.asarray(value, dtype=complex))
        self.m = self.value.size

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.broadcast_to(self.value, (x.shape[0], self.m)).copy()


class BumpDatum(BoundaryDatum):
    """Sum of bumps ``amplitude_k * bump(|x - c_k| / width_k)``.

    Centers with ``d - 1`` coordinates are compared with the projection
    ``x'`` (radial in the boundary variable); centers with ``d`` coordinates
    use the full Euclidean distance.
    """

    def __init__(self, centers, widths, amplitudes):
        self.centers = [np.atleast_1d(np.asarray(c, dtype=float)) for c in centers]
        self.widths = np.broadcast_to(np.asarray(widths, dtype=float), (len(self.centers),)).copy()
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.ndim == 0:
            amps = np.full((len(self.centers), 1), amps)
        elif amps.ndim == 1:
            amps = amps[:, None] if amps.size == len(self.centers) else \
                np.broadcast_to(amps, (len(self.centers), amps.size))
        self.amplitudes = np.asarray(amps, dtype=complex)
        self.m = self.amplitudes.shape[1]
        if np.any(self.widths <= 0):
            raise ValueError("bump widths must be positive")

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((x.shape[0], self.m), dtype=complex)
        for c, w, amp in zip(self.centers, self.widths, self.amplitudes):
            out += bump_profile(_dist(x, c) / w)[:, None] * amp[None, :]
        return out

    def breakpoints(self):
        pts = []
        for c, w in zip(self.centers, self.widths):
            if c.size == 1:
                pts += [c[0] - w, c[0], c[0] + w]
        return np.unique(np.asarray(pts, dtype=float))

    def support_radius(self):
        return max(float(np.linalg.norm(c[: max(1, c.size)])) + w
                   for c, w in zip(self.centers, self.widths))


class TabulatedDatum(BoundaryDatum):
    """Multilinear interpolation of tabulated values on a grid of ``x'``."""

    def __init__(self, grids, values):
        self.grids = [np.asarray(g, dtype=float) for g in grids]
        vals = np.asarray(values, dtype=complex)
        if vals.ndim == len(self.grids):
            vals = vals[..., None]
        self.m = vals.shape[-1]
        self._re = RegularGridInterpolator(self.grids, vals.real, bounds_error=False,
                                           fill_value=0.0)
        self._im = RegularGridInterpolator(self.grids, vals.imag, bounds_error=False,
                                           fill_value=0.0)
        self.values = vals

    def __call__(self, x):
        xp = np.atleast_2d(np.asarray(x, dtype=float))[:, : len(self.grids)]
        return self._re(xp) + 1j * self._im(xp)

    def breakpoints(self):
        return self.grids[0] if len(self.grids) == 1 else np.zeros(0)


class CutoffDatum(BoundaryDatum):
    """``phi f`` (or ``(1 - phi) f`` with ``complement=True``) for the radial cutoff
    ``phi`` equal to 1 on ``|x' - z'| <= inner`` and 0 beyond ``outer``."""

    def __init__(self, base, center, inner, outer=None, complement=False):
        self.base = base
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.inner = float(inner)
        self.outer = 2.0 * self.inner if outer is None else float(outer)
        self.complement = complement
        self.m = base.m

    def phi(self, x):
        return cutoff_profile(_dist(x, self.center), self.inner, self.outer)

    def __call__(self, x):
        p = self.phi(x)
        if self.complement:
            p = 1.0 - p
        return p[:, None] * self.base(x)

    def breakpoints(self):
        extra = []
        if self.center.size == 1:
            c = self.center[0]
            extra = [c - self.outer, c - self.inner, c + self.inner, c + self.outer]
        return np.unique(np.concatenate([self.base.breakpoints(), extra]))

    def support_radius(self):
        if self.complement:
            return self.base.support_radius()
        return min(self.base.support_radius(), float(np.linalg.norm(self.center)) + self.outer)


class _ScaledDatum(BoundaryDatum):
    def __init__(self, base, c):
        self.base = base
        self.c = complex(c)
        self.m = base.m

    def __call__(self, x):
        return self.c * self.base(x)

    def breakpoints(self):
        return self.base.breakpoints()

    def support_radius(self):
        return self.base.support_radius()
