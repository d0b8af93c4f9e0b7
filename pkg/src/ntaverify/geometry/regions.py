"""Cones, surface balls and cubes, and Carleson boxes over a graph domain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import GeometryError, box_factor, default_aperture

__all__ = [
    "BallRegion",
    "ConeRegion",
    "CarlesonBox",
    "ConeSpec",
    "ContainmentResult",
    "SurfaceBall",
    "SurfaceCube",
    "ball_in_double_cone",
    "carleson_box_mesh_region",
    "cone_contains",
]


@dataclass(frozen=True)
class ConeSpec:
    """Aperture ``a`` and optional truncation height ``h`` of ``Gamma_a^h(z)``."""

    aperture: float
    height: float | None = None

    def __post_init__(self):
        if not self.aperture > 1.0:
            raise GeometryError(f"aperture must exceed 1, got {self.aperture}")
        if self.height is not None and not self.height > 0:
            raise GeometryError(f"truncation height must be positive, got {self.height}")

    @classmethod
    def for_domain(cls, domain, aperture=None, height=None):
        """Cone spec checked against ``a > 1 + 2M`` (default ``a = 2(1 + 2M)``)."""
        M = domain.lipschitz
        a = default_aperture(M) if aperture is None else float(aperture)
        if not a > 1.0 + 2.0 * M:
            raise GeometryError(f"aperture must exceed 1+2M = {1.0 + 2.0 * M:g}, got {a:g}")
        return cls(a, height)

    def doubled(self):
        """The spec of ``Gamma_{2a}^{2h}``."""
        return ConeSpec(2.0 * self.aperture, None if self.height is None else 2.0 * self.height)

    def truncated(self, height):
        return ConeSpec(self.aperture, height)


def cone_contains(domain, z, spec, x, delta=None):
    """True iff ``|x - z| < a delta(x)`` and (if truncated) ``delta(x) < h``.

    ``z`` may be a boundary point or its projection; ``x`` one point or an
    ``(n, d)`` array.  Precomputed distances can be passed as ``delta``.
    """
    z = domain.as_boundary_point(z)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    inside = domain.contains(pts)
    inside = np.atleast_1d(inside)
    dl = np.zeros(pts.shape[0])
    if delta is None:
        if np.any(inside):
            dl[inside] = domain.distance_to_boundary(pts[inside])
    else:
        dl = np.broadcast_to(np.asarray(delta, dtype=float), (pts.shape[0],)).copy()
    ok = inside & (np.linalg.norm(pts - z, axis=1) < spec.aperture * dl)
    if spec.height is not None:
        ok &= dl < spec.height
    return bool(ok[0]) if single else ok


@dataclass
class ContainmentResult:
    """Outcome of :func:`ball_in_double_cone`; truthy iff contained."""

    contained: bool
    counterexample: np.ndarray | None = None
    samples: int = 0

    def __bool__(self):
        return self.contained


def _ball_samples(d, n, rng):
    """Points filling the open unit ball: random interior plus near-sphere shell."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = rng.uniform(0.0, 1.0, size=n) ** (1.0 / d)
    inner = g * radii[:, None]
    shell = rng.standard_normal((n, d))
    shell /= np.linalg.norm(shell, axis=1, keepdims=True)
    shell *= 1.0 - 1e-9
    return np.vstack([np.zeros((1, d)), inner, shell])


def ball_in_double_cone(domain, z, spec, x, n_samples=1024, rng=0):
    """Certify ``B(x, delta(x)/4)`` lies in ``Gamma_{2a}^{2h}(z)`` by dense sampling.

    Returns a :class:`ContainmentResult`; a failure carries the first sample
    point of the ball that left the doubled cone.
    """
    x = np.asarray(x, dtype=float)
    z = domain.as_boundary_point(z)
    if not cone_contains(domain, z, spec, x):
        raise GeometryError(f"point {x.tolist()} is not in the cone at {z.tolist()}")
    rng = np.random.default_rng(rng)
    rho = domain.distance_to_boundary(x) / 4.0
    pts = x + rho * _ball_samples(domain.dim, n_samples, rng)
    big = spec.doubled()
    inside = domain.contains(pts)
    ok = np.zeros(pts.shape[0], dtype=bool)
    if np.any(inside):
        ok[inside] = cone_contains(domain, z, big, pts[inside])
    if np.all(ok):
        return ContainmentResult(True, None, pts.shape[0])
    return ContainmentResult(False, pts[np.argmin(ok)], pts.shape[0])


def _projections(xp, n):
    xp = np.asarray(xp, dtype=float)
    if xp.ndim <= 1:
        return xp.reshape(-1, 1) if n == 1 else xp.reshape(1, -1)
    return xp


@dataclass(frozen=True)
class SurfaceBall:
    """``Delta_r(z) = {(x', psi(x')) : |x' - z'| < r}``, stored by projection."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"surface ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    def contains(self, xp):
        xp = _projections(xp, len(self.center))
        return np.linalg.norm(xp - np.asarray(self.center), axis=1) < self.radius

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def scaled(self, factor):
        return SurfaceBall(self.center, self.radius * factor)


@dataclass(frozen=True)
class SurfaceCube:
    """Surface cube ``Q`` whose projection is an axis-parallel cube."""

    center: tuple
    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise GeometryError(f"cube side must be positive, got {self.side}")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    def dilate(self, alpha):
        """``alpha Q``: same center, side multiplied by ``alpha``."""
        return SurfaceCube(self.center, self.side * alpha)

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.side / 2.0, c + self.side / 2.0

    def contains(self, xp):
        xp = _projections(xp, len(self.center))
        lo, hi = self.bounds()
        return np.all((xp >= lo) & (xp <= hi), axis=1)

    def contains_cube(self, other):
        lo, hi = self.bounds()
        olo, ohi = other.bounds()
        return bool(np.all(olo >= lo - 1e-12) and np.all(ohi <= hi + 1e-12))

    def inside_ball(self, ball):
        """True if the closed cube lies in the open surface ball."""
        lo, hi = self.bounds()
        c = np.asarray(ball.center)
        far = np.maximum(np.abs(lo - c), np.abs(hi - c))
        return bool(np.linalg.norm(far) < ball.radius)

    def contains_ball(self, ball):
        lo, hi = self.bounds()
        blo, bhi = ball.bounds()
        return bool(np.all(blo >= lo - 1e-12) and np.all(bhi <= hi + 1e-12))

    def measure_projection(self):
        return self.side ** len(self.center)

    def children(self):
        """The ``2^(d-1)`` dyadic children."""
        n = len(self.center)
        c = np.asarray(self.center)
        q = self.side / 4.0
        out = []
        for signs in np.ndindex(*(2,) * n):
            off = (2 * np.asarray(signs) - 1) * q
            out.append(SurfaceCube(tuple(c + off), self.side / 2.0))
        return out


class CarlesonBox:
    """``D_r = {|x'| < r, psi(x') < x_d < 2(M+1) r}`` over a graph domain."""

    def __init__(self, domain, r, aperture=None):
        if not r > 0:
            raise GeometryError(f"box radius must be positive, got {r}")
        self.domain = domain
        self.r = float(r)
        M = domain.lipschitz
        self.top = 2.0 * (M + 1.0) * self.r
        self.aperture = default_aperture(M) if aperture is None else float(aperture)
        self.k = box_factor(self.aperture, M)

    def contains(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xp = x[:, :-1]
        return (np.linalg.norm(xp, axis=1) < self.r) & (x[:, -1] > self.domain.psi(xp)) \
            & (x[:, -1] < self.top)

    def bounds_box(self):
        d = self.domain.dim
        lo = np.full(d, -self.r)
        hi = np.full(d, self.r)
        lo[-1], hi[-1] = -np.inf, self.top
        return lo, hi

    def enlarged(self, factor):
        return CarlesonBox(self.domain, self.r * factor, self.aperture)

    def bounding_radius(self):
        """Radius of a ball about the origin containing the box."""
        M = self.domain.lipschitz
        low = M * self.r
        return math.hypot(self.r, max(self.top, low))

    def surface_ball(self):
        return SurfaceBall(np.zeros(self.domain.dim - 1), self.r)

    def __repr__(self):
        return f"CarlesonBox(r={self.r:g}, top={self.top:g}, k={self.k:g})"


class BallRegion:
    """``B(center, radius) cap Omega`` (domain membership is left to the mesh)."""

    def __init__(self, center, radius):
        if not radius > 0:
            raise GeometryError(f"ball radius must be positive, got {radius}")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def contains(self, x):
        return np.linalg.norm(np.atleast_2d(x) - self.center, axis=1) < self.radius

    def bounds_box(self):
        return self.center - self.radius, self.center + self.radius


class ConeRegion:
    """The cone ``Gamma_a^h(z)`` as an integration region."""

    def __init__(self, domain, z, spec):
        self.domain = domain
        self.z = domain.as_boundary_point(z)
        self.spec = spec

    def contains(self, x):
        return np.atleast_1d(cone_contains(self.domain, self.z, self.spec, np.atleast_2d(x)))

    def bounds_box(self):
        d = self.domain.dim
        if self.spec.height is None:
            return np.full(d, -np.inf), np.full(d, np.inf)
        rad = self.spec.aperture * self.spec.height
        return self.z - rad, self.z + rad


def carleson_box_mesh_region(domain, r, aperture=None):
    """The box ``D_r`` as a region, after checking it fits the truncation radius.

    Also checks ``D_{5ar}`` lies in ``B(0, k r)`` with ``k = 10 a (M + 2)``.
    """
    M = domain.lipschitz
    limit = domain.truncation_radius / (2.0 * (M + 1.0))
    if r > limit * (1 + 1e-12):
        raise GeometryError(f"box radius {r:g} exceeds R_trunc/(2(M+1)) = {limit:g}")
    box = CarlesonBox(domain, r, aperture)
    big = box.enlarged(5.0 * box.aperture)
    if not big.bounding_radius() <= box.k * r * (1 + 1e-12):
        raise GeometryError("D_{5ar} is not contained in B(0, 10a(M+2)r)")
    return box
