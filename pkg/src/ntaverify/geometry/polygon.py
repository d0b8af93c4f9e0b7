"""Bounded polygonal domains in the plane and their localization into graph charts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import GeometryError, GraphDomain, _segment_distance, default_aperture

__all__ = [
    "Chart",
    "default_aperture_for",
    "LocalizationError",
    "PolygonDomain",
    "localize_polygon",
    "verify_chart_graph",
    "verify_cover",
]


class LocalizationError(GeometryError):
    """The polygon is not a graph at the requested scale near some vertex."""


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


class PolygonDomain:
    """Simple polygon given by its vertices (reoriented counterclockwise)."""

    dim = 2

    def __init__(self, vertices, name="polygon"):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise GeometryError("polygon needs at least three 2-D vertices")
        area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if abs(area) < 1e-14:
            raise GeometryError("degenerate polygon")
        if area < 0:
            v = v[::-1].copy()
        self.vertices = v
        self.name = name
        self.area = abs(area)
        n = v.shape[0]
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise GeometryError(f"polygon edges {i} and {j} intersect")
        self.edges = np.stack([v, np.roll(v, -1, axis=0)], axis=1)  # (n, 2, 2)
        self.edge_lengths = np.linalg.norm(self.edges[:, 1] - self.edges[:, 0], axis=1)
        self.perimeter = float(self.edge_lengths.sum())

    @classmethod
    def unit_square(cls):
        return cls([[0, 0], [1, 0], [1, 1], [0, 1]], name="square")

    @classmethod
    def l_shape(cls):
        return cls([[0, 0], [1, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 1]], name="L-shape")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        p = np.atleast_2d(x)
        a = self.edges[:, 0]
        b = self.edges[:, 1]
        px = p[:, 0:1]
        py = p[:, 1:2]
        cond = (a[None, :, 1] > py) != (b[None, :, 1] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[None, :, 0] + (py - a[None, :, 1]) * (b[None, :, 0] - a[None, :, 0]) \
                / (b[None, :, 1] - a[None, :, 1])
        crossings = np.sum(cond & (px < xint), axis=1)
        inside = (crossings % 2 == 1) & (self.distance_to_boundary(p, check=False) > 0)
        return bool(inside[0]) if single else inside

    def distance_to_boundary(self, x, check=True):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        p = np.atleast_2d(x)
        d = _segment_distance(p[:, None, :], self.edges[None, :, 0], self.edges[None, :, 1])
        out = d.min(axis=1)
        if check:
            inside = self.contains(p)
            if not np.all(inside):
                from .graph import DomainError
                raise DomainError(f"point {p[np.argmin(inside)].tolist()} is not inside the polygon")
        return float(out[0]) if single else out

    def interior_angle(self, i):
        v = self.vertices
        n = v.shape[0]
        d2 = v[(i + 1) % n] - v[i]
        d1 = v[i - 1] - v[i]
        ang = math.atan2(d2[0] * d1[1] - d2[1] * d1[0], float(np.dot(d2, d1)))
        return ang % (2.0 * math.pi)

    def boundary_samples(self, spacing):
        """Cell-centred boundary samples: points, arclength weights and edge ids."""
        pts, wts, ids = [], [], []
        for e, (a, b) in enumerate(self.edges):
            L = self.edge_lengths[e]
            n = max(1, int(math.ceil(L / spacing)))
            s = (np.arange(n) + 0.5) / n
            pts.append(a + s[:, None] * (b - a))
            wts.append(np.full(n, L / n))
            ids.append(np.full(n, e))
        return np.vstack(pts), np.concatenate(wts), np.concatenate(ids)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


@dataclass
class Chart:
    """A rotated/translated graph chart ``B(origin, radius) cap Omega``.

    Local coordinates are ``(s, t) = R^T (x - origin)``; the boundary in the
    ball is ``t = psi(s)`` of :attr:`domain` and the polygon lies above it.
    """

    kind: str
    index: int
    origin: np.ndarray
    rotation: np.ndarray
    domain: GraphDomain
    radius: float
    cover_radius: float

    def to_local(self, x):
        return (np.atleast_2d(x) - self.origin) @ self.rotation

    def to_global(self, y):
        return np.atleast_2d(y) @ self.rotation.T + self.origin

    @property
    def lipschitz(self):
        return self.domain.lipschitz


def _frame(e2):
    e2 = e2 / np.linalg.norm(e2)
    e1 = np.array([e2[1], -e2[0]])
    return np.column_stack([e1, e2])


def _dist_to_edges(polygon, point, skip):
    d = [float(_segment_distance(point, a, b)) for k, (a, b) in enumerate(polygon.edges)
         if k not in skip]
    return min(d) if d else math.inf


def localize_polygon(polygon, c1=0.8, max_lipschitz=4.0):
    """Cover the boundary of ``polygon`` with graph charts.

    Every vertex gets a corner chart whose frame is aligned with the inward
    angle bisector (so the boundary is ``t = |s| cot(theta/2)``), and the
    uncovered middle parts of edges get flat edge charts.  The covering balls
    are ``B(origin, c1 * radius)``.

    Raises
    ------
    LocalizationError
        If a corner is too sharp for ``max_lipschitz``.
    """
    v = polygon.vertices
    n = v.shape[0]
    charts = []
    cover = np.zeros(n)
    for i in range(n):
        theta = polygon.interior_angle(i)
        M = abs(1.0 / math.tan(theta / 2.0)) if abs(math.tan(theta / 2.0)) > 1e-15 else math.inf
        if not M <= max_lipschitz:
            raise LocalizationError(
                f"vertex {i} at {v[i].tolist()} has interior angle {math.degrees(theta):.3g} deg, "
                f"Lipschitz constant {M:.3g} exceeds {max_lipschitz:g}")
        nxt = (i + 1) % n
        prv = (i - 1) % n
        d2 = (v[nxt] - v[i]) / polygon.edge_lengths[i]
        c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
        bis = np.array([c * d2[0] - s * d2[1], s * d2[0] + c * d2[1]])
        R = _frame(bis)
        radius = 0.5 * min(polygon.edge_lengths[i], polygon.edge_lengths[prv],
                           _dist_to_edges(polygon, v[i], {i, prv}))
        if not radius > 0:
            raise LocalizationError(f"vertex {i} has no admissible chart radius")
        local = (np.array([v[prv], v[nxt]]) - v[i]) @ R
        # boundary inside the ball: t = |s| cot(theta/2) on both sides
        slope_l = local[0, 1] / local[0, 0]
        slope_r = local[1, 1] / local[1, 0]
        knots = np.array([-radius, 0.0, radius])
        vals = np.array([-radius * slope_l, 0.0, radius * slope_r])
        gd = GraphDomain(knots, vals, truncation_radius=radius, name=f"corner{i}")
        charts.append(Chart("corner", i, v[i].copy(), R, gd, radius, c1 * radius))
        cover[i] = c1 * radius

    for e in range(n):
        a, b = polygon.edges[e]
        L = polygon.edge_lengths[e]
        lo = cover[e]
        hi = L - cover[(e + 1) % n]
        if lo >= hi:
            continue
        tangent = (b - a) / L
        normal = np.array([-tangent[1], tangent[0]])
        R = _frame(normal)
        for m in range(1, 10000):
            half = (hi - lo) / (2 * m)
            centres = lo + half * (2 * np.arange(m) + 1)
            radii = []
            for sc in centres:
                p = a + sc * tangent
                radii.append(0.5 * min(sc, L - sc, _dist_to_edges(polygon, p, {e})))
            radii = np.asarray(radii)
            if np.all(c1 * radii > half):
                break
        else:  # pragma: no cover - unreachable for simple polygons
            raise LocalizationError(f"edge {e} cannot be covered")
        for sc, rad in zip(centres, radii):
            gd = GraphDomain(np.array([-rad, rad]), np.zeros(2), truncation_radius=rad,
                             name=f"edge{e}")
            charts.append(Chart("edge", e, a + sc * tangent, R, gd, float(rad), c1 * float(rad)))
    return charts


def default_aperture_for(charts):
    """``2(1 + 2M)`` for the largest chart Lipschitz constant."""
    return default_aperture(max(ch.lipschitz for ch in charts))


def verify_cover(polygon, charts, spacing=1e-3):
    """Check that the covering balls contain every boundary sample.

    Returns the array of uncovered sample points (empty when the cover holds).
    """
    pts, _, _ = polygon.boundary_samples(spacing)
    pts = np.vstack([pts, polygon.vertices])
    covered = np.zeros(pts.shape[0], dtype=bool)
    for ch in charts:
        covered |= np.linalg.norm(pts - ch.origin, axis=1) < ch.cover_radius
    return pts[~covered]


def verify_chart_graph(polygon, chart, n=2000, rng=0):
    """Check that inside the chart ball the polygon is exactly the region above the graph.

    Returns the maximal boundary deviation ``|t - psi(s)|`` and the number of
    interior/exterior misclassifications among random samples in the ball.
    """
    rng = np.random.default_rng(rng)
    pts, _, _ = polygon.boundary_samples(chart.radius / 200.0)
    inball = np.linalg.norm(pts - chart.origin, axis=1) < chart.radius
    loc = chart.to_local(pts[inball])
    dev = float(np.max(np.abs(loc[:, 1] - chart.domain.psi(loc[:, 0])))) if loc.size else 0.0
    ang = rng.uniform(0, 2 * math.pi, n)
    rad = chart.radius * np.sqrt(rng.uniform(0, 1, n))
    samp = chart.origin + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    locs = chart.to_local(samp)
    above = locs[:, 1] > chart.domain.psi(locs[:, 0])
    inside = polygon.contains(samp)
    on_edge = np.abs(locs[:, 1] - chart.domain.psi(locs[:, 0])) < 1e-12
    wrong = int(np.sum((above != inside) & ~on_edge))
    return dev, wrong
