"""Lipschitz graph domains ``{x_d > psi(x')}`` with piecewise-linear profiles.

The profile is stored as knot data.  In two dimensions the knots are points on
the line and ``psi`` is the linear interpolant, extended constantly outside the
knot interval.  In three dimensions the knots form a tensor grid, each grid cell
is split along the ``(i, j) -> (i + 1, j + 1)`` diagonal and ``psi`` is linear
on each triangle; outside the grid it is extended by ``psi(clip(x'))``.

Because the profile is piecewise linear, the distance to the boundary is
computed exactly as a minimum over boundary segments (``d = 2``) or triangles
(``d = 3``).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "DomainError",
    "GeometryError",
    "GraphDomain",
    "box_factor",
    "critical_exponent",
    "default_aperture",
    "distance_to_boundary",
    "load_profile",
    "save_profile",
    "vertical_gap",
]

# points per chunk in pairwise point/facet computations
_CHUNK = 4096


class DomainError(ValueError):
    """A point was expected to lie strictly inside the domain."""


class GeometryError(ValueError):
    """Invalid geometric input (degenerate radius, violated inclusion, ...)."""


def default_aperture(lipschitz: float) -> float:
    """Admissible cone aperture ``2 (1 + 2 M)``."""
    return 2.0 * (1.0 + 2.0 * lipschitz)


def box_factor(aperture: float, lipschitz: float) -> float:
    """The enlargement factor ``k = 10 a (M + 2)`` of the reverse Hoelder lemma."""
    return 10.0 * aperture * (lipschitz + 2.0)


def critical_exponent(d: int) -> float:
    """``2 (d - 1) / (d - 2)``; infinite for ``d = 2``."""
    if d == 2:
        return math.inf
    return 2.0 * (d - 1) / (d - 2)


def _segment_distance(p, a, b):
    """Distance from points ``p`` to segments ``[a, b]`` (broadcasting, last axis = coords)."""
    ab = b - a
    ap = p - a
    denom = np.einsum("...i,...i->...", ab, ab)
    s = np.clip(np.einsum("...i,...i->...", ap, ab) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    diff = ap - s[..., None] * ab
    return np.sqrt(np.einsum("...i,...i->...", diff, diff))


def _triangle_distance(p, a, b, c):
    """Distance from points ``p`` to triangles ``abc`` in R^3 (paired arrays)."""
    ab = b - a
    ac = c - a
    ap = p - a
    n = np.cross(ab, ac)
    nn = np.einsum("ij,ij->i", n, n)
    # projection onto the plane and its barycentric coordinates
    dist_plane = np.einsum("ij,ij->i", ap, n) / np.sqrt(nn)
    q = ap - (dist_plane / np.sqrt(nn))[:, None] * n
    d00 = np.einsum("ij,ij->i", ab, ab)
    d01 = np.einsum("ij,ij->i", ab, ac)
    d11 = np.einsum("ij,ij->i", ac, ac)
    d20 = np.einsum("ij,ij->i", q, ab)
    d21 = np.einsum("ij,ij->i", q, ac)
    det = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / det
    w = (d00 * d21 - d01 * d20) / det
    inside = (v >= 0) & (w >= 0) & (v + w <= 1)
    edge = np.minimum(
        np.minimum(_segment_distance(p, a, b), _segment_distance(p, b, c)),
        _segment_distance(p, a, c),
    )
    return np.where(inside, np.abs(dist_plane), edge)


class GraphDomain:
    """Region above the graph of a piecewise-linear Lipschitz profile.

    Parameters
    ----------
    knots : array_like or tuple of array_like
        Strictly increasing knot abscissae (``d = 2``) or a pair ``(xs, ys)``
        of grid lines (``d = 3``).
    values : array_like
        Profile values at the knots, shape ``(n,)`` or ``(nx, ny)``.
    truncation_radius : float
        Radius bounding every computation on the (unbounded) domain.
    lipschitz : float, optional
        Declared Lipschitz constant.  It is checked against the knot data and
        must not be smaller than the certified maximal slope.
    name : str, optional
        Label used in reports.
    """

    def __init__(self, knots, values, truncation_radius, lipschitz=None, name=None):
        values = np.asarray(values, dtype=float)
        if isinstance(knots, (tuple, list)) and len(knots) == 2 and np.ndim(knots[0]) == 1 \
                and values.ndim == 2:
            self.dim = 3
            xs = np.asarray(knots[0], dtype=float)
            ys = np.asarray(knots[1], dtype=float)
            if values.shape != (xs.size, ys.size):
                raise GeometryError(
                    f"height grid has shape {values.shape}, expected {(xs.size, ys.size)}")
            if xs.size < 2 or ys.size < 2:
                raise GeometryError("need at least two grid lines per direction")
            for name_, g in (("x", xs), ("y", ys)):
                if np.any(np.diff(g) <= 0):
                    raise GeometryError(f"{name_} grid lines must be strictly increasing")
            self.knots = (xs, ys)
        else:
            self.dim = 2
            xs = np.asarray(knots, dtype=float).ravel()
            if xs.size != values.size:
                raise GeometryError("knot and value arrays differ in length")
            if xs.size < 2:
                raise GeometryError("need at least two knots")
            if np.any(np.diff(xs) <= 0):
                raise GeometryError("knots must be strictly increasing")
            values = values.ravel()
            self.knots = xs
        if not np.all(np.isfinite(values)):
            raise GeometryError("profile values must be finite")
        self.values = values
        self.values.setflags(write=False)
        if truncation_radius <= 0:
            raise GeometryError("truncation radius must be positive")
        self.truncation_radius = float(truncation_radius)
        self.name = name or "graph"

        self._slopes = self._knot_slopes()
        certified = float(np.max(np.linalg.norm(self._slopes, axis=-1))) if self.dim == 3 \
            else float(np.max(np.abs(self._slopes)))
        if lipschitz is not None and lipschitz < certified - 1e-12:
            raise GeometryError(
                f"declared Lipschitz constant {lipschitz} is below the knot slope {certified}")
        self.lipschitz = certified
        psi0 = float(self.psi(np.zeros(self.dim - 1)))
        if abs(psi0) > 1e-12:
            raise GeometryError(f"profile must satisfy psi(0) = 0, got {psi0}")
        self._build_facets()

    # ------------------------------------------------------------------ builders
    @classmethod
    def flat(cls, d=2, truncation_radius=4.0, slope=0.0):
        """Half-space (or a tilted half-space ``x_d > slope * x_1``)."""
        ext = 2.0 * truncation_radius
        if d == 2:
            return cls([-ext, ext], [-slope * ext, slope * ext], truncation_radius,
                       name="flat" if slope == 0 else f"tilted{slope:g}")
        g = np.array([-ext, ext])
        h = np.outer(slope * g, np.ones(2))
        return cls((g, g.copy()), h, truncation_radius,
                   name="flat" if slope == 0 else f"tilted{slope:g}")

    @classmethod
    def sawtooth(cls, d=2, truncation_radius=4.0, lipschitz=1.0, period=1.0):
        """Triangle-wave profile in ``x_1`` with slopes ``+-M`` and ``psi(0) = 0``."""
        half = period / 2.0
        n = int(math.ceil(2.0 * truncation_radius / half))
        xs = half * np.arange(-n, n + 1)
        vals = np.where(np.arange(-n, n + 1) % 2 == 0, 0.0, lipschitz * half)
        if d == 2:
            return cls(xs, vals, truncation_radius, name=f"sawtooth{lipschitz:g}")
        ys = np.array([xs[0], xs[-1]])
        return cls((xs, ys), np.outer(vals, np.ones(2)), truncation_radius,
                   name=f"sawtooth{lipschitz:g}")

    @classmethod
    def random_piecewise_linear(cls, d=2, truncation_radius=4.0, lipschitz=0.5,
                                spacing=0.5, rng=None):
        """Random profile whose certified Lipschitz constant equals ``lipschitz``."""
        rng = np.random.default_rng(rng)
        n = int(math.ceil(1.5 * truncation_radius / spacing))
        xs = spacing * np.arange(-n, n + 1)
        if d == 2:
            slopes = rng.uniform(-lipschitz, lipschitz, size=xs.size - 1)
            slopes[rng.integers(slopes.size)] = lipschitz * rng.choice([-1.0, 1.0])
            vals = np.concatenate([[0.0], np.cumsum(slopes * spacing)])
            vals -= vals[n]
            return cls(xs, vals, truncation_radius, name=f"random{lipschitz:g}")
        heights = rng.uniform(-1.0, 1.0, size=(xs.size, xs.size))
        probe = cls((xs, xs), heights - heights[n, n], truncation_radius)
        heights = (heights - heights[n, n]) * (lipschitz / probe.lipschitz)
        return cls((xs, xs.copy()), heights, truncation_radius, name=f"random{lipschitz:g}")

    @classmethod
    def from_profile(cls, knots, values, truncation_radius, lipschitz=None, name=None,
                     normalize=True):
        """Build from raw knot data, shifting the profile so that ``psi(0) = 0``."""
        values = np.asarray(values, dtype=float)
        if normalize:
            tmp = cls.__new__(cls)
            tmp.dim = 3 if values.ndim == 2 else 2
            tmp.knots = (tuple(np.asarray(k, float) for k in knots) if tmp.dim == 3
                         else np.asarray(knots, float))
            tmp.values = values
            values = values - float(tmp.psi(np.zeros(tmp.dim - 1)))
        return cls(knots, values, truncation_radius, lipschitz=lipschitz, name=name)

    # ------------------------------------------------------------------ profile
    def _knot_slopes(self):
        if self.dim == 2:
            return np.diff(self.values) / np.diff(self.knots)
        xs, ys = self.knots
        v = self.values
        hx = np.diff(xs)[:, None]
        hy = np.diff(ys)[None, :]
        v00, v10, v01, v11 = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
        # lower triangle (lambda >= mu) and upper triangle gradients
        g0 = np.stack([(v10 - v00) / hx, (v11 - v10) / hy], axis=-1)
        g1 = np.stack([(v11 - v01) / hx, (v01 - v00) / hy], axis=-1)
        return np.stack([g0, g1], axis=2)  # (nx-1, ny-1, 2, 2)

    def _locate_cells(self, xp):
        xs, ys = self.knots
        cx = np.clip(xp[:, 0], xs[0], xs[-1])
        cy = np.clip(xp[:, 1], ys[0], ys[-1])
        i = np.clip(np.searchsorted(xs, cx, side="right") - 1, 0, xs.size - 2)
        j = np.clip(np.searchsorted(ys, cy, side="right") - 1, 0, ys.size - 2)
        lam = (cx - xs[i]) / (xs[i + 1] - xs[i])
        mu = (cy - ys[j]) / (ys[j + 1] - ys[j])
        return i, j, lam, mu

    def psi(self, xp):
        """Profile value at projections ``xp`` (shape ``(d-1,)`` or ``(n, d-1)``)."""
        xp = np.asarray(xp, dtype=float)
        if self.dim == 2:
            arr = xp[..., 0] if xp.ndim >= 2 and xp.shape[-1] == 1 else xp
            out = np.interp(arr, self.knots, self.values)
            if np.ndim(out) == 0 or xp.shape == (1,):
                return float(np.reshape(out, -1)[0])
            return out
        single = xp.ndim == 1
        pts = np.atleast_2d(xp)
        i, j, lam, mu = self._locate_cells(pts)
        v = self.values
        v00, v10, v01, v11 = v[i, j], v[i + 1, j], v[i, j + 1], v[i + 1, j + 1]
        lower = lam >= mu
        out = np.where(lower, v00 + lam * (v10 - v00) + mu * (v11 - v10),
                       v00 + mu * (v01 - v00) + lam * (v11 - v01))
        return float(out[0]) if single else out

    def psi_gradient(self, xp):
        """Gradient of the profile (one-sided at knots, zero outside the knot box)."""
        xp = np.atleast_2d(np.asarray(xp, dtype=float))
        if self.dim == 2:
            x = xp[:, 0]
            k = np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, self.knots.size - 2)
            g = self._slopes[k]
            g = np.where((x < self.knots[0]) | (x > self.knots[-1]), 0.0, g)
            return g[:, None]
        xs, ys = self.knots
        i, j, lam, mu = self._locate_cells(xp)
        tri = np.where(lam >= mu, 0, 1)
        g = self._slopes[i, j, tri].copy()
        g[(xp[:, 0] < xs[0]) | (xp[:, 0] > xs[-1]), 0] = 0.0
        g[(xp[:, 1] < ys[0]) | (xp[:, 1] > ys[-1]), 1] = 0.0
        return g

    def surface_element(self, xp):
        """``sqrt(1 + |grad psi|^2)`` at projections ``xp``."""
        g = self.psi_gradient(xp)
        return np.sqrt(1.0 + np.sum(g * g, axis=-1))

    def arclength(self, x):
        """Signed arclength of the graph from ``x' = 0`` to ``x`` (``d = 2`` only, exact)."""
        if self.dim != 2:
            raise GeometryError("arclength is defined for d = 2 only")
        xs = self.knots
        seg = np.sqrt(1.0 + self._slopes ** 2)
        cum = np.concatenate([[0.0], np.cumsum(seg * np.diff(xs))])
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        inner = cum[k] + seg[k] * (np.clip(x, xs[0], xs[-1]) - xs[k])
        inner = inner + np.minimum(x - xs[0], 0.0) + np.maximum(x - xs[-1], 0.0)
        k0 = np.clip(np.searchsorted(xs, 0.0, side="right") - 1, 0, xs.size - 2)
        origin = cum[k0] + seg[k0] * (np.clip(0.0, xs[0], xs[-1]) - xs[k0])
        return inner - origin

    def boundary_point(self, xp):
        """Lift projections ``xp`` to boundary points ``(x', psi(x'))``."""
        xp = np.asarray(xp, dtype=float)
        if xp.ndim == 1:
            return np.append(xp, self.psi(xp))
        return np.column_stack([xp, self.psi(xp)])

    def as_boundary_point(self, z):
        """Accept a projection (length ``d - 1``) or a full boundary point."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] == self.dim - 1:
            return self.boundary_point(z)
        return z

    # ------------------------------------------------------------------ facets
    def _build_facets(self):
        extent = (np.max(np.abs(self.knots)) if self.dim == 2
                  else max(np.max(np.abs(self.knots[0])), np.max(np.abs(self.knots[1]))))
        pad = 1e3 * (extent + self.truncation_radius)
        if self.dim == 2:
            xs = np.concatenate([[self.knots[0] - pad], self.knots, [self.knots[-1] + pad]])
            vs = np.concatenate([[self.values[0]], self.values, [self.values[-1]]])
            pts = np.column_stack([xs, vs])
            self._facets = np.stack([pts[:-1], pts[1:]], axis=1)  # (F, 2, 2)
        else:
            gx, gy = self.knots
            xs = np.concatenate([[gx[0] - pad], gx, [gx[-1] + pad]])
            ys = np.concatenate([[gy[0] - pad], gy, [gy[-1] + pad]])
            v = np.pad(self.values, 1, mode="edge")
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            P = np.stack([X, Y, v], axis=-1)
            p00, p10, p01, p11 = P[:-1, :-1], P[1:, :-1], P[:-1, 1:], P[1:, 1:]
            lower = np.stack([p00, p10, p11], axis=-2).reshape(-1, 3, 3)
            upper = np.stack([p00, p11, p01], axis=-2).reshape(-1, 3, 3)
            self._facets = np.concatenate([lower, upper], axis=0)  # (F, 3, 3)
        self._facet_lo = self._facets[:, :, :-1].min(axis=1)
        self._facet_hi = self._facets[:, :, :-1].max(axis=1)

    @property
    def facets(self):
        """Boundary segments/triangles (with far padding) as an array of vertex coordinates."""
        return self._facets

    # ------------------------------------------------------------------ metrics
    def _as_points(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[1] != self.dim:
            raise GeometryError(f"expected points in R^{self.dim}, got shape {x.shape}")
        return pts, single

    def vertical_gap(self, x, check=True):
        """``x_d - psi(x')``; raises :class:`DomainError` for points not above the graph."""
        pts, single = self._as_points(x)
        gap = pts[:, -1] - self.psi(pts[:, :-1])
        if check and np.any(gap <= 0):
            bad = pts[np.argmax(gap <= 0)]
            raise DomainError(f"point {bad.tolist()} is not inside the domain")
        return float(gap[0]) if single else gap

    def contains(self, x):
        pts, single = self._as_points(x)
        inside = pts[:, -1] > self.psi(pts[:, :-1])
        return bool(inside[0]) if single else inside

    def distance_to_boundary(self, x):
        """Exact Euclidean distance to the graph for points strictly inside."""
        pts, single = self._as_points(x)
        gap = self.vertical_gap(pts)
        out = np.array(gap, copy=True)  # delta <= vertical gap
        F = self._facets
        for start in range(0, pts.shape[0], _CHUNK):
            p = pts[start:start + _CHUNK]
            g = gap[start:start + _CHUNK]
            # horizontal distance from x' to the facet's bounding box
            lo = self._facet_lo[None, :, :]
            hi = self._facet_hi[None, :, :]
            xp = p[:, None, :-1]
            hd = np.sqrt(np.sum(np.maximum(np.maximum(lo - xp, xp - hi), 0.0) ** 2, axis=-1))
            ip, jf = np.nonzero(hd <= g[:, None])
            if ip.size == 0:
                continue
            q = p[ip]
            if self.dim == 2:
                dist = _segment_distance(q, F[jf, 0], F[jf, 1])
            else:
                dist = _triangle_distance(q, F[jf, 0], F[jf, 1], F[jf, 2])
            sub = out[start:start + _CHUNK]
            np.minimum.at(sub, ip, dist)
        return float(out[0]) if single else out

    # ------------------------------------------------------------------ misc
    def __repr__(self):
        return (f"GraphDomain(name={self.name!r}, d={self.dim}, M={self.lipschitz:.6g}, "
                f"R_trunc={self.truncation_radius:g})")

    def knot_spacing(self):
        """Grid spacing of the knots if uniform, else ``None``."""
        grids = [self.knots] if self.dim == 2 else list(self.knots)
        steps = []
        for g in grids:
            dg = np.diff(g)
            if not np.allclose(dg, dg[0], rtol=1e-12, atol=0.0):
                return None
            steps.append(dg[0])
        return tuple(steps)

    def sample_interior(self, n, rng=None, half_width=None, max_gap=None):
        """Random interior points with ``|x'|_inf < half_width`` and gap in ``(0, max_gap)``."""
        rng = np.random.default_rng(rng)
        hw = self.truncation_radius / 2 if half_width is None else half_width
        mg = self.truncation_radius / 2 if max_gap is None else max_gap
        xp = rng.uniform(-hw, hw, size=(n, self.dim - 1))
        t = rng.uniform(0.0, 1.0, size=n) * mg
        t = np.maximum(t, 1e-9 * mg)
        return np.column_stack([xp, self.psi(xp) + t])


def distance_to_boundary(domain, x):
    """``delta(x) = dist(x, boundary)`` for points strictly inside ``domain``."""
    return domain.distance_to_boundary(x)


def vertical_gap(domain, x):
    """``x_d - psi(x')`` for points inside a graph domain."""
    return domain.vertical_gap(x)


def _profile_error(path, lineno, msg):
    return GeometryError(f"{path}:{lineno}: {msg}")


def load_profile(path, normalize=True):
    """Read a profile file.

    Blank lines and ``#`` comments are ignored.  Header lines are
    ``dimension 2|3``, ``truncation_radius R`` and optionally ``lipschitz M``
    (checked against the certified knot slope).  For ``d = 2`` a ``knots``
    line is followed by ``x psi`` pairs; for ``d = 3`` lines ``x ...`` and
    ``y ...`` give the grid lines and a ``heights`` line is followed by one
    row of heights per ``x`` value.
    """
    header = {}
    rows = []
    mode = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, *rest = line.split()
            if key in ("knots", "heights"):
                mode = key
                continue
            if mode is None:
                if key not in ("dimension", "truncation_radius", "lipschitz", "name", "x", "y"):
                    raise _profile_error(path, lineno, f"unknown header key {key!r}")
                if key == "name":
                    header[key] = " ".join(rest)
                    continue
                try:
                    vals = [float(t) for t in rest]
                except ValueError:
                    raise _profile_error(path, lineno, "expected numbers") from None
                if key in ("x", "y"):
                    header[key] = vals
                elif len(vals) != 1:
                    raise _profile_error(path, lineno, f"{key} takes one value")
                else:
                    header[key] = vals[0]
                continue
            try:
                rows.append((lineno, [float(t) for t in line.split()]))
            except ValueError:
                raise _profile_error(path, lineno, "expected numbers") from None
    for key in ("dimension", "truncation_radius"):
        if key not in header:
            raise GeometryError(f"{path}: missing header {key!r}")
    d = int(header["dimension"])
    if d == 2:
        if mode != "knots":
            raise GeometryError(f"{path}: a 2-d profile needs a 'knots' section")
        for lineno, r in rows:
            if len(r) != 2:
                raise _profile_error(path, lineno, "expected an 'x psi' pair")
        data = np.array([r for _, r in rows])
        knots, values = data[:, 0], data[:, 1]
    elif d == 3:
        if mode != "heights" or "x" not in header or "y" not in header:
            raise GeometryError(f"{path}: a 3-d profile needs 'x', 'y' and 'heights'")
        knots = (np.array(header["x"]), np.array(header["y"]))
        if len(rows) != knots[0].size:
            raise GeometryError(f"{path}: {len(rows)} height rows for {knots[0].size} x values")
        for lineno, r in rows:
            if len(r) != knots[1].size:
                raise _profile_error(path, lineno, f"expected {knots[1].size} heights")
        values = np.array([r for _, r in rows])
    else:
        raise GeometryError(f"{path}: dimension must be 2 or 3, got {d}")
    return GraphDomain.from_profile(knots, values, header["truncation_radius"],
                                    lipschitz=header.get("lipschitz"),
                                    name=header.get("name", str(path)), normalize=normalize)


def save_profile(domain, path):
    """Write ``domain`` in the format read by :func:`load_profile`."""
    lines = [f"dimension {domain.dim}", f"truncation_radius {domain.truncation_radius!r}",
             f"lipschitz {domain.lipschitz!r}", f"name {domain.name}"]
    if domain.dim == 2:
        lines.append("knots")
        lines += [f"{x!r} {v!r}" for x, v in zip(domain.knots.tolist(), domain.values.tolist())]
    else:
        xs, ys = domain.knots
        lines.append("x " + " ".join(repr(v) for v in xs.tolist()))
        lines.append("y " + " ".join(repr(v) for v in ys.tolist()))
        lines.append("heights")
        lines += [" ".join(repr(v) for v in row) for row in domain.values.tolist()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
