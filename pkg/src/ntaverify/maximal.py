"""Modified nontangential maximal functions and surface norms.

``N_a^h(u)(z) = sup { A(u)(x) : x in Gamma_a^h(z) }`` where ``A(u)(x)`` is the
L^2 average of ``u`` over ``B(x, delta(x)/4)``.  The supremum is taken over a
Whitney-style candidate cloud: layers at vertical gaps ``eta_k = eta_0 rho^k``
with lateral spacing ``eta_k / 4``.  The boundary limit ``|u(z)|`` (the value
of ``A(u)(x)`` as ``x -> z`` for continuous traces) is always a candidate.

Fields are any objects with ``evaluate(points) -> (n, m)``: finite element
solutions, closed-form fields, or the half-plane Poisson oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from .fem.quadrature import ball_rule
from .geometry.regions import ConeRegion, ConeSpec

__all__ = [
    "BoundaryGrid",
    "CandidateCloud",
    "MaximalError",
    "MaximalField",
    "ball_l2_average",
    "ball_averages",
    "boundary_grid",
    "cloud_top",
    "cone_bound_check",
    "cone_bound_constant",
    "maximal_field",
    "nontangential_max",
    "surface_lp_norm",
    "truncation_defect",
]

BALL_FACTOR = 0.25


class MaximalError(ValueError):
    """Empty cones, unresolved regions or out-of-range surface sets."""


def ball_averages(field, points, delta):
    """``(avg over B(x, delta/4) of |u|^2)^{1/2}`` for every row of ``points``."""
    points = np.atleast_2d(points)
    d = points.shape[1]
    offs, w = ball_rule(d)
    q = offs.shape[0]
    out = np.empty(points.shape[0])
    step = max(1, 200_000 // q)
    for s in range(0, points.shape[0], step):
        p = points[s: s + step]
        r = BALL_FACTOR * np.asarray(delta[s: s + step])
        pts = (p[:, None, :] + r[:, None, None] * offs[None]).reshape(-1, d)
        vals = field.evaluate(pts)
        sq = np.sum(np.abs(vals) ** 2, axis=1).reshape(p.shape[0], q)
        if not np.all(np.isfinite(sq)):
            raise MaximalError("ball average left the sampled region of the field")
        out[s: s + step] = np.sqrt(sq @ w)
    return out


def ball_l2_average(field, x, domain):
    """``(fint_{B(x, delta(x)/4)} |u|^2)^{1/2}`` at a single interior point."""
    x = np.asarray(x, dtype=float)
    delta = np.atleast_1d(domain.distance_to_boundary(x))
    return float(ball_averages(field, x[None, :], delta)[0])


@dataclass
class BoundaryGrid:
    """Cell-centred boundary samples: projections ``z`` and surface weights ``dsigma``."""

    domain: object
    points: np.ndarray  # (n, d-1)
    weights: np.ndarray  # (n,)
    lo: np.ndarray
    hi: np.ndarray
    spacing: float

    @property
    def boundary_points(self):
        return self.domain.boundary_point(self.points)

    def select(self, region):
        """Indices of samples in a surface ball or cube; error if it leaves the grid."""
        rlo, rhi = region.bounds()
        tol = 1e-9 * max(1.0, self.spacing)
        if np.any(np.asarray(rlo) < self.lo - tol) or np.any(np.asarray(rhi) > self.hi + tol):
            raise MaximalError(f"surface region {region} lies outside the sampled grid "
                               f"[{self.lo.tolist()}, {self.hi.tolist()}]")
        return np.flatnonzero(region.contains(self.points))


def boundary_grid(domain, lo, hi, n):
    """Grid of ``n`` cells per direction on ``[lo, hi]^(d-1)`` with exact arclength
    weights (``d = 2``) or a 6x6 Gauss rule on the surface element (``d = 3``)."""
    k = domain.dim - 1
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (k,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (k,)).copy()
    edges = [np.linspace(lo[i], hi[i], n + 1) for i in range(k)]
    if k == 1:
        e = edges[0]
        s = domain.arclength(e)
        pts = 0.5 * (e[1:] + e[:-1])
        return BoundaryGrid(domain, pts[:, None], np.diff(s), lo, hi, float(e[1] - e[0]))
    ex, ey = edges
    cx, cy = 0.5 * (ex[1:] + ex[:-1]), 0.5 * (ey[1:] + ey[:-1])
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    g, gw = np.polynomial.legendre.leggauss(6)
    hx, hy = ex[1] - ex[0], ey[1] - ey[0]
    sub = np.array([[a * hx / 2, b * hy / 2] for a in g for b in g])
    sw = np.outer(gw, gw).ravel() / 4.0
    se = domain.surface_element((pts[:, None, :] + sub[None]).reshape(-1, 2)).reshape(-1, sub.shape[0])
    weights = hx * hy * (se @ sw)
    return BoundaryGrid(domain, pts, weights, lo, hi, float(max(hx, hy)))


class CandidateCloud:
    """Interior points at which ball averages are sampled for cone suprema.

    Layer ``k`` sits at vertical gap ``eta_k = eta0 * rho^k`` (up to ``top``),
    laterally on a lattice of spacing ``spacing * eta_k`` covering
    ``[lo - a eta_k, hi + a eta_k]`` clipped to ``|x'|_inf <= lateral``.
    """

    def __init__(self, domain, lo, hi, aperture, top, eta0, rho=math.sqrt(2.0), spacing=0.25,
                 lateral=None, ceiling=None):
        self.domain = domain
        d = domain.dim
        k = d - 1
        lo = np.broadcast_to(np.asarray(lo, float), (k,))
        hi = np.broadcast_to(np.asarray(hi, float), (k,))
        lateral = np.inf if lateral is None else float(lateral)
        self._bounds = (lo, hi)
        self.params = dict(aperture=aperture, top=top, eta0=eta0, rho=rho, spacing=spacing,
                           lateral=lateral, ceiling=ceiling)
        pts, levels = [], []
        eta = eta0
        level = 0
        while eta < top * (1 + 1e-12):
            step = spacing * eta
            axes = []
            for i in range(k):
                a0 = max(lo[i] - aperture * eta, -lateral)
                a1 = min(hi[i] + aperture * eta, lateral)
                off = 0.5 * step if level % 2 else 0.0
                n0 = math.floor((a0 - off) / step)
                n1 = math.ceil((a1 - off) / step)
                ax = off + step * np.arange(n0, n1 + 1)
                axes.append(ax[(ax >= a0) & (ax <= a1)])
            if k == 1:
                xp = axes[0][:, None]
            else:
                X, Y = np.meshgrid(*axes, indexing="ij")
                xp = np.column_stack([X.ravel(), Y.ravel()])
            xd = domain.psi(xp) + eta
            layer = np.column_stack([xp, xd])
            if ceiling is not None:
                layer = layer[layer[:, -1] + 0.3 * eta <= ceiling]
            pts.append(layer)
            levels.append(np.full(layer.shape[0], level))
            eta *= rho
            level += 1
        if not pts:
            raise MaximalError("candidate cloud is empty; lower eta0 or raise top")
        self.points = np.vstack(pts)
        self.level = np.concatenate(levels)
        self.delta = domain.distance_to_boundary(self.points)
        self.nlevels = level

    def refined(self):
        p = self.params
        return CandidateCloud(self.domain, *self._bounds, p["aperture"], p["top"], p["eta0"],
                              math.sqrt(p["rho"]), p["spacing"] / 2.0, p["lateral"], p["ceiling"])

    @classmethod
    def for_grid(cls, grid, aperture, top, eta0=None, **kw):
        eta0 = grid.spacing if eta0 is None else eta0
        return cls(grid.domain, grid.lo, grid.hi, aperture, top, eta0, **kw)

    def __len__(self):
        return self.points.shape[0]


@dataclass
class MaximalField:
    """Values of ``N_a^h(u)`` at boundary samples with their maximizers."""

    grid: BoundaryGrid
    values: np.ndarray
    argmax: np.ndarray  # (n, d); the boundary point itself for the boundary limit
    aperture: float
    height: float | None
    ball_factor: float = BALL_FACTOR
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        k = self.grid.points.shape[1]
        d = self.argmax.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"z{i}" for i in range(k)] + ["N"] + [f"argmax{i}" for i in range(d)])
            for z, v, a in zip(self.grid.points, self.values, self.argmax):
                w.writerow([repr(float(c)) for c in z] + [repr(float(v))]
                           + [repr(float(c)) for c in a])

    def __add__(self, other):
        return MaximalField(self.grid, self.values + other.values, self.argmax, self.aperture,
                            self.height)


def _cone_sup(cloud, A, zb, spec, z_chunk=256):
    """Max of ``A`` over cloud points in each cone; returns values and argmax indices."""
    pts, delta = cloud.points, cloud.delta
    a = spec.aperture
    keep = np.ones(pts.shape[0], dtype=bool) if spec.height is None else delta < spec.height
    P, D, Av = pts[keep], delta[keep], A[keep]
    idx_keep = np.flatnonzero(keep)
    k = zb.shape[1] - 1
    n = zb.shape[0]
    best = np.full(n, -np.inf)
    arg = np.full(n, -1, dtype=np.int64)
    order = np.lexsort(zb[:, :k].T[::-1])
    reach = a * D  # lateral reach of each point's cones
    for s in range(0, n, z_chunk):
        zi = order[s: s + z_chunk]
        Z = zb[zi]
        zlo, zhi = Z[:, :k].min(axis=0), Z[:, :k].max(axis=0)
        near = np.all((P[:, :k] >= zlo - reach[:, None]) & (P[:, :k] <= zhi + reach[:, None]),
                      axis=1)
        cand = np.flatnonzero(near)
        for c0 in range(0, cand.size, 40_000):
            cc = cand[c0: c0 + 40_000]
            dist = np.linalg.norm(P[cc][None, :, :] - Z[:, None, :], axis=2)
            inside = dist < a * D[cc][None, :]
            vals = np.where(inside, Av[cc][None, :], -np.inf)
            j = np.argmax(vals, axis=1)
            v = vals[np.arange(zi.size), j]
            better = v > best[zi]
            best[zi[better]] = v[better]
            arg[zi[better]] = idx_keep[cc[j[better]]]
    return best, arg


def cloud_top(domain, spec, top=None):
    """Largest vertical gap a cloud needs: points with ``delta < h`` have gap below
    ``sqrt(2) (M + 1) h``; untruncated cones use the explicit ``top``."""
    if spec.height is None:
        if top is None:
            raise MaximalError("an untruncated cone needs an explicit search top")
        return float(top)
    need = math.sqrt(2.0) * (domain.lipschitz + 1.0) * spec.height
    return need if top is None else min(need, float(top))


def maximal_field(field, grid, spec, cloud=None, top=None, eta0=None, tol=0.005, max_refine=0,
                  lateral=None, ceiling=None, averages=None):
    """``N_a^h(u)`` on every sample of ``grid``.

    The cloud is refined (``rho -> sqrt(rho)``, spacing halved) until the
    values change by less than ``tol`` relatively, at most ``max_refine``
    times.  ``averages`` lets callers reuse ball averages on a given cloud.
    """
    if cloud is None:
        cloud = CandidateCloud.for_grid(grid, spec.aperture, cloud_top(grid.domain, spec, top),
                                        eta0, lateral=lateral, ceiling=ceiling)
    zb = grid.boundary_points
    limit = np.sqrt(np.sum(np.abs(field.evaluate(zb)) ** 2, axis=1))
    history = []
    for it in range(max_refine + 1):
        A = ball_averages(field, cloud.points, cloud.delta) if averages is None or it else averages
        best, arg = _cone_sup(cloud, A, zb, spec)
        use_limit = limit >= best
        values = np.where(use_limit, limit, best)
        argmax = np.where(use_limit[:, None], zb, cloud.points[np.maximum(arg, 0)])
        history.append(values)
        if it and np.max(np.abs(values - history[-2]) / np.maximum(values, 1e-300)) < tol:
            break
        if it < max_refine:
            cloud = cloud.refined()
    mf = MaximalField(grid, values, argmax, spec.aperture, spec.height,
                      meta={"cloud_size": len(cloud), "refinements": len(history) - 1})
    mf.cloud = cloud
    mf.averages = A
    return mf


def nontangential_max(field, z, spec, domain, top=None, eta0=None, tol=0.005, max_refine=4,
                      lateral=None, ceiling=None):
    """``N_a^h(u)(z)`` at one boundary point; returns ``(value, argmax point)``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))[: domain.dim - 1]
    ctop = cloud_top(domain, spec, top)
    eta0 = ctop / 64.0 if eta0 is None else eta0
    if spec.height is not None and eta0 >= spec.height:
        raise MaximalError(f"truncated cone is empty at this resolution; use h > {eta0:g}")
    grid = BoundaryGrid(domain, z[None, :], np.ones(1), z, z, eta0)
    cloud = CandidateCloud.for_grid(grid, spec.aperture, ctop, eta0, lateral=lateral,
                                    ceiling=ceiling)
    mf = maximal_field(field, grid, spec, cloud=cloud, tol=tol, max_refine=max_refine)
    return float(mf.values[0]), mf.argmax[0]


def surface_lp_norm(values, grid, region=None, p=2.0, average=False):
    """``(int_region |g|^p dsigma)^{1/p}``, or the ``fint`` form with ``average=True``.

    ``values`` is a :class:`MaximalField` or an array sampled on ``grid``.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    v = values.values if isinstance(values, MaximalField) else np.asarray(values)
    v = np.abs(v).reshape(grid.points.shape[0], -1)
    v = np.sqrt(np.sum(v ** 2, axis=1))
    idx = np.arange(v.size) if region is None else grid.select(region)
    if idx.size == 0:
        raise MaximalError("surface region contains no samples")
    w = grid.weights[idx]
    if np.isinf(p):
        return float(v[idx].max())
    total = float(np.sum(w * v[idx] ** p))
    if average:
        total /= float(np.sum(w))
    return total ** (1.0 / p)


def truncation_defect(field, mf_full, mf_trunc, index, ball):
    """``N(u)(z) - N^h(u)(z)`` at sample ``index`` and the bound ``C fint_ball N(u)``.

    ``C = sigma(ball) / sigma(S)`` where ``S`` is the set of samples in the
    ball whose cones contain the maximizer of ``N(u)(z)``; every such sample
    satisfies ``N(u)(y) >= N(u)(z)``, which yields the bound.
    """
    grid = mf_full.grid
    defect = max(0.0, float(mf_full.values[index] - mf_trunc.values[index]))
    idx = grid.select(ball)
    w = grid.weights[idx]
    sigma = float(w.sum())
    avg = float(np.sum(w * mf_full.values[idx]) / sigma)
    if defect == 0.0:
        return defect, 0.0, avg
    x = mf_full.argmax[index]
    spec = ConeSpec(mf_full.aperture)
    delta = grid.domain.distance_to_boundary(x)
    inside = np.linalg.norm(grid.boundary_points[idx] - x, axis=1) < spec.aperture * delta
    s_meas = float(w[inside].sum())
    if s_meas <= 0:
        raise MaximalError("no sample of the ball sees the maximizer; enlarge the ball")
    C = sigma / s_meas
    if defect > C * avg * (1 + 1e-9) + 1e-14:
        raise MaximalError(f"truncation defect {defect:.6g} exceeds bound {C * avg:.6g}")
    return defect, C, avg


def cone_bound_constant(d, q):
    """``(5^d / omega_d)^{1/q}`` with ``omega_d`` the unit-ball volume."""
    omega = math.pi ** (d / 2) / gamma_fn(d / 2 + 1)
    return (5.0 ** d / omega) ** (1.0 / q)


def cone_bound_check(field, z, spec, q, domain, mesh=None, eta0=None, cone_integral=None,
                  max_refine=3):
    """Pointwise cone bound ``N_a^h(u)(z) <= C (int_{Gamma_{2a}^{2h}(z)} |u|^q delta^{-d})^{1/q}``.

    ``cone_integral`` may supply the integral (e.g. in closed form); otherwise
    it is computed on ``mesh`` (or the field's mesh) with clipped quadrature.
    """
    from .fem.solver import region_integral
    from .inequalities import InequalityReport

    if q < 2:
        raise ValueError("q must be at least 2")
    if spec.height is None:
        raise ValueError("the cone bound needs a truncation height")
    d = domain.dim
    lhs, argmax = nontangential_max(field, z, spec, domain, eta0=eta0, max_refine=max_refine)
    if cone_integral is None:
        mesh = mesh if mesh is not None else field.mesh
        region = ConeRegion(domain, z, spec.doubled())
        cone_integral = region_integral(field, region, weight=("delta", -d), exponent=q,
                                        mesh=mesh)
    core = cone_integral ** (1.0 / q)
    C = cone_bound_constant(d, q)
    return InequalityReport.build(
        "cone-bound", lhs, core, C,
        context={"z": np.atleast_1d(z).tolist(), "a": spec.aperture, "h": spec.height, "q": q,
                 "argmax": np.asarray(argmax).tolist()})
