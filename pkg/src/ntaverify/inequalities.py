"""Numerical checks of boundary Cacciopoli, Hardy, Sobolev and reverse Hoelder inequalities.

Every check returns :class:`InequalityReport` objects whose pass flag is a
function of the stored ``left``, ``right`` and ``budget`` values only.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .fem.mesh import GRAPH
from .fem.solver import Solution, region_integral
from .geometry.regions import BallRegion, CarlesonBox, SurfaceBall
from .maximal import MaximalError, surface_lp_norm

__all__ = [
    "InequalityReport",
    "PreconditionError",
    "all_passed",
    "cacciopoli_check",
    "column_rule",
    "hardy_check",
    "integrate",
    "reverse_holder_check",
    "self_improve_scan",
    "sobolev_check",
]

VACUOUS_FLOOR = 1e-14


class PreconditionError(ValueError):
    """A verifier's hypothesis (vanishing trace, trusted region) does not hold."""


@dataclass
class InequalityReport:
    """``left <= budget * right``, stored with ``ratio = left / right``."""

    name: str
    left: float
    right: float
    ratio: float
    budget: float
    passed: bool
    vacuous: bool = False
    context: dict = field(default_factory=dict)

    @classmethod
    def build(cls, name, left, right, budget, context=None, floor=VACUOUS_FLOOR):
        left, right = float(left), float(right)
        if not (np.isfinite(left) and np.isfinite(right)) or left < 0 or right < 0:
            return cls(name, left, right, math.inf, budget, False, False, context or {})
        if right < floor:
            vacuous = left < floor
            ratio = 0.0 if vacuous else math.inf
            return cls(name, left, right, ratio, budget, vacuous, vacuous, context or {})
        ratio = left / right
        return cls(name, left, right, ratio, float(budget), bool(ratio <= budget), False,
                   context or {})

    def recomputed_pass(self, floor=VACUOUS_FLOOR):
        if self.right < floor:
            return self.left < floor
        return self.left / self.right <= self.budget

    def to_dict(self):
        d = asdict(self)
        d["context"] = _jsonable(self.context)
        for k in ("left", "right", "ratio", "budget"):
            d[k] = _num(d[k])
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _num(v):
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def all_passed(reports):
    return all(r.passed for r in reports)


# ---------------------------------------------------------------------- quadrature
def _tanh_sinh(step=1.0 / 16.0):
    """Nodes ``g`` in (0, 1) and weights for int_0^1, reaching 1e-300 at the left end."""
    U = math.asinh(690.0 / math.pi)
    u = np.arange(-math.floor(U / step), math.floor(U / step) + 1) * step
    s = math.pi * np.sinh(u)
    g = 1.0 / (1.0 + np.exp(-s))
    w = step * math.pi * np.cosh(u) * g * (1.0 / (1.0 + np.exp(s)))
    keep = (g > 0) & (w > 0) & (g < 1)
    return g[keep], w[keep]


def column_rule(domain, half_width, top, panels=16, nodes=12, step=1.0 / 16.0):
    """Points and weights for ``{|x'| < half_width, psi(x') < x_d < top}``, ``d = 2``.

    Lateral Gauss-Legendre panels break at the knots of ``psi``; each vertical
    column uses tanh-sinh in the gap ``x_d - psi``, so integrands with an
    integrable power singularity at the boundary are resolved.
    """
    if domain.dim != 2:
        raise ValueError("column quadrature is implemented for d = 2")
    r = float(half_width)
    kn = domain.knots
    br = np.unique(np.concatenate([[-r, r], kn[(kn > -r) & (kn < r)]]))
    fine = [np.linspace(a, b, max(1, int(math.ceil(panels * (b - a) / (2 * r)))) + 1)
            for a, b in zip(br[:-1], br[1:])]
    br = np.unique(np.concatenate(fine))
    gx, gw = roots_legendre(nodes)
    half = 0.5 * np.diff(br)
    mid = 0.5 * (br[1:] + br[:-1])
    xs = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    wx = (half[:, None] * gw[None, :]).ravel()
    psi = domain.psi(xs)
    T = top - psi
    if np.any(T <= 0):
        raise ValueError("top must lie above the profile")
    g, wg = _tanh_sinh(step)
    gap = T[:, None] * g[None, :]
    pts = np.column_stack([np.repeat(xs, g.size), (psi[:, None] + gap).ravel()])
    wts = (wx[:, None] * T[:, None] * wg[None, :]).ravel()
    gaps = gap.ravel()
    return pts, wts, gaps


def _support_rule(lo, hi, per_dim=24, panels=8):
    d = len(lo)
    gx, gw = roots_legendre(per_dim)
    axes, weights = [], []
    for i in range(d):
        br = np.linspace(lo[i], hi[i], panels + 1)
        h = 0.5 * np.diff(br)
        m = 0.5 * (br[1:] + br[:-1])
        axes.append((m[:, None] + h[:, None] * gx).ravel())
        weights.append((h[:, None] * gw).ravel())
    grids = np.meshgrid(*axes, indexing="ij")
    wgrid = np.meshgrid(*weights, indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    w = np.prod(np.stack([g.ravel() for g in wgrid]), axis=0)
    return pts, w


def integrate(fieldobj, region, domain, weight=None, exponent=2.0, quantity="value", mesh=None):
    """``int_region |field|^exponent * weight`` choosing the path by field type.

    * :class:`Solution` -> mesh quadrature with clipping.
    * :class:`AnalyticField` with ``support_box`` -> tensor Gauss rule on the box.
    * other :class:`AnalyticField` on a Carleson box in ``d = 2`` -> column rule.
    * other :class:`AnalyticField` with a ``mesh`` -> mesh quadrature.
    """
    if isinstance(fieldobj, Solution):
        return region_integral(fieldobj, region, weight, exponent, quantity)
    box = getattr(fieldobj, "support_box", None)
    if box is not None:
        pts, w = _support_rule(*box)
        inside = region.contains(pts) & np.atleast_1d(domain.contains(pts))
        pts, w = pts[inside], w[inside]
        gaps = domain.vertical_gap(pts, check=False)
    elif isinstance(region, CarlesonBox) and domain.dim == 2:
        pts, w, gaps = column_rule(domain, region.r, region.top)
    elif mesh is not None or fieldobj.mesh is not None:
        return region_integral(fieldobj, region, weight, exponent, quantity,
                               mesh=mesh or fieldobj.mesh)
    else:
        raise ValueError("no quadrature path for this field and region")
    if quantity == "value":
        mag = np.sqrt(np.sum(np.abs(fieldobj.values_at(pts)) ** 2, axis=1))
    else:
        mag = np.sqrt(np.sum(np.abs(fieldobj.gradients_at(pts)) ** 2, axis=(1, 2)))
    if weight is not None:
        kind, s = weight
        base = gaps if kind == "gap" else domain.distance_to_boundary(pts)
        # fold the weight in before the power so tiny gaps do not overflow
        mag = mag * base ** (s / exponent)
    return float(np.sum(w * mag ** exponent))


# ---------------------------------------------------------------------- preconditions
def _check_trusted(mesh, lo, hi):
    trusted = getattr(mesh, "trusted", None)
    if trusted is None:
        return
    L, H = trusted
    if np.any(np.abs(lo[:-1]) > L + 1e-12) or np.any(np.abs(hi[:-1]) > L + 1e-12) \
            or hi[-1] > H + 1e-12:
        raise PreconditionError(
            f"region [{lo.tolist()}, {hi.tolist()}] leaves the trusted part of the mesh "
            f"(|x'| <= {L:g}, x_d <= {H:g})")


def _check_vanishing(fieldobj, domain, surface, tol=1e-12):
    """The trace vanishes on the surface ball ``surface`` (mesh vertices or samples)."""
    if isinstance(fieldobj, Solution):
        mesh = fieldobj.mesh
        bv = mesh.boundary_vertices(GRAPH)
        sel = bv[surface.contains(mesh.vertices[bv, :-1])]
        vals = np.abs(fieldobj.values[sel]).max(axis=1) if sel.size else np.zeros(0)
        bad = sel[vals > tol]
        if bad.size:
            raise PreconditionError(f"trace does not vanish at boundary vertices "
                                    f"{bad[:10].tolist()} (max {vals.max():.3g})")
        return
    lo, hi = surface.bounds()
    k = domain.dim - 1
    axes = [np.linspace(lo[i], hi[i], 41) for i in range(k)]
    xp = np.column_stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])
    xp = xp[surface.contains(xp)]
    vals = np.abs(fieldobj.values_at(domain.boundary_point(xp))).max(axis=1)
    if np.any(vals > tol):
        raise PreconditionError(f"trace does not vanish on the surface ball (max {vals.max():.3g})")


# ---------------------------------------------------------------------- verifiers
def cacciopoli_check(solution, x0, r, budget=1.0, check_trace=True):
    """``kappa = r^2 int_{B(x0,r)} |grad u|^2 / int_{B(x0,2r)} |u|^2``."""
    mesh = solution.mesh
    domain = mesh.domain
    x0 = np.asarray(x0, dtype=float)
    _check_trusted(mesh, x0 - 2 * r, x0 + 2 * r)
    if check_trace:
        _check_vanishing(solution, domain, SurfaceBall(x0[:-1], 2 * r))
    num = r * r * region_integral(solution, BallRegion(x0, r), exponent=2.0, quantity="gradient")
    den = region_integral(solution, BallRegion(x0, 2 * r), exponent=2.0)
    return InequalityReport.build("cacciopoli", num, den, budget,
                                  {"x0": x0.tolist(), "r": r, "domain": getattr(domain, "name", "")})


def hardy_check(fieldobj, r, domain, tol=0.05, mesh=None):
    """``int_{D_r} |u|^2 / gap^2 <= 4 int_{D_r} |grad u|^2`` for traces vanishing on ``Delta_r``."""
    box = CarlesonBox(domain, r)
    _check_vanishing(fieldobj, domain, SurfaceBall(np.zeros(domain.dim - 1), r))
    m = mesh or getattr(fieldobj, "mesh", None)
    if isinstance(fieldobj, Solution):
        lo, hi = box.bounds_box()
        lo = lo.copy()
        lo[-1] = -np.inf
        _check_trusted(m, np.where(np.isfinite(lo), lo, 0.0), hi)
    lhs = integrate(fieldobj, box, domain, ("gap", -2.0), 2.0, "value", m)
    rhs = integrate(fieldobj, box, domain, None, 2.0, "gradient", m)
    return InequalityReport.build("hardy", lhs, rhs, 4.0 * (1.0 + tol),
                                  {"r": r, "domain": domain.name, "tol": tol})


def sobolev_exponent(d, default_2d=6.0):
    """``2(q - 1) = 2d/(d - 2)`` for ``d >= 3``; a configured finite value for ``d = 2``."""
    return 2.0 * d / (d - 2.0) if d >= 3 else float(default_2d)


def sobolev_check(fields, r, domain, aperture=None, exponent=None, budget=1.5, mesh=None):
    """Scale-freeness of ``||u||_{L^p(D_{5ar})} / ||grad u||_{L^2(D_{5ar})}``.

    ``fields`` maps the two scales ``r`` and ``2r`` to fields vanishing on
    ``Delta_{5ar}``.  Ratios carry the factor ``r^{-(d/p - d/2 + 1)}``, which
    is 1 at the critical exponent, so profiles rescaled with the box compare
    directly.  Passes iff ``max / min <= budget``.
    """
    d = domain.dim
    p = sobolev_exponent(d) if exponent is None else float(exponent)
    box0 = CarlesonBox(domain, r, aperture)
    a = box0.aperture
    ratios = {}
    for scale in (r, 2 * r):
        f = fields[scale]
        big = CarlesonBox(domain, 5 * a * scale, aperture)
        _check_vanishing(f, domain, SurfaceBall(np.zeros(d - 1), 5 * a * scale))
        num = integrate(f, big, domain, None, p, "value", mesh) ** (1.0 / p)
        den = integrate(f, big, domain, None, 2.0, "gradient", mesh) ** 0.5
        if den < VACUOUS_FLOOR:
            return InequalityReport.build("sobolev", 0.0, 0.0, budget, {"r": r, "p": p})
        ratios[scale] = num / den * scale ** (-(d / p - d / 2.0 + 1.0))
    hi, lo = max(ratios.values()), min(ratios.values())
    return InequalityReport.build("sobolev", hi, lo, budget,
                                  {"r": r, "p": p, "a": a, "ratios": [ratios[r], ratios[2 * r]]})


def _rh_ratio(mf, r, q, lower):
    inner = SurfaceBall(np.zeros(mf.grid.points.shape[1]), r)
    outer = SurfaceBall(np.zeros(mf.grid.points.shape[1]), 2 * r)
    n_in = mf.grid.select(inner).size
    if n_in < 32:
        raise MaximalError(f"only {n_in} boundary samples in Delta_r (r={r:g}); need 32")
    top = surface_lp_norm(mf, mf.grid, inner, q, average=True)
    bottom = surface_lp_norm(mf, mf.grid, outer, lower, average=True)
    return top, bottom


def reverse_holder_check(mf, scales, q, budget, spread=2.0, lower=1.0):
    """``(fint_{Delta_r} N^q)^{1/q} <= C fint_{Delta_2r} N`` at every scale in ``scales``.

    ``mf`` holds ``N(u)`` on a grid covering ``Delta_{2 max(scales)}``.
    Returns one report per scale and a final scale-stability report
    (``max ratio / min ratio <= spread``).  ``lower = 2`` switches the right
    side to an L^2 average.
    """
    reports = []
    ratios = []
    for r in scales:
        top, bottom = _rh_ratio(mf, r, q, lower)
        rep = InequalityReport.build("reverse-holder", top, bottom, budget,
                                     {"r": r, "q": q, "lower": lower, "a": mf.aperture})
        reports.append(rep)
        if not rep.vacuous:
            ratios.append(rep.ratio)
    if ratios:
        stab = InequalityReport.build("reverse-holder-stability", max(ratios), min(ratios), spread,
                                      {"scales": list(scales), "ratios": ratios, "q": q})
    else:
        stab = InequalityReport.build("reverse-holder-stability", 0.0, 0.0, spread,
                                      {"scales": list(scales), "q": q})
    reports.append(stab)
    return reports


def self_improve_scan(mf, scales, q_grid, budget, base_q=None, spread=2.0):
    """Largest exponent in ``q_grid`` for which the reverse Hoelder check still passes.

    Returns ``(q_bar, {q: reports})``; vacuous data yield the base exponent.
    """
    q_grid = sorted(float(q) for q in q_grid)
    base = q_grid[0] if base_q is None else float(base_q)
    results = {}
    base_reports = reverse_holder_check(mf, scales, base, budget, spread)
    results[base] = base_reports
    if not all_passed(base_reports):
        raise PreconditionError(f"reverse Hoelder check fails at the base exponent {base:g}")
    q_bar = base
    for q in q_grid:
        if q <= base:
            continue
        reps = reverse_holder_check(mf, scales, q, budget, spread)
        results[q] = reps
        if all_passed(reps) and not all(r.vacuous for r in reps):
            q_bar = q
        else:
            break
    return q_bar, results
