"""Cutoff splitting ``u = v + w``, the hypotheses of the real-variable
extrapolation theorem, its conclusion on a cube ``Q0``, p-sweeps and the
chart-by-chart assembly on bounded polygons."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .fem.datum import CutoffDatum
from .fem.quadrature import ball_rule
from .fem.solver import DirichletSolver, Solution, SumField
from .geometry.graph import GeometryError, critical_exponent
from .geometry.regions import ConeSpec, SurfaceBall, SurfaceCube
from .halfplane import HalfPlanePoisson
from .inequalities import InequalityReport
from .maximal import (BALL_FACTOR, CandidateCloud, MaximalError, MaximalField, boundary_grid,
                      maximal_field, surface_lp_norm)

__all__ = [
    "SplitTriple",
    "SweepReport",
    "bounded_domain_wrap",
    "build_split",
    "check_chain",
    "check_hypotheses",
    "dyadic_cubes",
    "extrapolate_norm",
    "hypothesis_scan",
    "p_sweep",
    "polygon_maximal",
]


def check_chain(Q, Q0, gamma):
    """Raise :class:`GeometryError` naming the first failing inclusion of
    ``2Q < Delta_{gamma r} < Delta_{2 gamma^2 r}(z) < 2Q0``."""
    if not gamma > 1:
        raise GeometryError(f"gamma must exceed 1, got {gamma}")
    r = Q.side
    z = Q.center
    if not Q.dilate(2.0).inside_ball(SurfaceBall(z, gamma * r)):
        raise GeometryError(f"inclusion 2Q in Delta_(gamma r) fails for gamma={gamma}")
    if not 2.0 * gamma ** 2 > gamma:
        raise GeometryError("inclusion Delta_(gamma r) in Delta_(2 gamma^2 r) fails")
    if Q0 is not None and not Q0.dilate(2.0).contains_ball(SurfaceBall(z, 2.0 * gamma ** 2 * r)):
        raise GeometryError(f"inclusion Delta_(2 gamma^2 r)(z) in 2Q0 fails for Q={Q}")


def _oracle_split(f, phi):
    v = HalfPlanePoisson(phi)
    w = HalfPlanePoisson(CutoffDatum(f, phi.center, phi.inner, phi.outer, complement=True))
    return SumField(v, w), v, w


@dataclass
class SplitTriple:
    """``u = v + w`` with ``v`` carrying the datum ``phi f``."""

    u: object
    v: object
    w: object
    f: object
    cube: SurfaceCube
    gamma: float
    phi: CutoffDatum
    F: MaximalField | None = None
    F_Q: MaximalField | None = None
    R_Q: MaximalField | None = None

    @property
    def center(self):
        return np.asarray(self.cube.center)

    @property
    def r(self):
        return self.cube.side

    @property
    def cutoff_radius(self):
        return self.gamma ** 2 * self.r


def build_split(u, f, Q, gamma=2.0, Q0=None, solver=None):
    """Split ``u`` at the cube ``Q``.

    ``u`` is a :class:`HalfPlanePoisson` field (then ``v`` and ``w`` are
    oracle extensions of ``phi f`` and ``(1 - phi) f`` and ``u`` is replaced
    by their sum) or a :class:`Solution` (then ``v`` is solved on the same
    mesh, reusing ``solver`` if given, and ``w = u - v``).
    """
    check_chain(Q, Q0, gamma)
    z = np.asarray(Q.center)
    inner = gamma ** 2 * Q.side
    phi = CutoffDatum(f, z, inner, 2.0 * inner)
    if isinstance(u, HalfPlanePoisson):
        u2, v, w = _oracle_split(f, phi)
        return SplitTriple(u2, v, w, f, Q, gamma, phi)
    if not isinstance(u, Solution):
        raise TypeError("build_split needs an oracle field or a finite element solution")
    if solver is None:
        solver = DirichletSolver(u.mesh, u.coeffs)
    v = solver.solve(phi)
    w = u - v
    return SplitTriple(u, v, w, f, Q, gamma, phi)


def dyadic_cubes(Q0, levels, positions, rng):
    """Up to ``positions`` random dyadic subcubes of ``Q0`` at each level."""
    k = len(Q0.center)
    lo = np.asarray(Q0.center) - Q0.side / 2.0
    out = {}
    for lev in levels:
        n = 2 ** lev
        side = Q0.side / n
        total = n ** k
        pick = rng.choice(total, size=min(positions, total), replace=False)
        cubes = []
        for idx in np.sort(pick):
            ij = np.unravel_index(idx, (n,) * k)
            c = lo + side * (np.asarray(ij) + 0.5)
            cubes.append(SurfaceCube(tuple(c), side))
        out[lev] = cubes
    return out


def _ancestors(Q, Q0):
    """Dyadic ancestors of ``Q`` inside ``Q0``, then ``Q0`` and ``2Q0``."""
    out = []
    c0 = np.asarray(Q0.center)
    lo = c0 - Q0.side / 2.0
    side = Q.side
    c = np.asarray(Q.center)
    while side < Q0.side * (1 - 1e-12):
        side *= 2.0
        idx = np.floor((c - lo) / side + 1e-9)
        c = lo + side * (idx + 0.5)
        out.append(SurfaceCube(tuple(c), side))
    out.append(Q0.dilate(2.0))
    return out


def _datum_average(f, domain, cube, p0, n=256):
    lo, hi = cube.bounds()
    g = boundary_grid(domain, lo, hi, n)
    vals = f(g.boundary_points)
    return surface_lp_norm(vals, g, p=p0, average=True)


def _shared_averages(fields, cloud):
    """Ball averages of several fields on one cloud; sums reuse their parts."""
    offs, wts = ball_rule(cloud.points.shape[1])
    pts = (cloud.points[:, None, :]
           + (BALL_FACTOR * cloud.delta)[:, None, None] * offs[None]).reshape(-1,
                                                                            cloud.points.shape[1])
    cache = {}

    def values(fld):
        if id(fld) not in cache:
            if isinstance(fld, SumField):
                cache[id(fld)] = sum(values(p) for p in fld.parts)
            else:
                cache[id(fld)] = fld.evaluate(pts)
        return cache[id(fld)]

    out = []
    q = offs.shape[0]
    for fld in fields:
        sq = np.sum(np.abs(values(fld)) ** 2, axis=1).reshape(-1, q)
        if not np.all(np.isfinite(sq)):
            raise MaximalError("ball average left the sampled region of the field")
        out.append(np.sqrt(sq @ wts))
    return out


def _maximal_triple(triple, domain, spec, grid, top, cloud_kw):
    cloud = CandidateCloud.for_grid(grid, spec.aperture, top, **cloud_kw)
    A = _shared_averages([triple.u, triple.v, triple.w], cloud)
    return [maximal_field(fld, grid, spec, cloud=cloud, averages=a)
            for fld, a in zip((triple.u, triple.v, triple.w), A)]


def check_hypotheses(triple, domain, Q0, p0=2.0, p1=4.0, alpha=None, C1=4.0, C2=4.0,
                     spec=None, top=None, n=128, cloud_kw=None):
    """Reports for the pointwise domination, the reverse-Hoelder-type bound on
    ``R_Q`` and the bound on ``F_Q``.

    All three maximal functions are sampled on one grid over ``alpha Q`` with
    ``n`` cells per direction; ``alpha`` defaults to ``4 gamma`` so that
    ``alpha Q`` contains ``Delta_{2 gamma r}(z)``.
    """
    Q = triple.cube
    gamma = triple.gamma
    alpha = 4.0 * gamma if alpha is None else float(alpha)
    if not Q.dilate(alpha).contains_ball(SurfaceBall(Q.center, 2.0 * gamma * Q.side)):
        raise GeometryError(f"alpha Q does not contain Delta_(2 gamma r)(z) for alpha={alpha}")
    spec = ConeSpec.for_domain(domain) if spec is None else spec
    top = 4.0 * Q0.side if top is None else top
    aQ = Q.dilate(alpha)
    lo, hi = aQ.bounds()
    grid = boundary_grid(domain, lo, hi, n)
    F, FQ, RQ = _maximal_triple(triple, domain, spec, grid, top, cloud_kw or {})
    triple.F, triple.F_Q, triple.R_Q = F, FQ, RQ

    two_q = grid.select(Q.dilate(2.0))
    excess = F.values[two_q] - (FQ.values[two_q] + RQ.values[two_q])
    worst = float(np.max(F.values[two_q] / np.maximum(FQ.values[two_q] + RQ.values[two_q],
                                                      1e-300)))
    ctx = {"z": list(Q.center), "side": Q.side, "gamma": gamma, "alpha": alpha}
    dom = InequalityReport.build("pointwise-domination", float(np.max(F.values[two_q])),
                                 float(np.max(FQ.values[two_q] + RQ.values[two_q])), 1.0,
                                 context=dict(ctx, max_excess=float(excess.max()),
                                              max_pointwise_ratio=worst))
    dom.passed = bool(np.all(excess <= 1e-12 * np.maximum(1.0, F.values[two_q])))

    sup_f = max(_datum_average(triple.f, domain, Qp, p0) for Qp in _ancestors(Q, Q0))
    lhs3 = surface_lp_norm(RQ, grid, Q.dilate(2.0), p=p1, average=True)
    F_avg = surface_lp_norm(F, grid, aQ, p=p0, average=True)
    rq = InequalityReport.build("remainder-bound", lhs3, F_avg + sup_f, C1,
                                context=dict(ctx, p0=p0, p1=p1, F_average=F_avg, datum_sup=sup_f))
    lhs4 = surface_lp_norm(FQ, grid, Q.dilate(2.0), p=p0, average=True)
    big = SurfaceBall(Q.center, 2.0 * gamma ** 2 * Q.side)
    lo_b, hi_b = big.bounds()
    gb = boundary_grid(domain, lo_b, hi_b, n)
    idx = gb.select(big)
    fv = np.linalg.norm(triple.f(gb.boundary_points[idx]), axis=1)
    chain = float((np.sum(gb.weights[idx] * fv ** p0) / Q.measure_projection()) ** (1 / p0))
    fq = InequalityReport.build("local-part-bound", lhs4, sup_f, C2,
                                context=dict(ctx, p0=p0, datum_sup=sup_f, cutoff_chain=chain))
    return [dom, rq, fq]


def hypothesis_scan(u, f, domain, Q0, levels=(6, 7, 8), positions=4, gamma=2.0, seed=0,
                    spread=2.0, **kw):
    """Check the three hypotheses on random dyadic cubes at each level.

    Returns ``(reports, stability)``: the per-cube reports and one report per
    hypothesis comparing the largest per-level constants across levels.
    """
    rng = np.random.default_rng(seed)
    solver = kw.pop("solver", None)
    cubes = dyadic_cubes(Q0, levels, positions, rng)
    reports = []
    per_level = {"remainder-bound": [], "local-part-bound": []}
    for lev in levels:
        worst = {k: 0.0 for k in per_level}
        for Q in cubes[lev]:
            t = build_split(u, f, Q, gamma, Q0, solver=solver)
            reps = check_hypotheses(t, domain, Q0, **kw)
            for rep in reps:
                rep.context["level"] = lev
                if rep.name in worst and not rep.vacuous:
                    worst[rep.name] = max(worst[rep.name], rep.ratio)
            reports.extend(reps)
        for k in per_level:
            per_level[k].append(worst[k])
    stability = []
    for k, vals in per_level.items():
        vals = np.asarray(vals)
        stability.append(InequalityReport.build(
            f"{k}-scale-stability", float(vals.max()), float(vals.min()), spread,
            context={"levels": list(levels), "constants": vals.tolist()}))
    return reports, stability


def extrapolate_norm(u, f, Q0, p, p0=2.0, domain=None, spec=None, top=None, n=512,
                     budget=4.0, mf=None, cloud_kw=None, max_refine=0):
    """``(fint_Q0 N^p)^(1/p) <= C (fint_2Q0 N^p0)^(1/p0) + C (fint_2Q0 |f|^p)^(1/p)``.

    ``mf`` may carry ``N(u)`` already sampled on a grid covering ``2Q0``.
    """
    domain = domain if domain is not None else getattr(getattr(u, "mesh", None), "domain", None)
    if domain is None:
        raise ValueError("extrapolate_norm needs the domain")
    spec = ConeSpec.for_domain(domain) if spec is None else spec
    big = Q0.dilate(2.0)
    if mf is None:
        lo, hi = big.bounds()
        grid = boundary_grid(domain, lo, hi, n)
        mf = maximal_field(u, grid, spec, top=4.0 * Q0.side if top is None else top,
                           max_refine=max_refine, **(cloud_kw or {}))
    grid = mf.grid
    lhs = surface_lp_norm(mf, grid, Q0, p=p, average=True)
    A = surface_lp_norm(mf, grid, big, p=p0, average=True)
    fv = f(grid.boundary_points)
    B = surface_lp_norm(fv, grid, big, p=p, average=True)
    return InequalityReport.build("extrapolated-norm", lhs, A + B, budget,
                                  context={"p": p, "p0": p0, "side": Q0.side,
                                           "N_average_p0": A, "datum_average_p": B})


# ---------------------------------------------------------------------- sweeps
@dataclass
class SweepReport:
    """Operator ratios ``||N(u)||_p / ||f||_p`` over a family of data."""

    d: int
    p_grid: list
    ratios: np.ndarray  # (family, p)
    budget: float
    p0: float = 2.0
    constants: list | None = None
    labels: list = field(default_factory=list)

    def __post_init__(self):
        g = np.asarray(self.p_grid, dtype=float)
        if g.size == 0 or np.any(np.diff(g) <= 0):
            raise ValueError("grid not increasing")
        self.ratios = np.asarray(self.ratios, dtype=float)
        if np.any(self.ratios < 0):
            raise ValueError("ratios must be nonnegative")

    @property
    def endpoint(self):
        return critical_exponent(self.d)

    @property
    def max_ratio(self):
        return self.ratios.max(axis=0)

    @property
    def flags(self):
        return [bool(not np.isfinite(r) or r > self.budget) for r in self.max_ratio]

    @property
    def growth_rates(self):
        g = np.asarray(self.p_grid, dtype=float)
        return (np.diff(np.log(self.max_ratio)) / np.diff(g)).tolist()

    @property
    def subexponential(self):
        rates = self.growth_rates
        return len(rates) < 2 or rates[-1] <= max(rates[0], 0.0) + 1e-9

    @property
    def passed(self):
        return bool(np.all(np.isfinite(self.ratios)) and not any(self.flags))

    def to_dict(self):
        from .inequalities import _jsonable
        return _jsonable({
            "d": self.d, "p_grid": list(self.p_grid), "p0": self.p0, "budget": self.budget,
            "endpoint": self.endpoint, "max_ratio": self.max_ratio, "flags": self.flags,
            "growth_rates": self.growth_rates, "subexponential": self.subexponential,
            "constants": self.constants, "labels": self.labels, "ratios": self.ratios,
            "passed": self.passed})

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["p", "max_ratio", "flag"] + [f"ratio_{lab}" for lab in self.labels]
                        + (["constant"] if self.constants is not None else []))
            for j, p in enumerate(self.p_grid):
                row = [repr(float(p)), repr(float(self.max_ratio[j])), int(self.flags[j])]
                row += [repr(float(r)) for r in self.ratios[:, j]]
                if self.constants is not None:
                    row.append(repr(float(self.constants[j])))
                wr.writerow(row)


def p_sweep(data, p_grid, solve, grid, spec=None, budget=50.0, p0=2.0, top=None, labels=None,
            Q0=None, cloud_kw=None, max_refine=0):
    """Per-p operator ratios over ``data``; ``solve(datum)`` returns a field.

    Norms are taken over the sampled window ``grid``.  With ``Q0`` given the
    empirical constant of the conclusion on ``Q0`` is recorded per ``p``
    (largest over the family); ``grid`` must then cover ``2Q0``.
    """
    data = list(data)
    if not data:
        raise ValueError("data family is empty")
    domain = grid.domain
    spec = ConeSpec.for_domain(domain) if spec is None else spec
    ratios = np.zeros((len(data), len(p_grid)))
    consts = np.zeros(len(p_grid)) if Q0 is not None else None
    for i, f in enumerate(data):
        u = solve(f)
        mf = maximal_field(u, grid, spec, top=top, max_refine=max_refine, **(cloud_kw or {}))
        fv = f(grid.boundary_points)
        for j, p in enumerate(p_grid):
            num = surface_lp_norm(mf, grid, p=p)
            den = surface_lp_norm(fv, grid, p=p)
            ratios[i, j] = num / den if den > 0 else (0.0 if num == 0 else math.inf)
            if Q0 is not None:
                rep = extrapolate_norm(u, f, Q0, p, p0, domain, spec, mf=mf)
                consts[j] = max(consts[j], rep.ratio)
    return SweepReport(domain.dim, list(p_grid), ratios, budget, p0,
                       None if consts is None else consts.tolist(),
                       labels or [f"f{i}" for i in range(len(data))])


# ---------------------------------------------------------------------- polygons
def _polygon_cloud(polygon, eta0, rho=math.sqrt(2.0), spacing=0.25):
    lo, hi = polygon.bounding_box()
    pts, deltas = [], []
    eta = eta0
    level = 0
    while True:
        step = spacing * eta
        off = 0.5 * step if level % 2 else 0.0
        axes = [off + step * np.arange(math.floor((lo[i] - off) / step),
                                       math.ceil((hi[i] - off) / step) + 1) for i in range(2)]
        X, Y = np.meshgrid(*axes, indexing="ij")
        P = np.column_stack([X.ravel(), Y.ravel()])
        P = P[polygon.contains(P)]
        if P.shape[0] == 0:
            break
        dl = polygon.distance_to_boundary(P, check=False)
        band = (dl >= eta) & (dl < rho * eta)
        if not np.any(dl >= eta):
            break
        pts.append(P[band])
        deltas.append(dl[band])
        eta *= rho
        level += 1
    return np.vstack(pts), np.concatenate(deltas)


def polygon_maximal(fieldobj, polygon, samples, aperture, eta0, chunk=128):
    """``N_a(u)`` at boundary ``samples`` of a polygon, cones measured with the
    polygon's own distance function."""
    P, D = _polygon_cloud(polygon, eta0)
    offs, wts = ball_rule(2)
    out_avg = np.empty(P.shape[0])
    for s in range(0, P.shape[0], 8192):
        pp = (P[s:s + 8192, None, :] + (BALL_FACTOR * D[s:s + 8192])[:, None, None]
              * offs[None]).reshape(-1, 2)
        vals = fieldobj.evaluate(pp)
        sq = np.sum(np.abs(vals) ** 2, axis=1).reshape(-1, offs.shape[0])
        if not np.all(np.isfinite(sq)):
            raise MaximalError("ball average left the polygon mesh")
        out_avg[s:s + 8192] = np.sqrt(sq @ wts)
    limit = np.linalg.norm(fieldobj.evaluate(samples), axis=1)
    best = limit.copy()
    for s in range(0, samples.shape[0], chunk):
        Z = samples[s:s + chunk]
        dist = np.linalg.norm(P[None, :, :] - Z[:, None, :], axis=2)
        vals = np.where(dist < aperture * D[None, :], out_avg[None, :], -np.inf)
        best[s:s + chunk] = np.maximum(best[s:s + chunk], vals.max(axis=1))
    return best


def _chart_assignment(charts, samples):
    owner = np.full(samples.shape[0], -1)
    for c, ch in enumerate(charts):
        inside = np.linalg.norm(samples - ch.origin, axis=1) < ch.cover_radius
        owner[(owner < 0) & inside] = c
    if np.any(owner < 0):
        raise GeometryError(f"{int(np.sum(owner < 0))} boundary samples are not covered by "
                            "any chart")
    return owner


def bounded_domain_wrap(polygon, data, p, h, coeffs=None, levels=2, budget=50.0, tol=0.1,
                        charts=None, aperture=None, spacing=None):
    """Global ``||N(u)||_p / ||f||_p`` on a polygon assembled chart by chart,
    on ``levels`` meshes ``h, h/2, ...``; passes iff finite, within budget and
    stable under refinement to relative ``tol``."""
    from .fem.coefficients import identity
    from .fem.mesh import polygon_mesh
    from .geometry.polygon import default_aperture_for, localize_polygon

    charts = localize_polygon(polygon) if charts is None else charts
    a = default_aperture_for(charts) if aperture is None else aperture
    coeffs = identity(2, data[0].m) if coeffs is None else coeffs
    history = []
    per_chart = None
    for lev in range(levels):
        hh = h / 2 ** lev
        mesh = polygon_mesh(polygon, hh)
        solver = DirichletSolver(mesh, coeffs)
        samples, sw, _ = polygon.boundary_samples(spacing or hh / 2)
        owner = _chart_assignment(charts, samples)
        worst = 0.0
        for f in data:
            u = solver.solve(f)
            N = polygon_maximal(u, polygon, samples, a, eta0=hh)
            fv = np.linalg.norm(f(samples), axis=1)
            num = np.bincount(owner, sw * N ** p, minlength=len(charts))
            den = np.bincount(owner, sw * fv ** p, minlength=len(charts))
            ratio = (num.sum() / den.sum()) ** (1 / p) if den.sum() > 0 else math.inf
            if ratio >= worst:
                worst = ratio
                per_chart = {"N_p": (num ** (1 / p)).tolist(), "f_p": (den ** (1 / p)).tolist()}
        history.append(worst)
    change = abs(history[-1] - history[-2]) / history[-1] if levels > 1 else 0.0
    rep = InequalityReport.build("bounded-domain-ratio", history[-1], 1.0, budget,
                                 context={"p": p, "h": h, "ratios": history,
                                          "refinement_change": change, "aperture": a,
                                          "charts": len(charts), "per_chart": per_chart})
    rep.passed = bool(rep.passed and change <= tol)
    return rep
