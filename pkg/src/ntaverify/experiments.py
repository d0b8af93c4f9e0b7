"""Experiment drivers.  Each takes a validated config and returns an
:class:`ExperimentResult` holding reports, CSV tables, JSON blobs and plots."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .extrapolation import bounded_domain_wrap, extrapolate_norm, hypothesis_scan, p_sweep
from .fem.coefficients import coefficient_family
from .fem.datum import BumpDatum, ConstantDatum
from .fem.mesh import graph_mesh
from .fem.solver import AnalyticField, DirichletSolver
from .geometry.graph import GraphDomain
from .geometry.polygon import PolygonDomain
from .geometry.regions import ConeSpec, SurfaceCube, ball_in_double_cone, cone_contains
from .halfplane import HalfPlanePoisson
from .inequalities import (InequalityReport, cacciopoli_check, hardy_check, reverse_holder_check,
                           self_improve_scan, sobolev_check)
from .maximal import boundary_grid, maximal_field

__all__ = ["EXPERIMENTS", "ExperimentResult", "run_experiment"]


@dataclass
class ExperimentResult:
    name: str
    reports: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # file stem -> (header, rows)
    blobs: dict = field(default_factory=dict)  # file stem -> JSON-able object
    plots: dict = field(default_factory=dict)  # file stem -> plot spec

    @property
    def passed(self):
        return all(r.passed for r in self.reports)


def _count_check(name, failures, total, context=None):
    """Zero-tolerance report: passes iff ``failures == 0``."""
    ctx = {"failures": int(failures), "total": int(total)}
    ctx.update(context or {})
    return InequalityReport.build(name, float(failures), 1.0, 0.0, ctx)


def _coefficients(cfg, d, domain):
    c = cfg.coefficients
    params = {}
    if c.family == "anisotropic":
        params = {"strength": c.strength, "seed": c.seed}
    if c.nu > 0:
        return coefficient_family("drift", d, c.m, domain, nu=c.nu, base=c.family, **params)
    return coefficient_family(c.family, d, c.m, domain, **params)


def _domain(cfg, d=None):
    if d is None or d == cfg.domain.dim:
        return cfg.build_domain()
    D = cfg.domain
    if D.name == "flat":
        return GraphDomain.flat(d, D.truncation_radius)
    if D.name == "sawtooth":
        return GraphDomain.sawtooth(d, D.truncation_radius, D.lipschitz)
    return GraphDomain.random_piecewise_linear(d, D.truncation_radius, D.lipschitz, rng=cfg.seed)


def parallel_map(fn, items, jobs):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------- geometry
def _geometry_domains(cfg):
    R = 2.0
    doms = [GraphDomain.flat(2, R), GraphDomain.sawtooth(2, R, 1.0),
            GraphDomain.random_piecewise_linear(2, R, 0.5, rng=cfg.seed)]
    if cfg.domain.name == "profile":
        doms.append(cfg.build_domain())
    return doms


def _cone_pairs(domain, spec, n, rng):
    """Random ``(z', x)`` pairs with ``x`` in the truncated cone at ``z'``."""
    R = domain.truncation_radius
    zs, xs = [], []
    while len(zs) < n:
        x = domain.sample_interior(1, rng, half_width=R / 4, max_gap=spec.height)[0]
        delta = float(domain.distance_to_boundary(x))
        if not delta < spec.height:
            continue
        reach = spec.aperture * delta
        for _ in range(50):
            z = x[:-1] + rng.uniform(-reach, reach, size=domain.dim - 1)
            if cone_contains(domain, z, spec, x):
                zs.append(z)
                xs.append(x)
                break
    return zs, xs


def run_geometry(cfg, rng):
    res = ExperimentResult("geometry")
    rows = []
    for dom in _geometry_domains(cfg):
        spec = ConeSpec(2.0 * (1 + 2 * dom.lipschitz), dom.truncation_radius / 4)
        zs, xs = _cone_pairs(dom, spec, 500, rng)
        bad = sum(not ball_in_double_cone(dom, z, spec, x, n_samples=256,
                                          rng=int(rng.integers(2 ** 31))) for z, x in zip(zs, xs))
        res.reports.append(_count_check(f"ball-in-double-cone/{dom.name}", bad, len(zs)))
        pts = dom.sample_interior(10_000, rng, half_width=dom.truncation_radius / 2)
        delta = dom.distance_to_boundary(pts)
        gap = dom.vertical_gap(pts)
        lower = gap / (math.sqrt(2.0) * (dom.lipschitz + 1.0))
        viol = int(np.sum((delta < lower * (1 - 1e-12)) | (delta > gap * (1 + 1e-12))))
        res.reports.append(_count_check(f"distance-vs-gap/{dom.name}", viol, pts.shape[0],
                                        {"min_delta_over_gap": float(np.min(delta / gap))}))
        rows.append([dom.name, repr(dom.lipschitz), bad, viol, repr(float(np.min(delta / gap)))])
    res.tables["geometry"] = (["domain", "lipschitz", "cone_failures", "distance_failures",
                               "min_delta_over_gap"], rows)
    return res


# ---------------------------------------------------------------------- cacciopoli
def _vanishing_bump(domain, center, width):
    c = np.zeros(domain.dim - 1)
    c[0] = center
    return BumpDatum([c], [width], [1.0])


def run_cacciopoli(cfg, rng):
    res = ExperimentResult("cacciopoli")
    flat = GraphDomain.flat(2, 1.0)
    mesh = graph_mesh(flat, cfg.domain.h)
    solver = DirichletSolver(mesh, coefficient_family("identity", 2), artificial_bc="exact")
    u = solver.solve(ConstantDatum(0.0), exact=lambda x: x[:, -1:].astype(complex))
    rep = cacciopoli_check(u, [0.0, 0.0], 0.25, cfg.budgets.cacciopoli)
    rep.context["expected"] = 0.25
    res.reports.append(rep)

    dom = cfg.build_domain()
    mesh = graph_mesh(dom, cfg.domain.h / 2, half_width=dom.truncation_radius)
    solver = DirichletSolver(mesh, _coefficients(cfg, dom.dim, dom))
    L = mesh.trusted[0]
    f = _vanishing_bump(dom, 0.85 * L, 0.1 * L)
    u = solver.solve(f)
    scales = [0.2 * L, 0.1 * L, 0.05 * L]
    ratios = []
    for r in scales:
        x0 = dom.boundary_point(np.zeros((1, dom.dim - 1)))[0]
        rep = cacciopoli_check(u, x0, r, cfg.budgets.cacciopoli)
        res.reports.append(rep)
        ratios.append(rep.ratio)
    res.reports.append(InequalityReport.build("cacciopoli-scale-stability", max(ratios),
                                              min(ratios), cfg.budgets.spread,
                                              {"scales": scales, "ratios": ratios}))
    res.tables["cacciopoli"] = (["r", "ratio"], [[repr(r), repr(k)] for r, k in zip(scales,
                                                                                   ratios)])
    return res


# ---------------------------------------------------------------------- hardy
def power_field(s):
    """``u = x_d^s`` on the flat half-plane; its Hardy ratio is ``1/s^2``."""
    def fn(x):
        return (np.maximum(x[:, -1], 0.0) ** s)[:, None].astype(complex)

    def grad(x):
        g = np.zeros((x.shape[0], 1, x.shape[1]), dtype=complex)
        g[:, 0, -1] = s * np.maximum(x[:, -1], 1e-300) ** (s - 1.0)
        return g

    return AnalyticField(fn, grad)


def run_hardy(cfg, rng):
    res = ExperimentResult("hardy")
    flat = GraphDomain.flat(2, 1.0)
    rows = []
    for s in (0.51, 0.6, 0.75, 1.0):
        rep = hardy_check(power_field(s), 1.0, flat, cfg.budgets.hardy_tol)
        rep.context.update(s=s, expected=1.0 / s ** 2,
                           relative_error=abs(rep.ratio * s * s - 1.0))
        res.reports.append(rep)
        rows.append([repr(s), repr(rep.ratio), repr(1.0 / s ** 2)])
    res.tables["hardy"] = (["s", "ratio", "expected"], rows)
    return res


# ---------------------------------------------------------------------- sobolev
def scaled_gap_bump(domain, rho):
    """``(gap / rho) * b(|x| / rho)`` with the quartic bump ``b(t) = (1 - t^2)^2``."""
    def fn(x):
        gap = domain.vertical_gap(x, check=False) / rho
        t2 = np.sum(x ** 2, axis=1) / rho ** 2
        b = np.where(t2 < 1, (1 - t2) ** 2, 0.0)
        return (gap * b)[:, None].astype(complex)

    def grad(x):
        d = x.shape[1]
        gap = domain.vertical_gap(x, check=False) / rho
        t2 = np.sum(x ** 2, axis=1) / rho ** 2
        inside = t2 < 1
        b = np.where(inside, (1 - t2) ** 2, 0.0)
        db = np.where(inside, -4 * (1 - t2), 0.0)[:, None] * x / rho ** 2
        dgap = np.zeros_like(x)
        dgap[:, :-1] = -domain.psi_gradient(x[:, :-1]).reshape(x.shape[0], d - 1)
        dgap[:, -1] = 1.0
        g = dgap / rho * b[:, None] + gap[:, None] * db
        return g[:, None, :].astype(complex)

    return fn, grad


def run_sobolev(cfg, rng):
    res = ExperimentResult("sobolev")
    cases = [(GraphDomain.flat(2, 1.0), 0.02), (GraphDomain.flat(3, 1.0), 0.02),
             (_domain(cfg, 2), 0.02)]
    rows = []
    for dom, r in cases:
        a = 2.0 * (1 + 2 * dom.lipschitz)
        fields = {}
        for scale in (r, 2 * r):
            rho = 5 * a * scale
            fn, grad = scaled_gap_bump(dom, rho)
            lo = -rho * np.ones(dom.dim)
            hi = rho * np.ones(dom.dim)
            lo[-1] = -rho * (1.0 + dom.lipschitz * math.sqrt(dom.dim - 1))
            fields[scale] = AnalyticField(fn, grad, support_box=(lo, hi))
        rep = sobolev_check(fields, r, dom, a, budget=cfg.budgets.sobolev)
        rep.context["domain"] = dom.name
        res.reports.append(rep)
        rows.append([dom.name, dom.dim] + [repr(v) for v in rep.context["ratios"]])
    res.tables["sobolev"] = (["domain", "d", "ratio_r", "ratio_2r"], rows)
    return res


# ---------------------------------------------------------------------- reverse hoelder
def _rh_families(d):
    """Three solution families vanishing on the boundary near the origin."""
    if d == 2:
        def xy(x):
            return (x[:, 0] * x[:, 1])[:, None].astype(complex)
        far = BumpDatum([[3.0]], [1.0], [1.0])
        return [("x_d", AnalyticField(lambda x: x[:, -1:].astype(complex))),
                ("x_0*x_d", AnalyticField(xy)),
                ("poisson-far-bump", HalfPlanePoisson(far))]

    def cubic(x):
        return (x[:, 0] ** 2 * x[:, 2] - x[:, 2] ** 3 / 3.0)[:, None].astype(complex)

    def bilinear(x):
        return (x[:, 0] * x[:, 2] + 0.5j * x[:, 1] * x[:, 2])[:, None].astype(complex)

    return [("x_d", AnalyticField(lambda x: x[:, -1:].astype(complex))),
            ("complex-bilinear", AnalyticField(bilinear)),
            ("cubic-harmonic", AnalyticField(cubic))]


def _rh_maximal(d, field, r):
    dom = GraphDomain.flat(d, 1.0)
    spec = ConeSpec.for_domain(dom)
    n = 256 if d == 2 else 72
    grid = boundary_grid(dom, -2 * r, 2 * r, n)
    return maximal_field(field, grid, spec, top=4 * r)


def run_reverse_holder(cfg, rng, self_improve=False):
    res = ExperimentResult("self-improve" if self_improve else "reverse-holder")
    rows = []
    for d in (2, 3):
        q = 4.0
        r = 0.5
        scales = [r, r / 2, r / 4]
        for label, fld in _rh_families(d):
            mf = _rh_maximal(d, fld, r)
            if self_improve:
                grid_q = [3.0, 4.0, 6.0, 8.0] if d == 2 else [4.0, 4.1, 4.25, 4.5]
                q_bar, results = self_improve_scan(mf, scales, grid_q, cfg.budgets.reverse_holder,
                                                   spread=cfg.budgets.spread)
                # passes iff the scan reaches the critical exponent 4
                rep = InequalityReport.build(f"self-improve/d{d}/{label}", q, q_bar, 1.0,
                                             {"q_bar": q_bar, "q_grid": grid_q})
                res.reports.append(rep)
                rows.append([d, label, repr(q_bar)])
                continue
            reps = reverse_holder_check(mf, scales, q, cfg.budgets.reverse_holder,
                                        cfg.budgets.spread)
            for rep in reps:
                rep.name = f"{rep.name}/d{d}/{label}"
                rep.context["family"] = label
            res.reports.extend(reps)
            rows += [[d, label, repr(rp.context.get("r", "")), repr(rp.ratio)] for rp in reps]
    header = ["d", "family", "q_bar"] if self_improve else ["d", "family", "r", "ratio"]
    res.tables[res.name] = (header, rows)
    return res


def run_self_improve(cfg, rng):
    return run_reverse_holder(cfg, rng, self_improve=True)


# ---------------------------------------------------------------------- extrapolation
def _baseline_datum():
    return BumpDatum([[0.0], [0.7]], [3.0, 0.5], [1.0, 0.5 + 0.5j])


def run_extrapolate(cfg, rng):
    res = ExperimentResult("extrapolate")
    s = cfg.sweep
    dom = GraphDomain.flat(2, 8.0)
    f = _baseline_datum()
    u = HalfPlanePoisson(f)
    Q0 = SurfaceCube((0.0,), 1.0)
    reports, stability = hypothesis_scan(
        u, f, dom, Q0, levels=tuple(s.levels), positions=s.positions, gamma=s.gamma,
        seed=int(rng.integers(2 ** 31)), spread=cfg.budgets.spread, p0=s.p0, p1=s.p1,
        alpha=cfg.alpha, C1=cfg.budgets.remainder, C2=cfg.budgets.local_part)
    res.reports += reports + stability
    rows = [[rp.name, rp.context.get("level"), repr(rp.context["z"][0]), repr(rp.ratio)]
            for rp in reports]
    res.tables["hypotheses"] = (["check", "level", "z", "ratio"], rows)

    crows = []
    for p in s.p_extrapolate:
        consts = []
        for R in (1.0, 2.0):
            rep = extrapolate_norm(u, f, SurfaceCube((0.0,), R), p, s.p0, dom,
                                   budget=cfg.budgets.extrapolation,
                                   mf=_extrap_cache(u, dom, R))
            res.reports.append(rep)
            consts.append(rep.ratio)
            crows.append([repr(p), repr(R), repr(rep.ratio)])
        res.reports.append(InequalityReport.build(
            "extrapolated-norm-doubling", max(consts), min(consts), 2.0,
            {"p": p, "constants": consts}))
    res.tables["conclusion"] = (["p", "side", "constant"], crows)
    return res


_MF_CACHE = {}


def _extrap_cache(u, dom, R, n=512):
    key = (id(u), R, n)
    if key not in _MF_CACHE:
        if len(_MF_CACHE) > 4:
            _MF_CACHE.clear()
        grid = boundary_grid(dom, -R, R, n)
        _MF_CACHE[key] = maximal_field(u, grid, ConeSpec.for_domain(dom), top=4.0 * R)
    return _MF_CACHE[key]


# ---------------------------------------------------------------------- sweep
def bump_family(n, rng, d=2, spread=1.0):
    centers = rng.uniform(-spread, spread, size=(n, d - 1))
    widths = rng.uniform(0.2, 1.0, size=n) * spread
    phases = np.exp(1j * rng.uniform(0.0, 2 * math.pi, size=n))
    return [BumpDatum([c], [w], [a]) for c, w, a in zip(centers, widths, phases)]


def _sweep2_cell(args):
    f, p_grid, window, samples, budget = args
    dom = GraphDomain.flat(2, window)
    grid = boundary_grid(dom, -window, window, samples)
    return p_sweep([f], p_grid, HalfPlanePoisson, grid, budget=budget, top=4.0 * window)


def run_sweep(cfg, rng):
    res = ExperimentResult("sweep")
    s = cfg.sweep
    fam = bump_family(s.family_size, rng)
    cells = parallel_map(_sweep2_cell, [(f, s.p_grid, s.window, s.samples, cfg.budgets.sweep)
                                        for f in fam], cfg.jobs)
    ratios = np.vstack([c.ratios for c in cells])
    from .extrapolation import SweepReport
    sw2 = SweepReport(2, list(s.p_grid), ratios, cfg.budgets.sweep, s.p0,
                      labels=[f"f{i}" for i in range(len(fam))])
    res.blobs["sweep_d2"] = sw2.to_dict()
    res.tables["sweep_d2"] = _sweep_table(sw2)
    for p, r, flag in zip(sw2.p_grid, sw2.max_ratio, sw2.flags):
        res.reports.append(InequalityReport.build(f"operator-ratio/d2/p{p:g}", r, 1.0,
                                                  cfg.budgets.sweep, {"p": p, "d": 2}))

    dom3 = GraphDomain.flat(3, 1.0)
    mesh = graph_mesh(dom3, 1.0 / 12.0)
    solver = DirichletSolver(mesh, _coefficients(cfg, 3, dom3))
    L, H = mesh.trusted
    fam3 = bump_family(3, rng, d=3, spread=0.25)
    grid = boundary_grid(dom3, -0.6 * L / 0.75, 0.6 * L / 0.75, 24)
    sw3 = p_sweep(fam3, s.p_grid_3d, solver.solve, grid, budget=cfg.budgets.sweep,
                  top=0.9 * H, cloud_kw={"lateral": 0.96 * L, "ceiling": 0.98 * H})
    res.blobs["sweep_d3"] = sw3.to_dict()
    res.tables["sweep_d3"] = _sweep_table(sw3)
    for p, r in zip(sw3.p_grid, sw3.max_ratio):
        res.reports.append(InequalityReport.build(f"operator-ratio/d3/p{p:g}", r, 1.0,
                                                  cfg.budgets.sweep, {"p": p, "d": 3}))
    res.plots["sweep_d2"] = {"series": [("d = 2", sw2.p_grid, sw2.max_ratio.tolist())],
                             "markers": [], "xlabel": "p", "ylabel": "max ratio"}
    res.plots["sweep_d3"] = {"series": [("d = 3", sw3.p_grid, sw3.max_ratio.tolist())],
                             "markers": [(sw3.endpoint, "2(d-1)/(d-2)")], "xlabel": "p",
                             "ylabel": "max ratio"}
    return res


def _sweep_table(sw):
    header = ["p", "max_ratio", "flag"] + [f"ratio_{lab}" for lab in sw.labels]
    rows = [[repr(float(p)), repr(float(sw.max_ratio[j])), int(sw.flags[j])]
            + [repr(float(v)) for v in sw.ratios[:, j]] for j, p in enumerate(sw.p_grid)]
    return header, rows


# ---------------------------------------------------------------------- polygon
def run_polygon(cfg, rng):
    res = ExperimentResult("polygon")
    sq = PolygonDomain.unit_square()
    h = 1.0 / 16.0
    rows = []
    for p in cfg.sweep.p_grid:
        rep = bounded_domain_wrap(sq, [ConstantDatum(1.0)], p, h, levels=1,
                                  budget=cfg.budgets.polygon)
        dev = abs(rep.left - 1.0)
        res.reports.append(InequalityReport.build(f"square-constant/p{p:g}", dev, 1.0, 1e-6,
                                                  {"ratio": rep.left, "p": p}))
        rows.append(["square-constant", repr(p), repr(rep.left)])
    edge = BumpDatum([[0.5, 0.0]], [0.3], [1.0])
    rep = bounded_domain_wrap(sq, [edge], 3.0, h, levels=2, budget=cfg.budgets.polygon,
                              tol=cfg.budgets.polygon_tol)
    rep.name = "square-edge-bump/p3"
    res.reports.append(rep)
    rows.append(["square-edge-bump", "3.0", repr(rep.left)])
    ell = PolygonDomain.l_shape()
    rep = bounded_domain_wrap(ell, [BumpDatum([[0.5, 0.0]], [0.3], [1.0])], cfg.sweep.p0, h,
                              levels=2, budget=cfg.budgets.polygon, tol=cfg.budgets.polygon_tol)
    rep.name = f"l-shape-bump/p{cfg.sweep.p0:g}"
    res.reports.append(rep)
    rows.append(["l-shape-bump", repr(cfg.sweep.p0), repr(rep.left)])
    res.tables["polygon"] = (["case", "p", "ratio"], rows)
    return res


EXPERIMENTS = {
    "geometry": run_geometry,
    "cacciopoli": run_cacciopoli,
    "hardy": run_hardy,
    "sobolev": run_sobolev,
    "reverse-holder": run_reverse_holder,
    "self-improve": run_self_improve,
    "extrapolate": run_extrapolate,
    "sweep": run_sweep,
    "polygon": run_polygon,
}


def run_experiment(name, cfg, rng=None):
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    return EXPERIMENTS[name](cfg, rng)
