import math

import numpy as np
import pytest

from ntaverify.extrapolation import (SweepReport, bounded_domain_wrap, build_split, check_chain,
                                     check_hypotheses, dyadic_cubes, extrapolate_norm, p_sweep)
from ntaverify.fem import BumpDatum, ConstantDatum
from ntaverify.geometry import GeometryError, GraphDomain, PolygonDomain, SurfaceCube
from ntaverify.halfplane import HalfPlanePoisson
from ntaverify.maximal import boundary_grid

FLAT = GraphDomain.flat(2, 8.0)
Q0 = SurfaceCube((0.0,), 1.0)
BASE = BumpDatum([[0.0], [0.7]], [3.0, 0.5], [1.0, 0.5 + 0.5j])


class TestChain:
    def test_valid_chain(self):
        check_chain(SurfaceCube((0.0,), 1 / 64), Q0, 2.0)

    def test_gamma_too_small_in_3d(self):
        with pytest.raises(GeometryError, match="2Q in Delta"):
            check_chain(SurfaceCube((0.0, 0.0), 1 / 64), SurfaceCube((0.0, 0.0), 1.0), 1.2)

    def test_cube_near_edge_of_q0(self):
        with pytest.raises(GeometryError, match="2Q0"):
            check_chain(SurfaceCube((0.99,), 1 / 4), Q0, 2.0)

    def test_gamma_at_most_one(self):
        with pytest.raises(GeometryError):
            check_chain(SurfaceCube((0.0,), 1 / 64), Q0, 1.0)


def test_dyadic_cubes_are_dyadic():
    cubes = dyadic_cubes(Q0, (3, 6), 4, np.random.default_rng(0))
    for lev, cs in cubes.items():
        assert len(cs) == 4
        for c in cs:
            assert c.side == 2.0 ** -lev
            k = (c.center[0] + 0.5) / c.side - 0.5
            assert abs(k - round(k)) < 1e-12
            assert Q0.contains_cube(c)


class TestSplit:
    def test_split_sums_to_u(self):
        t = build_split(HalfPlanePoisson(BASE), BASE, SurfaceCube((0.1,), 1 / 16), 2.0, Q0)
        pts = np.array([[0.0, 0.1], [0.5, 0.02], [-2.0, 1.0]])
        direct = HalfPlanePoisson(BASE).evaluate(pts)
        assert np.allclose(t.v.evaluate(pts) + t.w.evaluate(pts), direct, atol=1e-10)
        assert t.cutoff_radius == pytest.approx(0.25)

    def test_local_datum_gives_zero_remainder(self):
        f = BumpDatum([[0.0]], [0.2], [1.0])
        Q = SurfaceCube((0.0,), 1 / 8)
        t = build_split(HalfPlanePoisson(f), f, Q, 2.0, Q0)
        pts = np.array([[0.0, 0.1], [0.3, 0.05], [1.0, 1.0]])
        assert np.max(np.abs(t.w.evaluate(pts))) < 1e-15

    def test_unsupported_field(self):
        with pytest.raises(TypeError):
            build_split(object(), BASE, SurfaceCube((0.0,), 1 / 64), 2.0, Q0)


@pytest.fixture(scope="module")
def baseline_reports():
    Q = SurfaceCube((0.1015625,), 1 / 64)
    t = build_split(HalfPlanePoisson(BASE), BASE, Q, 2.0, Q0)
    return check_hypotheses(t, FLAT, Q0, p0=2.0, p1=8.0, n=64)


class TestHypotheses:
    def test_names(self, baseline_reports):
        assert [r.name for r in baseline_reports] == ["pointwise-domination", "remainder-bound",
                                                      "local-part-bound"]

    def test_domination_exact(self, baseline_reports):
        dom = baseline_reports[0]
        assert dom.passed
        assert dom.context["max_excess"] <= 1e-12

    def test_constants_finite(self, baseline_reports):
        for rep in baseline_reports[1:]:
            assert rep.passed and 0 < rep.ratio < 4

    def test_alpha_too_small(self):
        t = build_split(HalfPlanePoisson(BASE), BASE, SurfaceCube((0.0,), 1 / 64), 2.0, Q0)
        with pytest.raises(GeometryError, match="alpha"):
            check_hypotheses(t, FLAT, Q0, alpha=4.0, n=16)

    def test_zero_datum(self):
        f = BumpDatum([[0.0]], [0.5], [0.0])
        t = build_split(HalfPlanePoisson(f), f, SurfaceCube((0.0,), 1 / 64), 2.0, Q0)
        reps = check_hypotheses(t, FLAT, Q0, n=32)
        assert reps[0].passed
        assert all(r.vacuous for r in reps[1:])

    def test_homogeneous_in_datum(self, baseline_reports):
        c = 3.0 - 4.0j
        f = BASE.scaled(c)
        Q = SurfaceCube((0.1015625,), 1 / 64)
        t = build_split(HalfPlanePoisson(f), f, Q, 2.0, Q0)
        reps = check_hypotheses(t, FLAT, Q0, p0=2.0, p1=8.0, n=64)
        for a, b in zip(reps, baseline_reports):
            assert a.ratio == pytest.approx(b.ratio, rel=1e-9)
            assert a.left == pytest.approx(abs(c) * b.left, rel=1e-9)


def test_extrapolated_norm_finite():
    rep = extrapolate_norm(HalfPlanePoisson(BASE), BASE, Q0, 4.0, 2.0, FLAT, n=128)
    assert rep.name == "extrapolated-norm"
    assert rep.passed and 0 < rep.ratio < 1


class TestSweep:
    def test_grid_must_increase(self):
        with pytest.raises(ValueError, match="grid not increasing"):
            SweepReport(2, [2.0, 2.0], np.ones((1, 2)), 10.0)

    def test_negative_ratio(self):
        with pytest.raises(ValueError):
            SweepReport(2, [2.0, 3.0], -np.ones((1, 2)), 10.0)

    def test_flags_and_growth(self):
        rep = SweepReport(3, [2.0, 3.0, 3.9], np.array([[1.0, 2.0, math.inf]]), 10.0)
        assert rep.flags == [False, False, True]
        assert not rep.passed
        assert rep.endpoint == 4.0

    def test_scale_invariance(self, tmp_path):
        dom = GraphDomain.flat(2, 3.0)
        grid = boundary_grid(dom, -3.0, 3.0, 96)
        f = BumpDatum([[0.2]], [0.7], [1.0])
        a = p_sweep([f], [2.0, 4.0], HalfPlanePoisson, grid, top=6.0)
        b = p_sweep([f.scaled(5j)], [2.0, 4.0], HalfPlanePoisson, grid, top=6.0)
        assert np.allclose(a.ratios, b.ratios, rtol=1e-10)
        assert a.passed and np.all(a.ratios >= 1.0 - 1e-9)
        a.to_csv(tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().startswith("p,max_ratio,flag,ratio_f0")


def test_square_constant_datum_ratio_one():
    rep = bounded_domain_wrap(PolygonDomain.unit_square(), [ConstantDatum(1.0)], 3.0, 0.1,
                              levels=1)
    assert rep.left == pytest.approx(1.0, abs=1e-6)
    assert rep.context["charts"] == 8
