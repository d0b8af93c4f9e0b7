import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntaverify.fem import AnalyticField, BumpDatum, Solution, graph_mesh
from ntaverify.geometry import ConeSpec, GraphDomain, SurfaceBall
from ntaverify.halfplane import HalfPlanePoisson
from ntaverify.maximal import (CandidateCloud, MaximalError, ball_l2_average, boundary_grid,
                               cone_bound_check, cone_bound_constant, maximal_field,
                               nontangential_max, surface_lp_norm, truncation_defect)

FLAT = GraphDomain.flat(2, 4.0)


def const(c, m=1):
    return AnalyticField(lambda x: np.full((x.shape[0], m), c, dtype=complex), m=m)


def height():
    return AnalyticField(lambda x: x[:, -1:])


@pytest.fixture(scope="module")
def bump_oracle():
    return HalfPlanePoisson(BumpDatum([[0.2]], [0.6], [1.0 - 0.5j]))


@pytest.fixture(scope="module")
def grid():
    return boundary_grid(FLAT, -1.0, 1.0, 32)


@pytest.fixture(scope="module")
def cloud(grid):
    return CandidateCloud.for_grid(grid, 4.0, 1.0)


class TestAverages:
    def test_height_average(self):
        # mean of y^2 over B((0,1), 1/4) is 1 + (1/4)^2 / 4
        val = ball_l2_average(height(), np.array([0.0, 1.0]), FLAT)
        assert val == pytest.approx(math.sqrt(1.015625), rel=1e-12)

    def test_constant_average(self):
        assert ball_l2_average(const(1.0), np.array([0.3, 0.2]), FLAT) == pytest.approx(1.0)
        assert ball_l2_average(const(3 + 4j), np.array([0.3, 0.2]), FLAT) == pytest.approx(5.0)

    def test_vector_valued_norm(self):
        f = AnalyticField(lambda x: np.tile([3.0, 4.0j], (x.shape[0], 1)), m=2)
        assert ball_l2_average(f, np.array([0.0, 0.5]), FLAT) == pytest.approx(5.0)


class TestMaximal:
    def test_constant(self):
        val, _ = nontangential_max(const(1.0), np.zeros(1), ConeSpec(2.0), FLAT, top=1.0)
        assert val == pytest.approx(1.0, abs=1e-12)
        val, _ = nontangential_max(const(-2j), np.zeros(1), ConeSpec(2.0, 0.5), FLAT)
        assert val == pytest.approx(2.0, abs=1e-12)

    def test_height_maximizer_at_top(self):
        spec = ConeSpec(2.0, 0.5)
        val, arg = nontangential_max(height(), np.zeros(1), spec, FLAT, max_refine=2)
        # the largest admissible height is just below h
        assert 0.45 < val < math.sqrt(0.25 + 0.25 / 64) + 1e-9
        assert arg[-1] < 0.5

    def test_empty_truncated_cone(self):
        with pytest.raises(MaximalError, match="empty"):
            nontangential_max(const(1.0), np.zeros(1), ConeSpec(2.0, 0.01), FLAT, eta0=0.02)

    def test_monotone_in_height(self, grid, cloud, bump_oracle):
        lo = maximal_field(bump_oracle, grid, ConeSpec(4.0, 0.1), cloud=cloud)
        hi = maximal_field(bump_oracle, grid, ConeSpec(4.0, 0.5), cloud=cloud)
        full = maximal_field(bump_oracle, grid, ConeSpec(4.0), cloud=cloud)
        assert np.all(lo.values <= hi.values + 1e-14)
        assert np.all(hi.values <= full.values + 1e-14)

    def test_monotone_in_aperture(self, grid, cloud, bump_oracle):
        narrow = maximal_field(bump_oracle, grid, ConeSpec(2.0), cloud=cloud)
        wide = maximal_field(bump_oracle, grid, ConeSpec(4.0), cloud=cloud)
        assert np.all(narrow.values <= wide.values + 1e-14)

    def test_subadditive_and_homogeneous(self, grid, cloud, bump_oracle):
        spec = ConeSpec(4.0)
        other = height()
        both = AnalyticField(lambda x: bump_oracle.evaluate(x) + other.evaluate(x))
        n_u = maximal_field(bump_oracle, grid, spec, cloud=cloud).values
        n_v = maximal_field(other, grid, spec, cloud=cloud).values
        n_uv = maximal_field(both, grid, spec, cloud=cloud).values
        assert np.all(n_uv <= n_u + n_v + 1e-12)
        scaled = AnalyticField(lambda x: (2 - 3j) * bump_oracle.evaluate(x))
        n_c = maximal_field(scaled, grid, spec, cloud=cloud).values
        assert np.allclose(n_c, abs(2 - 3j) * n_u, rtol=1e-12)

    def test_bounded_by_sup_of_datum(self, grid, cloud, bump_oracle):
        # maximum principle for the Poisson extension
        mf = maximal_field(bump_oracle, grid, ConeSpec(4.0), cloud=cloud)
        assert mf.values.max() <= abs(1.0 - 0.5j) + 1e-9
        trace = np.abs(bump_oracle.trace(grid.points[:, 0]))[:, 0]
        assert np.all(mf.values >= trace - 1e-12)

    def test_csv_export(self, grid, cloud, bump_oracle, tmp_path):
        mf = maximal_field(bump_oracle, grid, ConeSpec(4.0), cloud=cloud)
        path = tmp_path / "n.csv"
        mf.to_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["z0", "N", "argmax0", "argmax1"]
        assert len(rows) == grid.points.shape[0] + 1
        assert float(rows[5][1]) == mf.values[4]


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.8), st.floats(-0.5, 0.5), st.floats(0.1, 4.0))
def test_flat_scaling(height_h, z, lam):
    """On a flat boundary N(u(lam .))(z) equals N(u)(lam z) for u = x_d^2 + x_1."""
    f = AnalyticField(lambda x: (x[:, 1] ** 2 + x[:, 0])[:, None])
    g = AnalyticField(lambda x: ((lam * x[:, 1]) ** 2 + lam * x[:, 0])[:, None])
    spec = ConeSpec(3.0, height_h)
    scaled = ConeSpec(3.0, height_h / lam)
    a, _ = nontangential_max(g, np.array([z]), scaled, FLAT, eta0=height_h / lam / 16,
                             max_refine=0)
    b, _ = nontangential_max(f, np.array([lam * z]), spec, FLAT, eta0=height_h / 16,
                             max_refine=0)
    assert a == pytest.approx(b, rel=1e-9)


class TestSurface:
    def test_flat_unit_ball_norm(self):
        g = boundary_grid(FLAT, -1.0, 1.0, 64)
        assert surface_lp_norm(np.ones(64), g, p=2) == pytest.approx(math.sqrt(2.0))
        assert surface_lp_norm(np.full(64, 3.0), g, p=1, average=True) == pytest.approx(3.0)

    def test_sawtooth_measure(self):
        dom = GraphDomain.sawtooth(2, 2.0, 0.75)
        r = 0.8
        g = boundary_grid(dom, -r, r, 50)
        assert surface_lp_norm(np.ones(50), g, p=1) == pytest.approx(2 * r * math.sqrt(1.5625))

    def test_three_dimensional_measure(self):
        dom = GraphDomain.flat(3, 2.0, slope=0.5)
        g = boundary_grid(dom, -0.5, 0.5, 8)
        assert g.weights.sum() == pytest.approx(math.sqrt(1.25))

    def test_region_outside_grid(self):
        g = boundary_grid(FLAT, -1.0, 1.0, 16)
        with pytest.raises(MaximalError, match="outside"):
            g.select(SurfaceBall((0.0,), 2.0))

    def test_infinite_exponent(self):
        g = boundary_grid(FLAT, -1.0, 1.0, 4)
        assert surface_lp_norm(np.array([1.0, -5.0, 2.0, 0.0]), g, p=np.inf) == 5.0


class TestConeBound:
    def test_constant_value(self):
        assert cone_bound_constant(2, 2) == pytest.approx(math.sqrt(25 / math.pi))

    def test_height_field(self):
        mesh = graph_mesh(GraphDomain.flat(2, 2.0), 1.0 / 32.0)
        u = Solution.interpolate(mesh, lambda x: x[:, -1])
        rep = cone_bound_check(u, np.zeros(1), ConeSpec(2.0, 0.5), 2.0, mesh.domain)
        assert rep.passed and 0 < rep.ratio < math.inf

    def test_truncation_defect(self, grid, cloud):
        f = height()
        full = maximal_field(f, grid, ConeSpec(4.0), cloud=cloud)
        trunc = maximal_field(f, grid, ConeSpec(4.0, 0.25), cloud=cloud)
        ball = SurfaceBall((0.0,), 1.0)
        defect, C, avg = truncation_defect(f, full, trunc, 16, ball)
        assert defect > 0 and defect <= C * avg
        one = maximal_field(const(1.0), grid, ConeSpec(4.0), cloud=cloud)
        one_t = maximal_field(const(1.0), grid, ConeSpec(4.0, 0.25), cloud=cloud)
        assert truncation_defect(None, one, one_t, 16, ball)[0] == 0.0
