import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from ntaverify.geometry import (CarlesonBox, ConeSpec, DomainError, GeometryError, GraphDomain,
                                PolygonDomain, SurfaceBall, SurfaceCube, ball_in_double_cone,
                                box_factor, carleson_box_mesh_region, cone_contains,
                                default_aperture, default_aperture_for, load_profile,
                                localize_polygon, save_profile, verify_chart_graph, verify_cover)


def abs_profile(R=2.0):
    return GraphDomain([-3.0, 0.0, 3.0], [3.0, 0.0, 3.0], R)


def brute_force_distance(domain, x, n=400_001, half=3.0):
    """Dense boundary sampling, then a bounded 1-D polish around the best sample."""
    s = np.linspace(x[0] - half, x[0] + half, n)
    d2 = (s - x[0]) ** 2 + (domain.psi(s[:, None]) - x[1]) ** 2
    k = int(np.argmin(d2))
    lo, hi = s[max(k - 1, 0)], s[min(k + 1, n - 1)]
    knots = domain.knots[(domain.knots > lo) & (domain.knots < hi)]
    cands = [math.sqrt(d2[k])]
    for a, b in zip(np.r_[lo, knots], np.r_[knots, hi]):
        res = minimize_scalar(lambda t: (t - x[0]) ** 2 + (float(domain.psi(np.array([t]))) - x[1]) ** 2,
                              bounds=(a, b), method="bounded", options={"xatol": 1e-14})
        cands.append(math.sqrt(res.fun))
    return min(cands)


class TestDistances:
    def test_flat_distance_is_height(self, flat2):
        assert flat2.distance_to_boundary(np.array([0.0, 1.0])) == pytest.approx(1.0, abs=1e-15)
        assert flat2.distance_to_boundary(np.array([5.0, 0.25])) == pytest.approx(0.25, abs=1e-15)

    def test_vertical_gap_examples(self, flat2):
        assert flat2.vertical_gap(np.array([0.0, 1.0])) == 1.0
        assert abs_profile().vertical_gap(np.array([1.0, 2.0])) == pytest.approx(1.0)

    def test_points_below_graph_are_rejected(self, flat2):
        with pytest.raises(DomainError):
            flat2.distance_to_boundary(np.array([0.0, -0.1]))
        with pytest.raises(DomainError):
            flat2.vertical_gap(np.array([0.0, 0.0]))

    @pytest.mark.parametrize("x", [(0.5, 1.2), (0.0, 0.3), (0.5, 0.55), (-1.0, 0.9), (0.25, 0.4)])
    def test_sawtooth_matches_dense_sampling(self, sawtooth2, x):
        x = np.array(x)
        assert sawtooth2.distance_to_boundary(x) == pytest.approx(
            brute_force_distance(sawtooth2, x), abs=1e-9)

    def test_abs_profile_closed_form(self):
        dom = abs_profile()
        # above the kink the nearest point is the vertex; off-axis it is the slope line
        assert dom.distance_to_boundary(np.array([0.0, 0.5])) == pytest.approx(0.5 / math.sqrt(2))
        assert dom.distance_to_boundary(np.array([1.0, 2.0])) == pytest.approx(1 / math.sqrt(2))

    def test_three_dimensional_flat(self):
        dom = GraphDomain.flat(3, 2.0)
        assert dom.distance_to_boundary(np.array([0.3, -0.2, 0.7])) == pytest.approx(0.7)

    def test_profile_must_pass_through_origin(self):
        with pytest.raises(GeometryError, match="psi"):
            GraphDomain([-1.0, 1.0], [1.0, 1.0], 1.0)

    def test_declared_lipschitz_below_slope_rejected(self):
        with pytest.raises(GeometryError, match="below the knot slope"):
            GraphDomain([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], 1.0, lipschitz=0.5)


@st.composite
def random_domain_and_point(draw):
    d = draw(st.sampled_from([2, 3]))
    M = draw(st.floats(0.0, 2.0))
    seed = draw(st.integers(0, 2 ** 16))
    dom = GraphDomain.random_piecewise_linear(d, 2.0, M, rng=seed) if M > 0 \
        else GraphDomain.flat(d, 2.0)
    xp = np.array(draw(st.lists(st.floats(-1.0, 1.0), min_size=d - 1, max_size=d - 1)))
    gap = draw(st.floats(1e-6, 2.0))
    return dom, np.r_[xp, float(dom.psi(xp[None, :])[0]) + gap]


@settings(max_examples=60, deadline=None)
@given(random_domain_and_point())
def test_distance_two_sided_bound(case):
    dom, x = case
    gap = dom.vertical_gap(x)
    delta = dom.distance_to_boundary(x)
    M = dom.lipschitz
    assert delta <= gap * (1 + 1e-12)
    assert delta >= gap / (math.sqrt(2) * (M + 1)) * (1 - 1e-12)
    # the sharp graph bound
    assert delta >= gap / math.sqrt(1 + M * M) * (1 - 1e-9)


class TestCones:
    def test_examples(self, flat2):
        spec = ConeSpec(2.0)
        z = np.zeros(2)
        assert cone_contains(flat2, z, spec, np.array([0.0, 1.0]))
        assert not cone_contains(flat2, z, spec, np.array([3.0, 1.0]))
        assert not cone_contains(flat2, z, ConeSpec(2.0, 0.5), np.array([0.0, 1.0]))

    def test_aperture_must_exceed_one(self):
        with pytest.raises(GeometryError):
            ConeSpec(1.0)

    def test_for_domain_checks_lipschitz(self, sawtooth2):
        with pytest.raises(GeometryError, match="1\\+2M"):
            ConeSpec.for_domain(sawtooth2, aperture=3.0)
        assert ConeSpec.for_domain(sawtooth2).aperture == default_aperture(1.0) == 6.0

    def test_ball_in_double_cone_flat(self, flat2):
        res = ball_in_double_cone(flat2, np.zeros(2), ConeSpec(2.0, 1.0), np.array([0.0, 0.5]))
        assert res and res.counterexample is None

    def test_ball_in_double_cone_at_cone_edge(self, sawtooth2, rng):
        spec = ConeSpec(6.0, 0.5)
        z = sawtooth2.boundary_point(np.array([0.1]))
        for _ in range(20):
            theta = rng.uniform(0.2, math.pi - 0.2)
            direction = np.array([math.cos(theta), math.sin(theta)])
            # bisect along the ray for |x - z| = 0.999 a delta(x)
            lo, hi = 1e-4, 0.3
            for _ in range(60):
                t = 0.5 * (lo + hi)
                x = z + t * direction
                inside = sawtooth2.contains(x) and np.linalg.norm(x - z) < \
                    0.999 * spec.aperture * sawtooth2.distance_to_boundary(x)
                lo, hi = (t, hi) if inside else (lo, t)
            x = z + lo * direction
            if not cone_contains(sawtooth2, z, spec, x):
                continue
            assert ball_in_double_cone(sawtooth2, z, spec, x, n_samples=256, rng=1)

    def test_random_pairs_on_sawtooth(self, sawtooth2, rng):
        spec = ConeSpec(6.0, 0.4)
        checked = 0
        while checked < 50:
            z = np.array([rng.uniform(-0.5, 0.5)])
            x = sawtooth2.sample_interior(1, rng, half_width=0.8, max_gap=0.5)[0]
            if not cone_contains(sawtooth2, z, spec, x):
                continue
            assert ball_in_double_cone(sawtooth2, z, spec, x, n_samples=256, rng=checked)
            checked += 1


@settings(max_examples=60, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 1), st.floats(1.1, 4), st.floats(0, 3))
def test_cone_monotone_in_aperture(z, x0, x1, a, extra):
    dom = GraphDomain.sawtooth(2, 2.0, 0.5)
    x = np.array([x0, float(dom.psi(np.array([[x0]]))[0]) + x1])
    if cone_contains(dom, np.array([z]), ConeSpec(a), x):
        assert cone_contains(dom, np.array([z]), ConeSpec(a + extra), x)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.01, 1), st.floats(1.1, 4), st.floats(0.1, 5))
def test_flat_cone_dilation_invariance(z, x0, x1, a, lam):
    dom = GraphDomain.flat(2, 4.0)
    x = np.array([x0, x1])
    zz = np.array([z, 0.0])
    lhs = cone_contains(dom, zz, ConeSpec(a), x)
    rhs = cone_contains(dom, lam * zz, ConeSpec(a), lam * x)
    # skip points within rounding of the cone boundary
    margin = abs(np.linalg.norm(x - zz) - a * x1)
    if margin > 1e-9:
        assert lhs == rhs


class TestRegions:
    def test_box_factor(self):
        assert box_factor(4.0, 1.0) == 120.0

    def test_carleson_box_flat(self):
        dom = GraphDomain.flat(2, 4.0)
        box = carleson_box_mesh_region(dom, 1.0)
        assert box.top == 2.0
        pts = np.array([[0.5, 1.9], [0.5, 2.1], [1.1, 1.0], [-0.99, 0.01]])
        assert box.contains(pts).tolist() == [True, False, False, True]

    def test_carleson_box_too_large(self):
        dom = GraphDomain.sawtooth(2, 1.0, 1.0)
        with pytest.raises(GeometryError, match="exceeds"):
            carleson_box_mesh_region(dom, 0.3)

    def test_surface_cube_children_tile(self):
        Q = SurfaceCube((0.0, 0.0), 2.0)
        kids = Q.children()
        assert len(kids) == 4
        assert sum(k.measure_projection() for k in kids) == pytest.approx(Q.measure_projection())
        assert all(Q.contains_cube(k) for k in kids)

    def test_cube_in_ball(self):
        Q = SurfaceCube((0.0,), 1.0)
        assert Q.inside_ball(SurfaceBall((0.0,), 0.6))
        assert not Q.inside_ball(SurfaceBall((0.0,), 0.5))
        assert CarlesonBox(GraphDomain.flat(2, 4.0), 1.0).k == box_factor(2.0, 0.0)


class TestPolygons:
    def test_square_charts(self):
        sq = PolygonDomain.unit_square()
        charts = localize_polygon(sq)
        assert len(charts) == 8
        assert all(ch.lipschitz <= 1.0 + 1e-12 for ch in charts)
        assert verify_cover(sq, charts).size == 0
        assert default_aperture_for(charts) == pytest.approx(6.0)
        for ch in charts:
            dev, wrong = verify_chart_graph(sq, ch, n=500)
            assert dev < 1e-12 and wrong == 0

    def test_l_shape_charts(self):
        L = PolygonDomain.l_shape()
        charts = localize_polygon(L)
        assert all(ch.lipschitz <= 1.0 + 1e-12 for ch in charts)
        assert verify_cover(L, charts).size == 0
        for ch in charts:
            dev, wrong = verify_chart_graph(L, ch, n=500)
            assert dev < 1e-12 and wrong == 0

    def test_polygon_distance_and_orientation(self):
        sq = PolygonDomain([[0, 1], [1, 1], [1, 0], [0, 0]])
        assert sq.area == pytest.approx(1.0)
        assert sq.distance_to_boundary(np.array([[0.5, 0.2]]))[0] == pytest.approx(0.2)

    def test_self_intersecting_polygon(self):
        with pytest.raises(GeometryError, match="intersect"):
            PolygonDomain([[0, 0], [3, 0], [3, 2], [1, -1]])


class TestProfiles:
    def test_round_trip_2d(self, tmp_path):
        dom = GraphDomain.random_piecewise_linear(2, 2.0, 0.5, rng=3)
        path = tmp_path / "p.txt"
        save_profile(dom, path)
        back = load_profile(path)
        assert np.array_equal(back.knots, dom.knots)
        assert np.array_equal(back.values, dom.values)
        assert back.lipschitz == dom.lipschitz

    def test_round_trip_3d(self, tmp_path):
        dom = GraphDomain.random_piecewise_linear(3, 1.0, 0.5, rng=4)
        path = tmp_path / "p3.txt"
        save_profile(dom, path)
        back = load_profile(path)
        assert np.array_equal(back.values, dom.values)
        x = np.array([[0.1, -0.3, 0.8]])
        assert back.distance_to_boundary(x) == pytest.approx(dom.distance_to_boundary(x))

    def test_normalizes_origin(self, tmp_path):
        path = tmp_path / "shift.txt"
        path.write_text("dimension 2\ntruncation_radius 1\nknots\n-1 2\n0 1\n1 2\n")
        dom = load_profile(path)
        assert float(dom.psi(np.zeros((1, 1)))[0]) == 0.0
        assert dom.values.tolist() == [1.0, 0.0, 1.0]

    def test_declared_lipschitz_too_small(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dimension 2\ntruncation_radius 1\nlipschitz 0.5\nknots\n-1 1\n0 0\n1 1\n")
        with pytest.raises(GeometryError, match="below the knot slope"):
            load_profile(path)

    def test_error_names_line(self, tmp_path):
        path = tmp_path / "bad2.txt"
        path.write_text("dimension 2\ntruncation_radius 1\nknots\n-1 1\n0 zero\n")
        with pytest.raises(GeometryError, match=":5:"):
            load_profile(path)
