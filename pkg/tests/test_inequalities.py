import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntaverify.experiments import power_field, scaled_gap_bump
from ntaverify.fem import AnalyticField, ConstantDatum, DirichletSolver, Solution, graph_mesh, identity
from ntaverify.geometry import ConeSpec, GraphDomain
from ntaverify.inequalities import (InequalityReport, PreconditionError, cacciopoli_check,
                                    hardy_check, reverse_holder_check, self_improve_scan,
                                    sobolev_check, sobolev_exponent)
from ntaverify.maximal import boundary_grid, maximal_field


@pytest.fixture(scope="module")
def flat_solution():
    mesh = graph_mesh(GraphDomain.flat(2, 1.0), 1.0 / 32.0)
    solver = DirichletSolver(mesh, identity(2), artificial_bc="exact")
    return solver.solve(ConstantDatum(0.0), exact=lambda x: x[:, -1:].astype(complex))


class TestHardy:
    @pytest.mark.parametrize("s,expected", [(0.51, 3.845), (0.6, 2.778), (0.75, 1.778),
                                            (1.0, 1.0)])
    def test_power_family(self, s, expected):
        rep = hardy_check(power_field(s), 1.0, GraphDomain.flat(2, 1.0))
        assert rep.ratio == pytest.approx(expected, rel=1e-3)
        assert rep.ratio == pytest.approx(1 / s ** 2, rel=0.02)
        assert rep.passed and rep.budget == pytest.approx(4.2)

    def test_nonvanishing_trace_rejected(self):
        one = AnalyticField(lambda x: np.ones((x.shape[0], 1)), lambda x: np.zeros((x.shape[0], 1, 2)))
        with pytest.raises(PreconditionError, match="vanish"):
            hardy_check(one, 1.0, GraphDomain.flat(2, 1.0))

    def test_mesh_field(self, flat_solution):
        rep = hardy_check(flat_solution, 0.1, flat_solution.mesh.domain)
        assert rep.ratio == pytest.approx(1.0, rel=1e-6)


class TestCacciopoli:
    def test_half_disk_closed_form(self, flat_solution):
        rep = cacciopoli_check(flat_solution, [0.0, 0.0], 0.25, budget=8.0)
        assert rep.ratio == pytest.approx(0.25, rel=0.01)
        assert rep.left == pytest.approx(0.25 ** 2 * math.pi * 0.25 ** 2 / 2, rel=0.01)

    def test_zero_field_vacuous(self, flat_solution):
        zero = Solution(flat_solution.mesh, np.zeros(flat_solution.mesh.nv))
        rep = cacciopoli_check(zero, [0.0, 0.0], 0.1)
        assert rep.vacuous and rep.passed

    def test_trace_precondition(self, flat_solution):
        one = Solution(flat_solution.mesh, np.ones(flat_solution.mesh.nv))
        with pytest.raises(PreconditionError, match="boundary vertices"):
            cacciopoli_check(one, [0.0, 0.0], 0.1)

    def test_untrusted_region(self, flat_solution):
        with pytest.raises(PreconditionError, match="trusted"):
            cacciopoli_check(flat_solution, [0.0, 0.0], 0.5)


class TestSobolev:
    def test_exponent(self):
        assert sobolev_exponent(3) == 6.0
        assert sobolev_exponent(4) == 4.0

    @pytest.mark.parametrize("d", [2, 3])
    def test_rescaled_profiles_match(self, d):
        dom = GraphDomain.flat(d, 1.0)
        r = 0.02
        fields = {}
        for scale in (r, 2 * r):
            rho = 5 * 2.0 * scale
            fn, grad = scaled_gap_bump(dom, rho)
            fields[scale] = AnalyticField(fn, grad, support_box=(-rho * np.ones(d),
                                                                 rho * np.ones(d)))
        rep = sobolev_check(fields, r, dom, 2.0)
        assert rep.ratio == pytest.approx(1.0, abs=1e-6)


@pytest.fixture(scope="module")
def height_maximal():
    dom = GraphDomain.flat(2, 1.0)
    grid = boundary_grid(dom, -1.0, 1.0, 256)
    return maximal_field(AnalyticField(lambda x: x[:, -1:].astype(complex)), grid,
                         ConeSpec.for_domain(dom), top=2.0)


class TestReverseHolder:
    def test_scale_stable_for_homogeneous_field(self, height_maximal):
        reps = reverse_holder_check(height_maximal, [0.5, 0.25, 0.125], 4.0, 4.0)
        ratios = [r.ratio for r in reps[:-1]]
        assert max(ratios) / min(ratios) < 1.05
        assert all(r.passed for r in reps)
        assert reps[-1].name == "reverse-holder-stability"

    def test_invariant_under_scalar_multiple(self, height_maximal):
        scaled = maximal_field(AnalyticField(lambda x: 3j * x[:, -1:]), height_maximal.grid,
                               ConeSpec(height_maximal.aperture), top=2.0,
                               cloud=height_maximal.cloud)
        a = reverse_holder_check(height_maximal, [0.25], 4.0, 4.0)[0].ratio
        b = reverse_holder_check(scaled, [0.25], 4.0, 4.0)[0].ratio
        assert a == pytest.approx(b, rel=1e-12)

    def test_zero_field_vacuous(self, height_maximal):
        zero = maximal_field(AnalyticField(lambda x: np.zeros((x.shape[0], 1))),
                             height_maximal.grid, ConeSpec(6.0), top=2.0,
                             cloud=height_maximal.cloud)
        reps = reverse_holder_check(zero, [0.5, 0.25], 4.0, 4.0)
        assert all(r.vacuous and r.passed for r in reps)

    def test_self_improvement_scan(self, height_maximal):
        q_bar, results = self_improve_scan(height_maximal, [0.5, 0.25], [2.0, 4.0, 8.0], 4.0)
        assert q_bar == 8.0
        assert set(results) == {2.0, 4.0, 8.0}


class TestReports:
    def test_infinite_and_negative(self):
        assert not InequalityReport.build("x", math.inf, 1.0, 2.0).passed
        assert not InequalityReport.build("x", -1.0, 1.0, 2.0).passed
        rep = InequalityReport.build("x", 1.0, 0.0, 2.0)
        assert rep.ratio == math.inf and not rep.passed

    def test_json(self):
        rep = InequalityReport.build("x", 1.0, 0.0, 2.0, {"arr": np.arange(2)})
        d = json.loads(rep.to_json())
        assert d["ratio"] == "inf" and d["context"]["arr"] == [0, 1]


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(1e-3, 1e3))
def test_pass_flag_recomputable(left, right, budget):
    rep = InequalityReport.build("p", left, right, budget)
    assert rep.passed == rep.recomputed_pass()
