import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from ntaverify.fem import (AnalyticField, BoundaryDatum, BumpDatum, CoefficientError,
                           ConstantDatum, DirichletSolver, Solution, anisotropic, assemble,
                           coefficient_family, drift_scaled, graph_mesh, identity, load_mesh,
                           oscillatory, region_integral, save_mesh, solve_dirichlet)
from ntaverify.fem.manufactured import convergence_study, oscillating_bump, poisson_kernel_field
from ntaverify.geometry import BallRegion, CarlesonBox, GraphDomain
from ntaverify.halfplane import HalfPlanePoisson


@pytest.fixture(scope="module")
def flat_mesh():
    return graph_mesh(GraphDomain.flat(2, 2.0), 1.0 / 16.0)


@pytest.fixture(scope="module")
def saw_mesh():
    return graph_mesh(GraphDomain.sawtooth(2, 1.0, 0.5), 1.0 / 16.0)


class TestAssembly:
    def test_laplace_interior_rows_sum_to_zero(self, saw_mesh):
        A = assemble(saw_mesh, identity(2))
        interior = np.flatnonzero(saw_mesh.vertex_tags() < 0)
        rows = np.asarray(A[interior].sum(axis=1)).ravel()
        assert np.max(np.abs(rows)) < 1e-12

    def test_laplace_matrix_symmetric(self, saw_mesh):
        A = assemble(saw_mesh, identity(2))
        assert spla.norm(A - A.T) < 1e-12

    def test_complex_anisotropic_hermitian_part_positive(self, saw_mesh):
        solver = DirichletSolver(saw_mesh, anisotropic(2))
        H = 0.5 * (solver.A_ff + solver.A_ff.conj().T)
        lam = spla.eigsh(H.tocsc(), k=1, sigma=0, which="LM", return_eigenvectors=False)
        assert lam[0] > 0

    def test_mesh_conforming(self, saw_mesh):
        assert saw_mesh.check_conforming()


class TestSolve:
    def test_zero_datum_gives_zero(self, saw_mesh):
        sol = solve_dirichlet(saw_mesh, anisotropic(2), ConstantDatum(0.0))
        assert np.max(np.abs(sol.values)) == 0.0

    def test_affine_field_reproduced(self, saw_mesh):
        g = np.array([0.3 - 0.2j, 1.1 + 0.5j])

        def affine(x):
            return (0.7 + x @ g)[:, None]

        class Affine(BoundaryDatum):
            def __call__(self, x):
                return affine(np.atleast_2d(x))

        sol = solve_dirichlet(saw_mesh, anisotropic(2), Affine(), "exact", exact=affine)
        assert np.allclose(sol.values, affine(saw_mesh.vertices), atol=1e-10)
        assert np.allclose(sol.gradient()[:, 0, :], g, atol=1e-9)

    def test_constant_has_zero_gradient(self, saw_mesh):
        sol = solve_dirichlet(saw_mesh, identity(2), ConstantDatum(1.0), "exact",
                              exact=lambda x: np.ones((x.shape[0], 1)))
        assert np.allclose(sol.values, 1.0, atol=1e-12)
        assert np.max(np.abs(sol.gradient())) < 1e-10

    def test_maximum_principle(self, saw_mesh):
        datum = BumpDatum([[0.0]], [0.5], [1.0])
        sol = solve_dirichlet(saw_mesh, identity(2), datum)
        v = sol.values.real
        assert v.min() >= -1e-12 and v.max() <= 1.0 + 1e-12
        assert np.max(np.abs(sol.values.imag)) < 1e-14

    def test_energy_matches_stiffness_form(self, saw_mesh):
        solver = DirichletSolver(saw_mesh, identity(2))
        sol = solver.solve(BumpDatum([[0.1]], [0.4], [1.0 + 2.0j]))
        u = sol.values.ravel()
        quad = float(np.real(np.vdot(u, solver.A @ u)))
        assert sol.energy() == pytest.approx(quad, rel=1e-12)

    def test_linearity(self, saw_mesh):
        solver = DirichletSolver(saw_mesh, anisotropic(2))
        f = BumpDatum([[0.0]], [0.5], [1.0])
        u1 = solver.solve(f)
        u2 = solver.solve(f.scaled(2 - 1j))
        assert np.allclose(u2.values, (2 - 1j) * u1.values, atol=1e-12)

    def test_drift_perturbation_is_order_nu(self, saw_mesh):
        dom = saw_mesh.domain
        f = BumpDatum([[0.0]], [0.5], [1.0])
        base = solve_dirichlet(saw_mesh, identity(2), f)
        diffs = []
        for nu in (1e-3, 2e-3):
            sol = solve_dirichlet(saw_mesh, drift_scaled(identity(2), dom, nu), f)
            diffs.append(np.max(np.abs(sol.values - base.values)))
        assert diffs[0] > 0
        assert diffs[1] / diffs[0] == pytest.approx(2.0, rel=0.01)

    def test_system_m2_decouples_for_identity(self, saw_mesh):
        f = BumpDatum([[0.0]], [0.5], [[1.0, 0.0]])
        g = BumpDatum([[0.0]], [0.5], [1.0])
        sys2 = solve_dirichlet(saw_mesh, identity(2, m=2), f)
        sc = solve_dirichlet(saw_mesh, identity(2), g)
        assert np.allclose(sys2.values[:, 0], sc.values[:, 0], atol=1e-12)
        assert np.max(np.abs(sys2.values[:, 1])) < 1e-14

    def test_exact_policy_needs_solution(self, saw_mesh):
        with pytest.raises(ValueError, match="closed-form"):
            solve_dirichlet(saw_mesh, identity(2), ConstantDatum(1.0), "exact")


class TestConvergence:
    def test_second_order_l2_2d(self):
        dom = GraphDomain.sawtooth(2, 1.0, 0.5)
        errors, orders = convergence_study(dom, anisotropic(2), [oscillating_bump(2)],
                                           [0.1, 0.05, 0.025])
        assert errors[0] > errors[1] > errors[2]
        assert np.all(orders >= 1.8)

    def test_poisson_kernel_is_harmonic(self):
        dom = GraphDomain.flat(2, 1.0)
        errors, orders = convergence_study(dom, identity(2), [poisson_kernel_field(2)],
                                           [0.1, 0.05])
        assert orders[0] >= 1.8


class TestRegionIntegrals:
    def test_box_area(self, flat_mesh):
        one = Solution.interpolate(flat_mesh, lambda x: np.ones(x.shape[0]))
        box = CarlesonBox(flat_mesh.domain, 1.0)
        assert region_integral(one, box, exponent=1.0) == pytest.approx(4.0, rel=1e-12)

    def test_weighted_height(self, flat_mesh):
        u = Solution.interpolate(flat_mesh, lambda x: x[:, -1])
        box = CarlesonBox(flat_mesh.domain, 1.0)
        val = region_integral(u, box, weight=("gap", -2.0), exponent=2.0)
        assert val == pytest.approx(4.0, rel=1e-10)

    def test_half_disk_moment(self, flat_mesh):
        u = Solution.interpolate(flat_mesh, lambda x: x[:, -1])
        r = 0.25
        val = region_integral(u, BallRegion(np.zeros(2), 2 * r), exponent=2.0)
        assert val == pytest.approx(2 * math.pi * r ** 4, rel=2e-3)

    def test_analytic_field_gradient_required(self):
        f = AnalyticField(lambda x: x[:, :1])
        with pytest.raises(Exception):
            f.gradients_at(np.zeros((1, 2)))


def test_mesh_round_trip(tmp_path, saw_mesh):
    path = tmp_path / "mesh.txt"
    save_mesh(saw_mesh, path)
    back = load_mesh(path)
    assert np.array_equal(back.vertices, saw_mesh.vertices)
    assert np.array_equal(back.simplices, saw_mesh.simplices)
    assert np.array_equal(back.facet_tags, saw_mesh.facet_tags)


class TestCoefficients:
    def test_families_validate(self):
        dom = GraphDomain.sawtooth(2, 1.0, 0.5)
        for c in (identity(2), anisotropic(2), oscillatory(2), anisotropic(3, m=2)):
            d = c.d
            domain = dom if d == 2 else GraphDomain.sawtooth(3, 1.0, 0.5)
            checks = c.validate(domain, n=500)
            assert all(ch.passed for ch in checks)

    def test_drift_bound(self):
        dom = GraphDomain.sawtooth(2, 1.0, 1.0)
        c = coefficient_family("drift", 2, domain=dom, nu=0.2)
        checks = c.validate(dom, n=2000)
        assert checks[-1].name == "drift" and checks[-1].worst <= 0.2

    def test_violation_reported(self):
        dom = GraphDomain.flat(2, 1.0)
        c = identity(2)
        c.mu = 2.0
        with pytest.raises(CoefficientError, match="boundedness|ellipticity"):
            c.validate(dom, n=100)

    def test_unknown_family(self):
        with pytest.raises(CoefficientError):
            coefficient_family("nonsense", 2)


class _Indicator(BoundaryDatum):
    def __call__(self, x):
        x = np.atleast_2d(x)
        return (np.abs(x[:, 0]) < 1.0).astype(complex)[:, None]

    def breakpoints(self):
        return np.array([-1.0, 1.0])

    def support_radius(self):
        return 1.0


class TestHalfPlane:
    def test_indicator_closed_form(self):
        u = HalfPlanePoisson(_Indicator())
        rng = np.random.default_rng(0)
        pts = np.column_stack([rng.uniform(-3, 3, 200), 10.0 ** rng.uniform(-4, 1, 200)])
        x, y = pts.T
        exact = (np.arctan((1 - x) / y) + np.arctan((1 + x) / y)) / math.pi
        assert np.max(np.abs(u.evaluate(pts)[:, 0] - exact)) < 1e-10

    def test_agrees_with_fem(self):
        dom = GraphDomain.flat(2, 4.0)
        mesh = graph_mesh(dom, 1.0 / 16.0, half_width=4.0, top=4.0)
        datum = BumpDatum([[0.0]], [0.5], [1.0])
        fem = solve_dirichlet(mesh, identity(2), datum)
        oracle = HalfPlanePoisson(datum)
        pts = np.array([[0.0, 0.25], [0.3, 0.5], [-0.2, 0.1]])
        assert np.allclose(fem.evaluate(pts), oracle.evaluate(pts), atol=0.02)

    def test_trace(self):
        datum = BumpDatum([[0.0]], [0.5], [1.0])
        u = HalfPlanePoisson(datum)
        xp = np.linspace(-1, 1, 11)
        assert np.allclose(u.trace(xp), datum(np.column_stack([xp, 0 * xp])))
