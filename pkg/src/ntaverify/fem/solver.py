"""P1 Galerkin assembly and Dirichlet solves for complex divergence-form systems."""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import ARTIFICIAL, GRAPH
from .quadrature import composite_rule, simplex_rule

__all__ = [
    "AnalyticField",
    "DirichletSolver",
    "QuadratureError",
    "Solution",
    "SolverError",
    "SumField",
    "assemble",
    "gradient_field",
    "region_integral",
    "solve_dirichlet",
]

DENSE_LIMIT = 2000


class SolverError(RuntimeError):
    """Linear solve failed; ``history`` holds the relative residuals seen."""

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class QuadratureError(ValueError):
    """A singular weight was evaluated too close to the boundary."""


def _local_matrices(mesh, coeffs):
    d = mesh.dim
    G = mesh.grads
    a = coeffs.a(mesh.centroids)
    K = np.einsum("e,eabij,eqj,epi->epaqb", mesh.volumes, a, G, G)
    if coeffs.drift is not None:
        b = coeffs.b(mesh.centroids)
        D = np.einsum("e,eabj,eqj->eaqb", mesh.volumes / (d + 1), b, G)
        K = K + D[:, None, :, :, :]
    return K


def assemble(mesh, coeffs):
    """Global sparse matrix; dof ``m * vertex + component``, rows are test functions."""
    if coeffs.d != mesh.dim:
        raise ValueError("coefficient dimension differs from the mesh dimension")
    m = coeffs.m
    K = _local_matrices(mesh, coeffs)
    ns, k = mesh.simplices.shape
    dof = (mesh.simplices[:, :, None] * m + np.arange(m)[None, None, :])  # (ns, k, m)
    rows = np.broadcast_to(dof[:, :, :, None, None], K.shape)
    cols = np.broadcast_to(dof[:, None, None, :, :], K.shape)
    n = mesh.nv * m
    A = sp.coo_matrix((K.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def load_vector(mesh, source, m, degree=4):
    """``F[p, alpha] = int source^alpha phi_p`` with a degree-4 simplex rule."""
    bary, w = simplex_rule(mesh.dim, degree)
    pts = mesh.quadrature_points(bary)  # (ns, q, d)
    vals = np.asarray(source(pts.reshape(-1, mesh.dim)), dtype=complex).reshape(
        mesh.ns, bary.shape[0], m)
    loc = np.einsum("e,q,qp,eqa->epa", mesh.volumes, w, bary, vals)
    F = np.zeros((mesh.nv, m), dtype=complex)
    np.add.at(F, mesh.simplices, loc)
    return F.ravel()


class DirichletSolver:
    """Factorized Dirichlet problem on a fixed mesh and coefficient field.

    ``artificial_bc`` is ``"zero"`` (homogeneous data on truncation faces) or
    ``"exact"`` (values of a supplied closed-form solution there).
    """

    def __init__(self, mesh, coeffs, artificial_bc="zero", solver="auto", tol=1e-10,
                 maxiter=2000):
        if artificial_bc not in ("zero", "exact"):
            raise ValueError(f"unknown artificial boundary policy {artificial_bc!r}")
        self.mesh = mesh
        self.coeffs = coeffs
        self.artificial_bc = artificial_bc
        self.tol = tol
        self.maxiter = maxiter
        m = coeffs.m
        self.A = assemble(mesh, coeffs)
        tags = mesh.vertex_tags()
        self.vertex_tags = tags
        fixed_v = tags >= 0
        fixed = np.repeat(fixed_v, m)
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        self.bnd = np.flatnonzero(fixed)
        A = self.A
        self.A_ff = A[self.free][:, self.free].tocsc()
        self.A_fb = A[self.free][:, self.bnd].tocsr()
        n = self.free.size
        self.method = solver if solver != "auto" else ("dense" if n < DENSE_LIMIT else "splu")
        if n == 0:
            self._factor = None
        elif self.method == "dense":
            self._factor = sla.lu_factor(self.A_ff.toarray())
        elif self.method == "splu":
            self._factor = spla.splu(self.A_ff)
        elif self.method == "gmres":
            self._factor = spla.spilu(self.A_ff, drop_tol=1e-5, fill_factor=20)
        else:
            raise ValueError(f"unknown solver {solver!r}")

    def boundary_values(self, datum, exact=None):
        mesh, m = self.mesh, self.coeffs.m
        vals = np.zeros((mesh.nv, m), dtype=complex)
        g = self.vertex_tags == GRAPH
        vals[g] = datum(mesh.vertices[g])
        art = self.vertex_tags == ARTIFICIAL
        if self.artificial_bc == "exact":
            if exact is None:
                raise ValueError("the exact-extension policy needs a closed-form solution")
            vals[art] = exact(mesh.vertices[art])
        return vals

    def _linear_solve(self, rhs):
        A = self.A_ff
        if self._factor is None:
            return rhs
        if self.method == "dense":
            x = sla.lu_solve(self._factor, rhs)
        elif self.method == "splu":
            x = self._factor.solve(rhs)
        else:
            history = []
            M = spla.LinearOperator(A.shape, self._factor.solve, dtype=complex)
            bn = np.linalg.norm(rhs) or 1.0
            x, info = spla.gmres(A, rhs, M=M, rtol=self.tol, maxiter=self.maxiter, restart=100,
                                 callback=lambda r: history.append(float(r)),
                                 callback_type="pr_norm")
            if info != 0:
                raise SolverError(f"GMRES did not converge (info={info})", history)
            res = np.linalg.norm(A @ x - rhs) / bn
            if res > self.tol:
                raise SolverError(f"GMRES residual {res:.3g} above tolerance", history + [res])
        return x

    def solve(self, datum, exact=None, source=None):
        m = self.coeffs.m
        bvals = self.boundary_values(datum, exact).ravel()
        rhs = -(self.A_fb @ bvals[self.bnd])
        if source is not None:
            rhs = rhs + load_vector(self.mesh, source, m)[self.free]
        x = self._linear_solve(rhs)
        bn = np.linalg.norm(rhs)
        residual = float(np.linalg.norm(self.A_ff @ x - rhs) / bn) if bn > 0 else 0.0
        if residual > max(self.tol, 1e-10):
            raise SolverError(f"relative residual {residual:.3g} above tolerance", [residual])
        u = bvals.copy()
        u[self.free] = x
        return Solution(self.mesh, u.reshape(self.mesh.nv, m), self.coeffs, datum, residual)


def solve_dirichlet(mesh, coeffs, datum, artificial_bc="zero", exact=None, source=None,
                    solver="auto", tol=1e-10):
    """One-shot Dirichlet solve; use :class:`DirichletSolver` to reuse a factorization."""
    return DirichletSolver(mesh, coeffs, artificial_bc, solver, tol).solve(datum, exact, source)


class Solution:
    """Piecewise-linear ``C^m``-valued field given by its vertex values."""

    def __init__(self, mesh, values, coeffs=None, datum=None, residual=0.0):
        self.mesh = mesh
        self.values = np.asarray(values, dtype=complex).reshape(mesh.nv, -1)
        self.m = self.values.shape[1]
        self.coeffs = coeffs
        self.datum = datum
        self.residual = residual
        self._grad = None

    @classmethod
    def interpolate(cls, mesh, fn):
        return cls(mesh, np.asarray(fn(mesh.vertices), dtype=complex).reshape(mesh.nv, -1))

    def gradient(self):
        """Per-simplex gradient ``(ns, m, d)``."""
        if self._grad is None:
            vals = self.values[self.mesh.simplices]  # (ns, k, m)
            self._grad = np.einsum("ekm,ekd->emd", vals, self.mesh.grads)
        return self._grad

    def values_at(self, points, cells, bary=None):
        if bary is None:
            B = self.mesh.bary_matrix[cells]
            xh = np.column_stack([np.ones(points.shape[0]), points])
            bary = np.einsum("nij,nj->ni", B, xh)
        vals = self.values[self.mesh.simplices[cells]]
        return np.einsum("nk,nkm->nm", bary, vals)

    def gradients_at(self, points, cells):
        return self.gradient()[cells]

    def evaluate(self, points, outside=np.nan):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells, bary = self.mesh.locate(points)
        out = np.full((points.shape[0], self.m), outside, dtype=complex)
        ok = cells >= 0
        if np.any(ok):
            out[ok] = self.values_at(points[ok], cells[ok], bary[ok])
        return out

    def l2_error(self, exact, degree=4):
        bary, w = simplex_rule(self.mesh.dim, degree)
        pts = self.mesh.quadrature_points(bary)
        ex = np.asarray(exact(pts.reshape(-1, self.mesh.dim)), dtype=complex).reshape(
            self.mesh.ns, bary.shape[0], self.m)
        uh = np.einsum("qk,ekm->eqm", bary, self.values[self.mesh.simplices])
        err = np.sum(np.abs(ex - uh) ** 2, axis=2)
        return float(math.sqrt(np.einsum("e,q,eq->", self.mesh.volumes, w, err)))

    def energy(self):
        g = self.gradient()
        return float(np.sum(self.mesh.volumes * np.sum(np.abs(g) ** 2, axis=(1, 2))))

    def __add__(self, other):
        return Solution(self.mesh, self.values + other.values, self.coeffs)

    def __sub__(self, other):
        return Solution(self.mesh, self.values - other.values, self.coeffs)

    def scaled(self, c):
        return Solution(self.mesh, c * self.values, self.coeffs, None, self.residual)


def gradient_field(solution):
    """Exact per-simplex gradient of a piecewise-linear solution, ``(ns, m, d)``."""
    return solution.gradient()


class AnalyticField:
    """Closed-form field with gradient, integrated on a mesh like a solution."""

    def __init__(self, fn, grad=None, m=1, mesh=None, support_box=None):
        self.fn = fn
        self.grad = grad
        self.m = m
        self.mesh = mesh
        self.support_box = support_box

    def evaluate(self, points):
        return self.values_at(np.atleast_2d(np.asarray(points, dtype=float)))

    def values_at(self, points, cells=None, bary=None):
        return np.asarray(self.fn(points), dtype=complex).reshape(points.shape[0], self.m)

    def gradients_at(self, points, cells=None):
        if self.grad is None:
            raise ValueError("this field has no gradient")
        return np.asarray(self.grad(points), dtype=complex).reshape(points.shape[0], self.m, -1)


class SumField:
    """Pointwise sum of fields sharing an ``evaluate`` interface."""

    def __init__(self, *parts):
        self.parts = parts
        self.m = parts[0].m
        self.mesh = getattr(parts[0], "mesh", None)

    def evaluate(self, points):
        out = self.parts[0].evaluate(points)
        for p in self.parts[1:]:
            out = out + p.evaluate(points)
        return out

    def values_at(self, points, cells=None, bary=None):
        return self.evaluate(points)


def _region_bounds(region, d):
    b = getattr(region, "bounds_box", None)
    if b is not None:
        return b()
    return np.full(d, -np.inf), np.full(d, np.inf)


def _weight_values(weight, points, domain):
    if weight is None:
        return None
    if callable(weight):
        return np.asarray(weight(points), dtype=float)
    kind, s = weight
    if kind == "gap":
        base = domain.vertical_gap(points, check=False)
    elif kind == "delta":
        base = domain.distance_to_boundary(points)
    else:
        raise ValueError(f"unknown weight kind {kind!r}")
    if s < 0 and np.any(base < 1e-14):
        raise QuadratureError("singular weight evaluated within 1e-14 of the boundary")
    return base ** s


def region_integral(field, region=None, weight=None, exponent=2.0, quantity="value",
                    mesh=None, levels=None, chunk=20000):
    """``int_region |field|^exponent * weight dx`` by simplex quadrature.

    ``quantity`` selects the field values or their gradients (Frobenius norm).
    Cells fully inside the region use the degree-4 rule; cells cut by its
    boundary use a composite rule on a red refinement with the indicator
    evaluated at every node.  ``weight`` is ``None``, ``("gap", s)`` for
    ``(x_d - psi)^s``, ``("delta", s)`` for ``delta(x)^s``, or a callable.
    """
    mesh = mesh if mesh is not None else field.mesh
    d = mesh.dim
    domain = mesh.domain
    if levels is None:
        levels = 3 if d == 2 else 2
    V = mesh.vertices[mesh.simplices]
    lo, hi = _region_bounds(region, d) if region is not None else (None, None)
    cand = np.arange(mesh.ns)
    if lo is not None:
        vmin, vmax = V.min(axis=1), V.max(axis=1)
        cand = np.flatnonzero(np.all(vmax >= lo, axis=1) & np.all(vmin <= hi, axis=1))
    bary, w = simplex_rule(d, 4)
    cbary, cw = composite_rule(d, levels, 2)

    def accumulate(cells, nodes, wts, indicator):
        total = 0.0
        for s in range(0, cells.size, max(1, chunk // nodes.shape[0])):
            c = cells[s: s + max(1, chunk // nodes.shape[0])]
            pts = np.einsum("qk,ekd->eqd", nodes, V[c]).reshape(-1, d)
            cc = np.repeat(c, nodes.shape[0])
            if quantity == "value":
                f = field.values_at(pts, cc, np.tile(nodes, (c.size, 1)))
                mag = np.sqrt(np.sum(np.abs(f) ** 2, axis=1))
            else:
                g = field.gradients_at(pts, cc)
                mag = np.sqrt(np.sum(np.abs(g) ** 2, axis=(1, 2)))
            val = mag ** exponent if exponent != 1 else mag
            wv = _weight_values(weight, pts, domain)
            if wv is not None:
                val = val * wv
            if indicator:
                val = val * region.contains(pts)
            val = val.reshape(c.size, nodes.shape[0])
            total += float(np.einsum("e,q,eq->", mesh.volumes[c], wts, val))
        return total

    if region is None:
        return accumulate(cand, bary, w, False)
    # classify candidate cells by the indicator at vertices and degree-4 nodes
    probe = np.vstack([np.eye(d + 1), bary])
    full, mixed = [], []
    step = max(1, chunk // probe.shape[0])
    for s in range(0, cand.size, step):
        c = cand[s: s + step]
        pts = np.einsum("qk,ekd->eqd", probe, V[c]).reshape(-1, d)
        inside = np.asarray(region.contains(pts)).reshape(c.size, probe.shape[0])
        full.append(c[inside.all(axis=1)])
        mixed.append(c[inside.any(axis=1) & ~inside.all(axis=1)])
    full = np.concatenate(full) if full else np.zeros(0, dtype=int)
    mixed = np.concatenate(mixed) if mixed else np.zeros(0, dtype=int)
    return accumulate(full, bary, w, False) + accumulate(mixed, cbary, cw, True)
