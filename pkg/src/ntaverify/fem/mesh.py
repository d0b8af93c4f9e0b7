"""Boundary-fitted simplicial meshes of truncated graph domains and polygons.

Graph-domain meshes are columns of vertices above a lateral grid: vertex ``j``
of a column sits at ``psi(x') + j (H - psi(x')) / n``.  Every layer interface
is then the piecewise-linear interpolant of the column heights, which makes
point location exact and O(1) per point.  Quads (``d = 2``) and triangular
prisms (``d = 3``) are split with the diagonal rule "bottom of the lower
column index to top of the higher", which keeps neighbouring cells conforming.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from ..geometry.graph import GeometryError

__all__ = [
    "GRAPH",
    "ARTIFICIAL",
    "Mesh",
    "MeshError",
    "graph_mesh",
    "load_mesh",
    "polygon_mesh",
    "save_mesh",
]

GRAPH = 0
ARTIFICIAL = 1
TAG_NAMES = {GRAPH: "graph", ARTIFICIAL: "artificial"}


class MeshError(ValueError):
    """Inverted, degenerate or non-conforming mesh."""


class Mesh:
    """Conforming simplicial mesh with tagged boundary facets.

    Attributes
    ----------
    vertices : (nv, d) array
    simplices : (ns, d + 1) int array, positively oriented
    facets : (nf, d) int array of boundary facets
    facet_tags : (nf,) int array, ``GRAPH`` or ``ARTIFICIAL``
    """

    def __init__(self, vertices, simplices, facets, facet_tags, locator=None, domain=None,
                 trusted=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.simplices = np.ascontiguousarray(simplices, dtype=np.int64)
        self.facets = np.ascontiguousarray(facets, dtype=np.int64)
        self.facet_tags = np.ascontiguousarray(facet_tags, dtype=np.int64)
        self.dim = self.vertices.shape[1]
        self.domain = domain
        self.trusted = trusted
        if self.simplices.shape[1] != self.dim + 1:
            raise MeshError("simplices do not match the vertex dimension")
        self._geometry()
        self._locator = locator

    def _geometry(self):
        d = self.dim
        V = self.vertices[self.simplices]  # (ns, d+1, d)
        T = np.concatenate([np.ones((V.shape[0], 1, d + 1)), V.transpose(0, 2, 1)], axis=1)
        det = np.linalg.det(T)
        if np.any(det <= 0):
            bad = int(np.argmax(det <= 0))
            raise MeshError(f"simplex {bad} is inverted or degenerate (det={det[bad]:.3g})")
        self.volumes = det / math.factorial(d)
        self.bary_matrix = np.linalg.inv(T)  # lambda = B @ [1; x]
        self.grads = self.bary_matrix[:, :, 1:]  # (ns, d+1, d)
        edges = V[:, :, None, :] - V[:, None, :, :]
        self.h = float(np.sqrt(np.max(np.sum(edges ** 2, axis=-1))))
        self.centroids = V.mean(axis=1)

    # ------------------------------------------------------------------ topology
    @property
    def nv(self):
        return self.vertices.shape[0]

    @property
    def ns(self):
        return self.simplices.shape[0]

    def boundary_vertices(self, tag=None):
        f = self.facets if tag is None else self.facets[self.facet_tags == tag]
        return np.unique(f)

    def vertex_tags(self):
        """Per-vertex tag: -1 interior, GRAPH wins over ARTIFICIAL on shared vertices."""
        tags = np.full(self.nv, -1, dtype=np.int64)
        tags[self.boundary_vertices(ARTIFICIAL)] = ARTIFICIAL
        tags[self.boundary_vertices(GRAPH)] = GRAPH
        return tags

    def check_conforming(self):
        """Every interior facet is shared by exactly two simplices; boundary facets match."""
        d = self.dim
        faces = []
        for k in range(d + 1):
            faces.append(np.delete(self.simplices, k, axis=1))
        faces = np.sort(np.concatenate(faces), axis=1)
        uniq, counts = np.unique(faces, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("a facet is shared by more than two simplices")
        boundary = uniq[counts == 1]
        tagged = np.unique(np.sort(self.facets, axis=1), axis=0)
        if boundary.shape != tagged.shape or not np.array_equal(boundary, tagged):
            raise MeshError("tagged boundary facets differ from the topological boundary")
        return True

    # ------------------------------------------------------------------ location
    def locate(self, points):
        """Containing simplex (``-1`` outside) and barycentric coordinates."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self._locator is None:
            self._locator = TreeLocator(self)
        cells = self._locator(points)
        bary = np.zeros((points.shape[0], self.dim + 1))
        ok = cells >= 0
        if np.any(ok):
            B = self.bary_matrix[cells[ok]]
            xh = np.column_stack([np.ones(ok.sum()), points[ok]])
            bary[ok] = np.einsum("nij,nj->ni", B, xh)
        return cells, bary

    def quadrature_points(self, bary_nodes, cells=None):
        """Physical coordinates of barycentric ``nodes`` on ``cells`` -> ``(nc, q, d)``."""
        V = self.vertices[self.simplices if cells is None else self.simplices[cells]]
        return np.einsum("qi,cid->cqd", bary_nodes, V)


class TreeLocator:
    """Generic point location through a KD-tree on simplex centroids."""

    def __init__(self, mesh, k=None):
        self.mesh = mesh
        self.tree = cKDTree(mesh.centroids)
        self.k = k or (12 if mesh.dim == 2 else 32)

    def __call__(self, points):
        mesh = self.mesh
        n = points.shape[0]
        cells = np.full(n, -1, dtype=np.int64)
        todo = np.arange(n)
        k = self.k
        while todo.size and k <= 4 * self.k * 8:
            kk = min(k, mesh.ns)
            _, cand = self.tree.query(points[todo], k=kk)
            cand = np.atleast_2d(cand).reshape(todo.size, kk)
            B = mesh.bary_matrix[cand]  # (m, k, d+1, d+1)
            xh = np.column_stack([np.ones(todo.size), points[todo]])
            lam = np.einsum("mkij,mj->mki", B, xh)
            score = lam.min(axis=2)
            best = np.argmax(score, axis=1)
            ok = score[np.arange(todo.size), best] >= -1e-10
            cells[todo[ok]] = cand[np.arange(todo.size), best][ok]
            todo = todo[~ok]
            if kk == mesh.ns:
                break
            k *= 4
        return cells


class _GraphLocator:
    """Exact O(1) point location on a structured graph mesh."""

    def __init__(self, mesh, xs, ys, heights, top, nlayers):
        self.mesh = mesh
        self.xs = xs
        self.ys = ys  # None for d = 2
        self.psi = heights  # column profile values
        self.top = top
        self.n = nlayers

    def __call__(self, points):
        if self.ys is None:
            return self._locate2(points)
        return self._locate3(points)

    def _layer(self, z, psibar, valid):
        tau = (z - psibar) / (self.top - psibar) * self.n
        valid &= (tau >= -1e-12) & (tau <= self.n + 1e-12)
        k = np.clip(np.floor(tau).astype(np.int64), 0, self.n - 1)
        return k, valid

    def _locate2(self, p):
        xs = self.xs
        x, y = p[:, 0], p[:, 1]
        valid = (x >= xs[0] - 1e-12) & (x <= xs[-1] + 1e-12)
        i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
        lam = (x - xs[i]) / (xs[i + 1] - xs[i])
        psibar = (1 - lam) * self.psi[i] + lam * self.psi[i + 1]
        j, valid = self._layer(y, psibar, valid)
        n = self.n
        V = self.mesh.vertices
        b0 = V[i * (n + 1) + j]
        t1 = V[(i + 1) * (n + 1) + j + 1]
        dx = t1 - b0
        cross = dx[:, 0] * (y - b0[:, 1]) - dx[:, 1] * (x - b0[:, 0])
        s = (cross >= 0).astype(np.int64)
        cells = (i * n + j) * 2 + s
        cells[~valid] = -1
        return cells

    def _locate3(self, p):
        xs, ys = self.xs, self.ys
        nyc = ys.size - 1
        valid = (p[:, 0] >= xs[0] - 1e-12) & (p[:, 0] <= xs[-1] + 1e-12) \
            & (p[:, 1] >= ys[0] - 1e-12) & (p[:, 1] <= ys[-1] + 1e-12)
        i = np.clip(np.searchsorted(xs, p[:, 0], side="right") - 1, 0, xs.size - 2)
        j = np.clip(np.searchsorted(ys, p[:, 1], side="right") - 1, 0, ys.size - 2)
        lam = np.clip((p[:, 0] - xs[i]) / (xs[i + 1] - xs[i]), 0, 1)
        mu = np.clip((p[:, 1] - ys[j]) / (ys[j + 1] - ys[j]), 0, 1)
        tri = (lam < mu).astype(np.int64)
        P = self.psi
        p00, p10, p01, p11 = P[i, j], P[i + 1, j], P[i, j + 1], P[i + 1, j + 1]
        psibar = np.where(tri == 0, (1 - lam) * p00 + (lam - mu) * p10 + mu * p11,
                          (1 - mu) * p00 + lam * p11 + (mu - lam) * p01)
        k, valid = self._layer(p[:, 2], psibar, valid)
        base = (((i * nyc + j) * 2 + tri) * self.n + k) * 3
        cand = base[:, None] + np.arange(3)[None, :]
        B = self.mesh.bary_matrix[cand]
        xh = np.column_stack([np.ones(p.shape[0]), p])
        lam4 = np.einsum("mkij,mj->mki", B, xh)
        best = np.argmax(lam4.min(axis=2), axis=1)
        cells = base + best
        cells[~valid] = -1
        return cells


def _lateral_grid(lo, hi, h, knots):
    n = max(1, int(math.ceil((hi - lo) / h)))
    g = np.linspace(lo, hi, n + 1)
    inner = knots[(knots > lo + 1e-12) & (knots < hi - 1e-12)]
    g = np.unique(np.concatenate([g, inner]))
    # drop near-duplicates created by knot insertion
    keep = np.concatenate([[True], np.diff(g) > 1e-9 * (hi - lo)])
    keep[-1] = True
    g = g[keep]
    if g.size > 2 and g[-1] - g[-2] <= 1e-9 * (hi - lo):
        g = np.delete(g, -2)
    return g


def _aligned_grid(lo, hi, h, knots):
    """Uniform grid on [lo, hi] containing every knot inside; searched over the count."""
    inner = knots[(knots > lo + 1e-12) & (knots < hi - 1e-12)]
    n0 = max(1, int(math.ceil((hi - lo) / h)))
    for n in range(n0, 64 * n0 + 64):
        step = (hi - lo) / n
        pos = (inner - lo) / step
        if np.all(np.abs(pos - np.round(pos)) < 1e-9):
            return np.linspace(lo, hi, n + 1)
    raise GeometryError("cannot align a uniform lateral grid with the profile knots")


def graph_mesh(domain, h, half_width=None, top=None, trusted_margin=None):
    """Structured boundary-fitted mesh of ``{|x'|_inf < L, psi(x') < x_d < H}``.

    Parameters
    ----------
    domain : GraphDomain
    h : float
        Target lateral and vertical spacing.
    half_width, top : float, optional
        Box half-width ``L`` (default ``R_trunc``) and top height ``H``
        (default ``max(R_trunc, max psi + R_trunc / 2)``).
    trusted_margin : float, optional
        Distance kept from artificial faces in inequality checks
        (default ``R_trunc / 4``).
    """
    R = domain.truncation_radius
    L = R if half_width is None else float(half_width)
    d = domain.dim
    if d == 2:
        xs = _lateral_grid(-L, L, h, domain.knots)
        psi = domain.psi(xs)
        H = max(R, float(psi.max()) + R / 2.0) if top is None else float(top)
        if np.any(psi >= H):
            raise GeometryError("mesh top must lie above the profile")
        n = max(1, int(math.ceil((H - psi.min()) / h)))
        frac = np.arange(n + 1) / n
        Y = psi[:, None] + frac[None, :] * (H - psi[:, None])
        X = np.repeat(xs[:, None], n + 1, axis=1)
        verts = np.column_stack([X.ravel(), Y.ravel()])
        nx = xs.size - 1
        I, J = np.meshgrid(np.arange(nx), np.arange(n), indexing="ij")
        I, J = I.ravel(), J.ravel()
        b0 = I * (n + 1) + J
        b1 = (I + 1) * (n + 1) + J
        t0 = b0 + 1
        t1 = b1 + 1
        tris = np.empty((nx * n * 2, 3), dtype=np.int64)
        tris[0::2] = np.column_stack([b0, b1, t1])
        tris[1::2] = np.column_stack([b0, t1, t0])
        ii = np.arange(nx)
        jj = np.arange(n)
        bottom = np.column_stack([ii * (n + 1), (ii + 1) * (n + 1)])
        topf = np.column_stack([ii * (n + 1) + n, (ii + 1) * (n + 1) + n])
        left = np.column_stack([jj, jj + 1])
        right = np.column_stack([nx * (n + 1) + jj, nx * (n + 1) + jj + 1])
        facets = np.vstack([bottom, topf, left, right])
        tags = np.concatenate([np.full(nx, GRAPH), np.full(2 * n + nx, ARTIFICIAL)])
        margin = R / 4.0 if trusted_margin is None else trusted_margin
        mesh = Mesh(verts, tris, facets, tags, domain=domain,
                    trusted=(L - margin, H - margin))
        mesh._locator = _GraphLocator(mesh, xs, None, psi, H, n)
        mesh.lateral = (xs,)
        mesh.top = H
        mesh.layers = n
        return mesh

    gx, gy = domain.knots
    xs = _aligned_grid(-L, L, h, gx)
    ys = _aligned_grid(-L, L, h, gy)
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    psi = domain.psi(np.column_stack([XX.ravel(), YY.ravel()])).reshape(XX.shape)
    H = max(R, float(psi.max()) + R / 2.0) if top is None else float(top)
    if np.any(psi >= H):
        raise GeometryError("mesh top must lie above the profile")
    n = max(1, int(math.ceil((H - psi.min()) / h)))
    nxc, nyc = xs.size - 1, ys.size - 1
    frac = np.arange(n + 1) / n
    Z = psi[:, :, None] + frac[None, None, :] * (H - psi[:, :, None])
    verts = np.column_stack([
        np.repeat(XX.ravel(), n + 1), np.repeat(YY.ravel(), n + 1), Z.reshape(-1)])

    def col(i, j):
        return i * (ys.size) + j

    I, J = np.meshgrid(np.arange(nxc), np.arange(nyc), indexing="ij")
    I, J = I.ravel(), J.ravel()
    c00, c10, c01, c11 = col(I, J), col(I + 1, J), col(I, J + 1), col(I + 1, J + 1)
    # sorted column triples of the two x'-triangles of each cell
    tri_cols = np.stack([np.column_stack([c00, c10, c11]), np.column_stack([c00, c01, c11])],
                        axis=1)  # (cells, 2, 3)
    K = np.arange(n)
    cols = tri_cols[:, :, None, :]  # (cells, 2, 1, 3)
    b = cols * (n + 1) + K[None, None, :, None]
    t = b + 1
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    t0, t1, t2 = t[..., 0], t[..., 1], t[..., 2]
    tets = np.stack([
        np.stack([b0, b1, b2, t2], axis=-1),
        np.stack([b0, b1, t1, t2], axis=-1),
        np.stack([b0, t0, t1, t2], axis=-1),
    ], axis=-2)  # (cells, 2, n, 3, 4)
    tets = tets.reshape(-1, 4)
    V = verts[tets]
    det = np.einsum("ij,ij->i", np.cross(V[:, 1] - V[:, 0], V[:, 2] - V[:, 0]), V[:, 3] - V[:, 0])
    flip = det < 0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()

    tc = tri_cols.reshape(-1, 3)
    bottom = tc * (n + 1)
    topf = tc * (n + 1) + n
    side = []
    for line in (
        [col(0, j) for j in range(ys.size)],
        [col(nxc, j) for j in range(ys.size)],
        [col(i, 0) for i in range(xs.size)],
        [col(i, nyc) for i in range(xs.size)],
    ):
        line = np.asarray(line)
        ca, cb = line[:-1], line[1:]  # ca < cb along each side
        ba = ca[:, None] * (n + 1) + K[None, :]
        bb = cb[:, None] * (n + 1) + K[None, :]
        side.append(np.column_stack([ba.ravel(), bb.ravel(), (bb + 1).ravel()]))
        side.append(np.column_stack([ba.ravel(), (bb + 1).ravel(), (ba + 1).ravel()]))
    side = np.vstack(side)
    facets = np.vstack([bottom, topf, side])
    tags = np.concatenate([np.full(bottom.shape[0], GRAPH),
                           np.full(topf.shape[0] + side.shape[0], ARTIFICIAL)])
    margin = R / 4.0 if trusted_margin is None else trusted_margin
    mesh = Mesh(verts, tets, facets, tags, domain=domain, trusted=(L - margin, H - margin))
    mesh._locator = _GraphLocator(mesh, xs, ys, psi, H, n)
    mesh.lateral = (xs, ys)
    mesh.top = H
    mesh.layers = n
    return mesh


def polygon_mesh(polygon, h):
    """Delaunay mesh of a simple polygon with boundary spacing ``<= h``.

    Interior points come from a triangular lattice kept away from the
    boundary; the boundary edges are verified to be mesh edges.
    """
    bpts = []
    for e, (a, b) in enumerate(polygon.edges):
        n = max(1, int(math.ceil(polygon.edge_lengths[e] / h)))
        s = np.arange(n) / n
        bpts.append(a + s[:, None] * (b - a))
    bpts = np.vstack(bpts)
    lo, hi = polygon.bounding_box()
    dy = h * math.sqrt(3) / 2
    rows = np.arange(lo[1], hi[1] + dy, dy)
    lattice = []
    for r, y in enumerate(rows):
        off = 0.5 * h if r % 2 else 0.0
        xs = np.arange(lo[0] + off, hi[0] + h, h)
        lattice.append(np.column_stack([xs, np.full(xs.size, y)]))
    lattice = np.vstack(lattice)
    inside = polygon.contains(lattice)
    lattice = lattice[inside]
    lattice = lattice[polygon.distance_to_boundary(lattice) > 0.6 * h]
    pts = np.vstack([bpts, lattice])
    tri = Delaunay(pts)
    simp = tri.simplices
    cent = pts[simp].mean(axis=1)
    keep = polygon.contains(cent)
    simp = simp[keep]
    V = pts[simp]
    area = 0.5 * ((V[:, 1, 0] - V[:, 0, 0]) * (V[:, 2, 1] - V[:, 0, 1])
                  - (V[:, 1, 1] - V[:, 0, 1]) * (V[:, 2, 0] - V[:, 0, 0]))
    flip = area < 0
    simp[flip, 1], simp[flip, 2] = simp[flip, 2].copy(), simp[flip, 1].copy()
    simp = simp[np.abs(area) > 1e-14 * h * h]
    faces = np.sort(np.concatenate([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [0, 2]]]), axis=1)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    facets = uniq[counts == 1]
    nb = bpts.shape[0]
    if np.any(facets >= nb):
        raise MeshError("Delaunay triangulation did not recover the polygon boundary")
    if facets.shape[0] != nb:
        raise MeshError(f"boundary has {facets.shape[0]} facets, expected {nb}")
    mesh = Mesh(pts, simp, facets, np.full(facets.shape[0], GRAPH), domain=polygon)
    return mesh


def save_mesh(mesh, path):
    """Write the plain-text mesh format (vertices, simplices, tagged facets)."""
    with open(path, "w") as fh:
        fh.write("# nta-verify mesh\n")
        fh.write(f"dimension {mesh.dim}\n")
        fh.write(f"vertices {mesh.nv}\n")
        for v in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in v) + "\n")
        fh.write(f"simplices {mesh.ns}\n")
        for s in mesh.simplices:
            fh.write(" ".join(str(int(c)) for c in s) + "\n")
        fh.write(f"facets {mesh.facets.shape[0]}\n")
        for f, t in zip(mesh.facets, mesh.facet_tags):
            fh.write(" ".join(str(int(c)) for c in f) + f" {TAG_NAMES[int(t)]}\n")


def load_mesh(path):
    """Read a mesh written by :func:`save_mesh`."""
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    it = iter(lines)
    header = {}
    key, val = next(it).split()
    if key != "dimension":
        raise MeshError("mesh file must start with 'dimension'")
    d = int(val)
    key, n = next(it).split()
    verts = np.array([[float(c) for c in next(it).split()] for _ in range(int(n))])
    key, n = next(it).split()
    simp = np.array([[int(c) for c in next(it).split()] for _ in range(int(n))])
    key, n = next(it).split()
    facets, tags = [], []
    inv = {v: k for k, v in TAG_NAMES.items()}
    for _ in range(int(n)):
        parts = next(it).split()
        facets.append([int(c) for c in parts[:d]])
        tags.append(inv[parts[d]])
    del header
    return Mesh(verts, simp, np.array(facets).reshape(-1, d), np.array(tags))
