"""Complex coefficient tensors ``a_ij^{ab}`` and drifts ``b_j^{ab}`` of divergence-form systems.

Arrays use the layout ``a[n, alpha, beta, i, j]`` and ``b[n, alpha, beta, j]``
for ``n`` evaluation points; the operator is
``(L u)^alpha = -d_i(a_ij^{ab} d_j u^b) + b_j^{ab} d_j u^b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CoefficientError",
    "CoefficientField",
    "CoefficientCheck",
    "anisotropic",
    "coefficient_family",
    "drift_scaled",
    "identity",
    "oscillatory",
]


class CoefficientError(ValueError):
    """Coefficient field violating boundedness, ellipticity or the drift bound."""


@dataclass
class CoefficientCheck:
    name: str
    worst: float
    bound: float
    passed: bool
    samples: int


def _legendre_constant(A):
    """Smallest eigenvalue of the Hermitian part of an ``(m d, m d)`` block matrix."""
    H = 0.5 * (A + A.conj().T)
    return float(np.linalg.eigvalsh(H)[0])


def _flatten(a):
    """``(m, m, d, d)`` -> ``(m d, m d)`` with row index ``(alpha, i)`` and column ``(beta, j)``."""
    m, _, d, _ = a.shape
    return a.transpose(0, 2, 1, 3).reshape(m * d, m * d)


@dataclass
class CoefficientField:
    """Leading tensor and drift as functions of position.

    ``leading(x)`` returns ``(n, m, m, d, d)`` and ``drift(x)`` returns
    ``(n, m, m, d)``; both may ignore ``x`` for constant fields.  ``mu`` is the
    declared ellipticity constant and ``nu`` the declared drift scale.
    """

    d: int
    m: int
    mu: float
    nu: float
    leading: object
    drift: object = None
    name: str = "custom"
    constant: bool = False
    params: dict = field(default_factory=dict)

    def a(self, x):
        x = np.atleast_2d(x)
        out = np.asarray(self.leading(x), dtype=complex)
        if out.ndim == 4:
            out = np.broadcast_to(out, (x.shape[0],) + out.shape)
        return out

    def b(self, x):
        x = np.atleast_2d(x)
        if self.drift is None:
            return np.zeros((x.shape[0], self.m, self.m, self.d), dtype=complex)
        out = np.asarray(self.drift(x), dtype=complex)
        if out.ndim == 3:
            out = np.broadcast_to(out, (x.shape[0],) + out.shape)
        return out

    @property
    def has_drift(self):
        return self.drift is not None and self.nu > 0

    def without_drift(self):
        return CoefficientField(self.d, self.m, self.mu, 0.0, self.leading, None,
                                self.name, self.constant, dict(self.params))

    # ------------------------------------------------------------------ checks
    def check_boundedness(self, points):
        a = self.a(points)
        worst = float(np.max(np.abs(a)))
        bound = 1.0 / self.mu
        return CoefficientCheck("boundedness", worst, bound, worst <= bound * (1 + 1e-12),
                                a.shape[0])

    def check_ellipticity(self, points, rng=None, n_xi=4):
        """Minimum of ``Re(a xi . conj xi) / |xi|^2`` over points and random complex ``xi``."""
        rng = np.random.default_rng(rng)
        a = self.a(points)
        n = a.shape[0]
        A = a.transpose(0, 1, 3, 2, 4).reshape(n, self.m * self.d, self.m * self.d)
        xi = rng.standard_normal((n, n_xi, self.m * self.d)) \
            + 1j * rng.standard_normal((n, n_xi, self.m * self.d))
        quad = np.einsum("nkr,nrs,nks->nk", xi.conj(), A, xi).real
        ratio = quad / np.sum(np.abs(xi) ** 2, axis=2)
        # the sampled minimum is complemented by the exact per-point eigenvalue
        H = 0.5 * (A + A.conj().transpose(0, 2, 1))
        eig = np.linalg.eigvalsh(H)[:, 0]
        worst = float(min(ratio.min(), eig.min()))
        return CoefficientCheck("ellipticity", worst, self.mu,
                                worst >= self.mu * (1 - 1e-12), n * n_xi)

    def check_drift(self, domain, points):
        """``|b_j^{ab}(x)| <= nu delta(x)`` at interior sample points."""
        b = self.b(points)
        if not np.any(b):
            return CoefficientCheck("drift", 0.0, self.nu, True, b.shape[0])
        delta = domain.distance_to_boundary(points)
        ratio = np.max(np.abs(b), axis=(1, 2, 3)) / delta
        worst = float(ratio.max())
        return CoefficientCheck("drift", worst, self.nu, worst <= self.nu * (1 + 1e-12),
                                b.shape[0])

    def validate(self, domain, n=10_000, rng=0):
        """Run all three checks on ``n`` random interior points; raise on failure."""
        rng = np.random.default_rng(rng)
        pts = domain.sample_interior(n, rng)
        checks = [self.check_boundedness(pts), self.check_ellipticity(pts, rng)]
        if self.drift is not None:
            checks.append(self.check_drift(domain, pts))
        bad = [c for c in checks if not c.passed]
        if bad:
            c = bad[0]
            raise CoefficientError(f"{self.name}: {c.name} check failed "
                                   f"(worst {c.worst:.4g} vs bound {c.bound:.4g})")
        return checks


def identity(d, m=1):
    """``a_ij^{ab} = delta_ij delta^{ab}``, no drift (the Laplacian)."""
    a = np.einsum("ab,ij->abij", np.eye(m), np.eye(d)).astype(complex)
    return CoefficientField(d, m, 1.0, 0.0, lambda x: a, None, "identity", True)


def _anisotropic_tensor(d, m, strength, rng):
    """Constant complex tensor whose Hermitian part is a fixed SPD matrix."""
    n = m * d
    rng = np.random.default_rng(rng)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.linspace(0.7, 1.3, n)
    H = (Q * eig) @ Q.T
    K = rng.standard_normal((n, n))
    K = strength * 0.5 * (K - K.T) / max(1.0, np.abs(K).max())
    G = rng.standard_normal((n, n))
    G = strength * 0.5 * (G + G.T) / max(1.0, np.abs(G).max())
    A = H + K + 1j * G
    return A.reshape(m, d, m, d).transpose(0, 2, 1, 3)


def anisotropic(d, m=1, strength=0.3, seed=7):
    """Constant complex anisotropic tensor; ``mu`` is the exact Legendre constant
    reduced if needed so that ``max |a| <= 1/mu`` also holds."""
    a = _anisotropic_tensor(d, m, strength, seed)
    mu = _legendre_constant(_flatten(a))
    mu = min(mu, 1.0 / float(np.abs(a).max()))
    return CoefficientField(d, m, mu, 0.0, lambda x: a, None, "anisotropic", True,
                            {"strength": strength, "seed": seed})


def oscillatory(d, m=1, period=0.25, amplitude=0.5, strength=0.3, seed=7):
    """``(1 + amplitude * prod_k sin(2 pi x_k / period)) * A0`` with ``A0`` anisotropic."""
    if not 0 <= amplitude < 1:
        raise CoefficientError("oscillation amplitude must lie in [0, 1)")
    a0 = _anisotropic_tensor(d, m, strength, seed)
    mu0 = _legendre_constant(_flatten(a0))
    amax = float(np.abs(a0).max())

    def leading(x):
        g = 1.0 + amplitude * np.prod(np.sin(2 * np.pi * x / period), axis=1)
        return g[:, None, None, None, None] * a0[None]

    mu = min(mu0 * (1 - amplitude), 1.0 / (amax * (1 + amplitude)))
    return CoefficientField(d, m, mu, 0.0, leading, None, "oscillatory", False,
                            {"period": period, "amplitude": amplitude, "strength": strength,
                             "seed": seed})


def drift_scaled(base, domain, nu, direction=None, coupling=None):
    """Add the drift ``b_j^{ab}(x) = nu * g(x) * e_j * c^{ab}`` to ``base``.

    ``g = (x_d - psi(x')) / (sqrt(2) (M + 1))`` never exceeds the distance to
    the boundary, and ``|e_j c^{ab}| <= 1``, so ``|b| <= nu delta``.
    """
    d, m = base.d, base.m
    e = np.ones(d) / math.sqrt(d) if direction is None else np.asarray(direction, float)
    e = e / np.linalg.norm(e)
    c = np.eye(m, dtype=complex) if coupling is None else np.asarray(coupling, complex)
    if np.abs(c).max() > 1:
        raise CoefficientError("drift coupling entries must not exceed 1 in modulus")
    scale = 1.0 / (math.sqrt(2.0) * (domain.lipschitz + 1.0))
    bc = np.einsum("ab,j->abj", c, e)

    def drift(x):
        gap = np.maximum(domain.vertical_gap(x, check=False), 0.0)
        return (nu * scale * gap)[:, None, None, None] * bc[None]

    return CoefficientField(d, m, base.mu, float(nu), base.leading, drift,
                            base.name + "+drift", False, dict(base.params, nu=nu))


def coefficient_family(name, d, m=1, domain=None, **params):
    """Builtin families by name: ``identity``, ``anisotropic``, ``oscillatory``,
    ``drift`` (identity or anisotropic base plus drift of scale ``nu``)."""
    if name == "identity":
        return identity(d, m)
    if name == "anisotropic":
        return anisotropic(d, m, **params)
    if name == "oscillatory":
        return oscillatory(d, m, **params)
    if name in ("drift", "drift-scaled", "drift_scaled"):
        nu = params.pop("nu", 0.1)
        base_name = params.pop("base", "identity")
        base = coefficient_family(base_name, d, m, **params)
        if domain is None:
            raise CoefficientError("the drift family needs the domain")
        return drift_scaled(base, domain, nu)
    raise CoefficientError(f"unknown coefficient family {name!r}")
