"""Manufactured solutions: closed-form fields and the matching right-hand sides."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sym

from .datum import BoundaryDatum

__all__ = ["ExactDatum", "Manufactured", "convergence_study", "manufacture",
           "oscillating_bump", "poisson_kernel_field"]


@dataclass
class Manufactured:
    exact: object  # points (n, d) -> (n, m)
    gradient: object  # points -> (n, m, d)
    source: object  # points -> (n, m)
    expressions: tuple


def _lambdify(symbols, expr):
    f = sym.lambdify(symbols, expr, modules="numpy")

    def call(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = f(*x.T)
        return np.broadcast_to(np.asarray(out, dtype=complex), (x.shape[0],))

    return call


def manufacture(components, coeffs):
    """Source term ``L u`` for sympy expressions ``u^alpha(x0, ..., x_{d-1})``.

    The leading tensor must be constant; the drift may vary and is applied
    numerically: ``(L u)^a = -a_ij^{ab} d_i d_j u^b + b_j^{ab}(x) d_j u^b``.
    """
    if not coeffs.constant:
        raise ValueError("manufactured sources need a constant leading tensor")
    d, m = coeffs.d, coeffs.m
    if len(components) != m:
        raise ValueError(f"expected {m} components, got {len(components)}")
    X = sym.symbols(f"x0:{d}", real=True)
    exprs = tuple(sym.sympify(c) for c in components)
    u = [_lambdify(X, e) for e in exprs]
    du = [[_lambdify(X, sym.diff(e, X[j])) for j in range(d)] for e in exprs]
    ddu = [[[_lambdify(X, sym.diff(e, X[i], X[j])) for j in range(d)] for i in range(d)]
           for e in exprs]
    a = coeffs.a(np.zeros((1, d)))[0]

    def exact(x):
        return np.stack([f(x) for f in u], axis=1)

    def gradient(x):
        return np.stack([np.stack([g(x) for g in row], axis=1) for row in du], axis=1)

    def source(x):
        x = np.atleast_2d(x)
        H = np.stack([np.stack([np.stack([h(x) for h in row], axis=1) for row in comp], axis=1)
                      for comp in ddu], axis=1)  # (n, m, d, d)
        out = -np.einsum("abij,nbij->na", a, H)
        if coeffs.drift is not None:
            out = out + np.einsum("nabj,nbj->na", coeffs.b(x), gradient(x))
        return out

    return Manufactured(exact, gradient, source, exprs)


def poisson_kernel_field(d, depth=1.0):
    """Harmonic Poisson kernel with its pole at depth ``depth`` below the origin."""
    X = sym.symbols(f"x0:{d}", real=True)
    y = X[-1] + depth
    r2 = sum(X[i] ** 2 for i in range(d - 1)) + y ** 2
    return y / r2 ** sym.Rational(d, 2)


def oscillating_bump(d, width=1.0):
    """``exp(i x0) * x_{d-1} * exp(-|x|^2 / width^2)``."""
    X = sym.symbols(f"x0:{d}", real=True)
    r2 = sum(v ** 2 for v in X)
    return sym.exp(sym.I * X[0]) * X[-1] * sym.exp(-r2 / width ** 2)


class ExactDatum(BoundaryDatum):
    """Boundary datum given by a closed-form field ``(n, d) -> (n, m)``."""

    def __init__(self, fn, m=1):
        self.fn = fn
        self.m = m

    def __call__(self, x):
        return np.asarray(self.fn(np.atleast_2d(x)), dtype=complex).reshape(-1, self.m)


def convergence_study(domain, coeffs, components, hs):
    """L2 errors of the P1 solution for a manufactured field on ``graph_mesh(domain, h)``.

    Returns ``(errors, orders)`` with ``orders[k] = log(e_k / e_{k+1}) / log(h_k / h_{k+1})``.
    """
    from .mesh import graph_mesh
    from .solver import solve_dirichlet

    man = manufacture(components, coeffs)
    datum = ExactDatum(man.exact, coeffs.m)
    errors = []
    for h in hs:
        mesh = graph_mesh(domain, h)
        sol = solve_dirichlet(mesh, coeffs, datum, "exact", exact=man.exact, source=man.source)
        errors.append(sol.l2_error(man.exact))
    e, h = np.asarray(errors), np.asarray(hs, dtype=float)
    orders = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return errors, orders
