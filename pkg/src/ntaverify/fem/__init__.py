"""Boundary-fitted P1 finite elements for complex divergence-form systems."""

from .coefficients import (CoefficientError, CoefficientField, anisotropic, coefficient_family,
                           drift_scaled, identity, oscillatory)
from .datum import (BoundaryDatum, BumpDatum, ConstantDatum, CutoffDatum, TabulatedDatum,
                    bump_profile, cutoff_profile)
from .mesh import ARTIFICIAL, GRAPH, Mesh, MeshError, graph_mesh, load_mesh, polygon_mesh, save_mesh
from .solver import (AnalyticField, DirichletSolver, QuadratureError, Solution, SolverError, SumField,
                     assemble, gradient_field, region_integral, solve_dirichlet)
