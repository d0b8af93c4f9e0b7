"""Numerical checks for nontangential maximal function estimates of elliptic
systems in Lipschitz graph domains."""

__version__ = "0.1.0"
