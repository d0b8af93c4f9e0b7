"""Experiment configuration: INI files with ``[section]`` headers and ``key = value`` lines.

Sections and keys (all optional)::

    [domain]        name = flat|sawtooth|random|profile, profile = <path>, dim, lipschitz,
                    truncation_radius, h
    [coefficients]  family = identity|anisotropic|oscillatory, m, strength, nu, seed
    [cone]          aperture, height
    [budgets]       cacciopoli, hardy_tol, reverse_holder, spread, sobolev,
                    remainder, local_part, extrapolation, sweep, polygon, polygon_tol
    [sweep]         p0, p1, p_grid, p_extrapolate, p_grid_3d, gamma, alpha, beta, levels,
                    positions, family_size, window, samples
    [run]           seed, jobs, out
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

from .geometry.graph import GraphDomain, default_aperture, load_profile

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "parse_config_string"]


class ConfigError(ValueError):
    """Malformed file or parameters outside their admissible ranges."""


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text):
    return [int(t) for t in text.replace(",", " ").split()]


@dataclass
class DomainConfig:
    name: str = "sawtooth"
    profile: str | None = None
    dim: int = 2
    lipschitz: float = 0.5
    truncation_radius: float = 1.0
    h: float = 1.0 / 16.0


@dataclass
class CoefficientConfig:
    family: str = "identity"
    m: int = 1
    strength: float = 0.3
    nu: float = 0.0
    seed: int = 7


@dataclass
class ConeConfig:
    aperture: float | None = None
    height: float | None = None


@dataclass
class BudgetConfig:
    cacciopoli: float = 8.0
    hardy_tol: float = 0.05
    reverse_holder: float = 4.0
    spread: float = 2.0
    sobolev: float = 1.5
    remainder: float = 4.0
    local_part: float = 4.0
    extrapolation: float = 4.0
    sweep: float = 50.0
    polygon: float = 50.0
    polygon_tol: float = 0.1


@dataclass
class SweepConfig:
    p0: float = 2.0
    p1: float = 8.0
    p_grid: list = field(default_factory=lambda: [2.0, 3.0, 4.0, 8.0, 16.0])
    p_extrapolate: list = field(default_factory=lambda: [2.5, 3.0, 4.0, 6.0])
    p_grid_3d: list = field(default_factory=lambda: [2.0, 3.0, 3.9])
    gamma: float = 2.0
    alpha: float | None = None
    beta: float = 1.0 / 64.0
    levels: list = field(default_factory=lambda: [6, 7, 8])
    positions: int = 4
    family_size: int = 10
    window: float = 6.0
    samples: int = 384


@dataclass
class ExperimentConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    coefficients: CoefficientConfig = field(default_factory=CoefficientConfig)
    cone: ConeConfig = field(default_factory=ConeConfig)
    budgets: BudgetConfig = field(default_factory=BudgetConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 0
    jobs: int = 1
    out: str = "runs"

    def build_domain(self):
        d = self.domain
        if d.name == "profile":
            return load_profile(d.profile)
        if d.name == "flat":
            return GraphDomain.flat(d.dim, d.truncation_radius)
        if d.name == "sawtooth":
            return GraphDomain.sawtooth(d.dim, d.truncation_radius, d.lipschitz)
        return GraphDomain.random_piecewise_linear(d.dim, d.truncation_radius, d.lipschitz,
                                                   rng=self.seed)

    @property
    def lipschitz(self):
        return 0.0 if self.domain.name == "flat" else self.domain.lipschitz

    @property
    def aperture(self):
        return default_aperture(self.lipschitz) if self.cone.aperture is None \
            else self.cone.aperture

    @property
    def alpha(self):
        return 4.0 * self.sweep.gamma if self.sweep.alpha is None else self.sweep.alpha

    def to_dict(self):
        return asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_SECTIONS = {
    "domain": (DomainConfig, {"name": str, "profile": str, "dim": int, "lipschitz": float,
                              "truncation_radius": float, "h": float}),
    "coefficients": (CoefficientConfig, {"family": str, "m": int, "strength": float,
                                         "nu": float, "seed": int}),
    "cone": (ConeConfig, {"aperture": float, "height": float}),
    "budgets": (BudgetConfig, {k: float for k in BudgetConfig.__dataclass_fields__}),
    "sweep": (SweepConfig, {"p0": float, "p1": float, "p_grid": _floats, "p_extrapolate": _floats,
                            "p_grid_3d": _floats, "gamma": float, "alpha": float,
                            "beta": float, "levels": _ints, "positions": int,
                            "family_size": int, "window": float, "samples": int}),
}


# keys whose blank value means "use the default"
_OPTIONAL = {"profile", "aperture", "height", "alpha"}


def _validate(cfg):
    errors = []
    d = cfg.domain
    if d.name not in ("flat", "sawtooth", "random", "profile"):
        errors.append(f"domain.name: unknown domain {d.name!r}")
    if d.name == "profile" and not d.profile:
        errors.append("domain.profile: a profile domain needs a file path")
    if d.dim not in (2, 3):
        errors.append(f"domain.dim: must be 2 or 3, got {d.dim}")
    if not d.lipschitz >= 0:
        errors.append("domain.lipschitz: must be nonnegative")
    if not d.truncation_radius > 0:
        errors.append("domain.truncation_radius: must be positive")
    if not 0 < d.h < d.truncation_radius / 10:
        errors.append(f"domain.h: mesh size must lie in (0, R_trunc/10 = "
                      f"{d.truncation_radius / 10:g})")
    if cfg.coefficients.family not in ("identity", "anisotropic", "oscillatory"):
        errors.append(f"coefficients.family: unknown family {cfg.coefficients.family!r}")
    if cfg.coefficients.m < 1:
        errors.append("coefficients.m: must be at least 1")
    M = cfg.lipschitz
    if cfg.cone.aperture is not None and not cfg.cone.aperture > 1 + 2 * M:
        errors.append(f"cone.aperture: aperture must exceed 1+2M = {1 + 2 * M:g}")
    if cfg.cone.height is not None and not 0 < cfg.cone.height < d.truncation_radius / 10:
        errors.append("cone.height: truncation height must lie in (0, R_trunc/10)")
    s = cfg.sweep
    for name in ("p_grid", "p_extrapolate", "p_grid_3d", "levels"):
        g = getattr(s, name)
        if not g:
            errors.append(f"sweep.{name}: empty grid")
        elif any(b <= a for a, b in zip(g, g[1:])):
            errors.append(f"sweep.{name}: grid not increasing")
    if any(p < 1 for p in s.p_grid + s.p_extrapolate + s.p_grid_3d) or s.p0 < 1:
        errors.append("sweep: exponents must be at least 1")
    if any(not s.p0 < p < s.p1 for p in s.p_extrapolate):
        errors.append("sweep.p_extrapolate: exponents must lie strictly between p0 and p1")
    if not s.gamma > 1:
        errors.append("sweep.gamma: must exceed 1")
    if not 0 < s.beta < 1:
        errors.append("sweep.beta: must lie in (0, 1)")
    if s.levels and 2.0 ** -min(s.levels) > s.beta * (1 + 1e-12):
        errors.append(f"sweep.levels: cubes of level {min(s.levels)} exceed beta |Q0|")
    if cfg.sweep.alpha is not None and cfg.sweep.alpha < 4 * s.gamma:
        errors.append(f"sweep.alpha: alpha Q must contain Delta_(2 gamma r); need alpha >= "
                      f"{4 * s.gamma:g}")
    if s.positions < 1 or s.family_size < 1 or s.samples < 16:
        errors.append("sweep: positions and family_size must be positive, samples >= 16")
    b = cfg.budgets
    for k, v in asdict(b).items():
        if not (v > 0 and math.isfinite(v)):
            errors.append(f"budgets.{k}: must be positive and finite")
    if cfg.jobs < 1:
        errors.append("run.jobs: must be at least 1")
    if errors:
        raise ConfigError("; ".join(errors))
    return cfg


def _from_parser(cp, origin):
    cfg = ExperimentConfig()
    errors = []
    for section in cp.sections():
        if section == "run":
            for key, raw in cp.items(section):
                try:
                    if key in ("seed", "jobs"):
                        setattr(cfg, key, int(raw))
                    elif key == "out":
                        cfg.out = raw
                    else:
                        errors.append(f"run.{key}: unknown parameter")
                except ValueError:
                    errors.append(f"run.{key}: cannot parse {raw!r}")
            continue
        if section not in _SECTIONS:
            errors.append(f"[{section}]: unknown section")
            continue
        _, types = _SECTIONS[section]
        target = getattr(cfg, section)
        for key, raw in cp.items(section):
            if key not in types:
                errors.append(f"{section}.{key}: unknown parameter")
                continue
            if not raw.strip() and key in _OPTIONAL:
                setattr(target, key, None)
                continue
            try:
                setattr(target, key, types[key](raw))
            except ValueError:
                errors.append(f"{section}.{key}: cannot parse {raw!r}")
    if errors:
        raise ConfigError(f"{origin}: " + "; ".join(errors))
    return _validate(cfg)


def parse_config_string(text, origin="<string>"):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from None
    return _from_parser(cp, origin)


def parse_config(path):
    """Read and validate a configuration file; all violations are reported together."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config_string(text, str(path))
