"""``nta-verify run <experiment>`` and ``nta-verify validate``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, parse_config
from .experiments import EXPERIMENTS, run_experiment
from .inequalities import _jsonable
from .plotting import emit_plot

__all__ = ["RunManifest", "main", "run"]

log = logging.getLogger("ntaverify")


@dataclass
class RunManifest:
    experiment: str
    config_hash: str
    version: str
    seed: int
    checks: list
    passed: bool
    started: float = 0.0
    finished: float = 0.0
    artifacts: list = field(default_factory=list)

    def to_dict(self):
        """Deterministic content; wall-clock times go to ``run.log`` only."""
        return _jsonable({"experiment": self.experiment, "config_hash": self.config_hash,
                          "version": self.version, "seed": self.seed, "passed": self.passed,
                          "checks": self.checks, "artifacts": sorted(self.artifacts)})


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run(cfg: ExperimentConfig, experiment: str, out=None):
    """Run one experiment and write its artifacts; returns the manifest."""
    out = out or os.path.join(cfg.out, experiment)
    os.makedirs(out, exist_ok=True)
    started = time.time()
    marker = os.path.join(out, "FAILED")
    if os.path.exists(marker):
        os.remove(marker)
    try:
        result = run_experiment(experiment, cfg, np.random.default_rng(cfg.seed))
    except Exception as exc:
        with open(marker, "w") as fh:
            fh.write(f"{experiment}: {type(exc).__name__}: {exc}\n")
        raise
    artifacts = []
    checks = [r.to_dict() for r in result.reports]
    rows = [[c["name"], repr(c["left"]), repr(c["right"]), repr(c["ratio"]), repr(c["budget"]),
             int(c["passed"]), int(c["vacuous"])] for c in checks]
    _write_csv(os.path.join(out, "checks.csv"),
               ["check", "left", "right", "ratio", "budget", "passed", "vacuous"], rows)
    artifacts.append("checks.csv")
    for stem, (header, trows) in sorted(result.tables.items()):
        _write_csv(os.path.join(out, f"{stem}.csv"), header, trows)
        artifacts.append(f"{stem}.csv")
    for stem, blob in sorted(result.blobs.items()):
        _write_json(os.path.join(out, f"{stem}.json"), blob)
        artifacts.append(f"{stem}.json")
    for stem, spec in sorted(result.plots.items()):
        emit_plot(spec["series"], spec["markers"], os.path.join(out, f"{stem}.svg"),
                  spec.get("xlabel", ""), spec.get("ylabel", ""))
        artifacts.append(f"{stem}.svg")
    passed = all(c["passed"] or c["vacuous"] for c in checks)
    manifest = RunManifest(experiment, cfg.digest(), __version__, cfg.seed, checks, passed,
                           started, time.time(), artifacts)
    _write_json(os.path.join(out, "manifest.json"), manifest.to_dict())
    with open(os.path.join(out, "run.log"), "w") as fh:
        fh.write(f"experiment {experiment}\nstarted {time.ctime(manifest.started)}\n"
                 f"finished {time.ctime(manifest.finished)}\n"
                 f"elapsed {manifest.finished - manifest.started:.1f}s\n"
                 f"passed {passed}\n")
    if not passed:
        with open(marker, "w") as fh:
            failing = [c["name"] for c in checks if not (c["passed"] or c["vacuous"])]
            fh.write("failing checks:\n" + "\n".join(failing) + "\n")
    return manifest


def _load(args):
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "jobs", None) is not None:
        cfg.jobs = args.jobs
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(prog="nta-verify")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p_run.add_argument("--config")
    p_run.add_argument("--out")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--jobs", type=int)
    p_val = sub.add_parser("validate", help="check a configuration file")
    p_val.add_argument("--config", required=True)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"configuration ok ({cfg.digest()[:12]})")
        return 0
    manifest = run(cfg, args.experiment, args.out)
    for c in manifest.checks:
        status = "pass" if c["passed"] else ("vacuous" if c["vacuous"] else "FAIL")
        print(f"{status:7s} {c['name']}  ratio={c['ratio']}  budget={c['budget']}")
    print(f"{args.experiment}: {'PASS' if manifest.passed else 'FAIL'}")
    return 0 if manifest.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
