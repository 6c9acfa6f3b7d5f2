"""Subprocess driver for the optimizer's command-line interface.

The trainer's only coupling to the optimizer is the CLI and its file
formats, exercised here: instance generation, exact and policy-guided
solves (the latter with a feature dump), and weight-file scoring.  The
optimizer binary defaults to ``isacbeam`` on PATH and can be overridden,
e.g. with ``python3 -m isacbeam.cli``.
"""

from __future__ import annotations

import csv
import json
import subprocess
from pathlib import Path

__all__ = [
    "DEFAULT_CORE",
    "CoreError",
    "run_core",
    "generate_instance",
    "solve_exact",
    "solve_policy",
    "score_features",
]

DEFAULT_CORE = ("isacbeam",)


class CoreError(RuntimeError):
    """The optimizer CLI exited with a nonzero status."""

    def __init__(self, args, returncode, stderr):
        super().__init__(
            f"optimizer command {' '.join(map(str, args))} exited "
            f"{returncode}: {stderr.strip()}")
        self.returncode = returncode


def run_core(args, core=DEFAULT_CORE) -> subprocess.CompletedProcess:
    cmd = [*core, *map(str, args)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise CoreError(cmd, proc.returncode, proc.stderr or proc.stdout)
    return proc


def generate_instance(path, *, scenario: int, k: int, nt: int,
                       power_dbm: float, rho: float, seed: int,
                       core=DEFAULT_CORE) -> Path:
    run_core(["generate", "--scenario", scenario, "--k", k, "--nt", nt,
              "--power-dbm", power_dbm, "--rho", rho, "--seed", seed,
              "--out", path], core=core)
    return Path(path)


def _read_solution(prefix) -> dict:
    return json.loads(Path(f"{prefix}.solution.json").read_text())


def solve_exact(instance, out_prefix, *, eps: float,
                core=DEFAULT_CORE) -> dict:
    """Exact search; returns the solution document (Gamma, objective, ...)."""
    run_core(["solve", instance, "--method", "bnb", "--eps", eps,
              "--out", out_prefix], core=core)
    return _read_solution(out_prefix)


def solve_policy(instance, out_prefix, weights, dump_path, *, eps: float,
                 core=DEFAULT_CORE) -> dict:
    """Policy-guided search, dumping features of every scored node."""
    run_core(["solve", instance, "--method", "bnb-gnn", "--weights", weights,
              "--eps", eps, "--dump-features", dump_path,
              "--out", out_prefix], core=core)
    return _read_solution(out_prefix)


def score_features(weights, features_path, out_csv, core=DEFAULT_CORE) -> list[float]:
    """Score a feature JSONL file through the optimizer; returns the scores."""
    run_core(["score", "--weights", weights, "--features", features_path,
              "--out", out_csv], core=core)
    with open(out_csv, newline="") as fh:
        return [float(row["score"]) for row in csv.DictReader(fh)]
