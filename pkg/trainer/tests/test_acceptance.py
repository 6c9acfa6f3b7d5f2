"""Acceptance harness: the full training pipeline at its reference settings.

This runs the real dataset-aggregation recipe (5 rounds x 20 instances,
3 users, 6 antennas, scenario-1 channels, eps 1e-3, the default training
hyperparameters) through the optimizer CLI, then grades the trained policy
on 20 fresh instances and proves weight-file parity with the optimizer's
inference path.  The sensing weight is 0.1: a small trace-inverse term
leaves the objective dominated by its nonconvex rate part, so certification
takes hundreds of branch-and-bound nodes per instance and pruning has room
to show.  Expect most of a day on one core; run with -s for one checkmark
line per criterion, and deselect with -k "not acceptance" during
development.
"""

import csv
import json
import subprocess
from pathlib import Path

import pytest
from click.testing import CliRunner

from isacbeam_trainer.cli import main
from isacbeam_trainer.core import generate_instance, score_features
from isacbeam_trainer.net import load_net, score_graph

EPS = 1e-3
RHO = 0.1
TEST_SEEDS = range(1000, 1020)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipeline") / "run"
    res = CliRunner().invoke(main, [
        "collect", "--rounds", "5", "--instances", "20", "--k", "3",
        "--nt", "6", "--scenario", "1", "--power-dbm", "0", "--rho", str(RHO),
        "--eps", str(EPS), "--seed", "0", "--out", str(out)])
    assert res.exit_code == 0, res.output
    return out


def test_trained_policy_quality(pipeline, tmp_path):
    weights = pipeline / "weights" / "final.json"
    inst_dir = tmp_path / "test_instances"
    inst_dir.mkdir()
    for seed in TEST_SEEDS:
        generate_instance(inst_dir / f"test_{seed}.json", scenario=1, k=3,
                          nt=6, power_dbm=0.0, rho=RHO, seed=seed)
    out = tmp_path / "report"
    proc = subprocess.run(
        ["isacbeam", "eval", str(inst_dir), "--weights", str(weights),
         "--eps", str(EPS), "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    summary = json.loads(Path(f"{out}.meta.json").read_text())
    assert summary["instances"] == len(TEST_SEEDS)
    with open(f"{out}.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    worst = max(float(r["ogap_percent"]) for r in rows)
    assert summary["mean_ogap_percent"] <= 0.5, summary
    assert summary["median_node_reduction"] >= 2.0, summary
    print(f"✓ trained policy on 20 fresh instances: mean Ogap "
          f"{summary['mean_ogap_percent']:.4f}% (<= 0.5%, worst "
          f"{worst:.4f}%), median node reduction "
          f"{summary['median_node_reduction']:.2f}x (>= 2x); mean wall-clock "
          f"speedup {summary['mean_speedup']:.2f}x (reported, not asserted)")


def test_cross_component_parity(pipeline, tmp_path):
    weights = pipeline / "weights" / "final.json"
    vectors = pipeline / "weights" / "final.vectors.jsonl"
    docs = [json.loads(line) for line in vectors.read_text().splitlines()]
    assert len(docs) == 100
    net = load_net(weights)
    local = [score_graph(net, d["graph"]) for d in docs]
    remote = score_features(weights, vectors, tmp_path / "scores.csv")
    diffs = [abs(a - b) for a, b in zip(local, remote)]
    stored = [abs(a - d["expected"]) for a, d in zip(local, docs)]
    assert len(remote) == 100
    assert max(diffs) <= 1e-6
    assert max(stored) <= 1e-6
    res = CliRunner().invoke(main, [
        "parity", "--weights", str(weights), "--vectors", str(vectors)])
    assert res.exit_code == 0, res.output
    print(f"✓ optimizer inference reproduces the trained scores on 100 "
          f"vectors (max deviation {max(diffs):.3e} <= 1e-6)")
