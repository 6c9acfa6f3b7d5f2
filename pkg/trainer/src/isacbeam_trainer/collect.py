"""Dataset-aggregation loop: collect labeled nodes, refit between rounds.

Each round generates fresh problem instances, solves every instance twice
through the optimizer CLI -- once exactly to obtain the optimal SINR
vector, once guided by the current pruning policy with a feature dump --
and labels every dumped node by whether its box contains the optimum.
After each round the classifier is refit on the union of all rounds so
far, and the next round collects under the refit policy, steering the
node distribution toward what the deployed policy will actually see.

Round 1 collects under the all-zero policy, which scores 0.5 everywhere
and therefore preserves every node: its dump is exactly the exact
search's node stream.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from isacbeam_trainer import core as core_cli
from isacbeam_trainer.data import pairs_from_dump, write_pairs
from isacbeam_trainer.fit import FitConfig, export_vectors, fit
from isacbeam_trainer.net import PruningNet, save_net

__all__ = ["CollectConfig", "run_collect"]


@dataclass
class CollectConfig:
    """Data-generation and training settings for the aggregation loop."""

    rounds: int = 5
    instances: int = 20
    scenario: int = 1
    k: int = 3
    nt: int = 6
    power_dbm: float = 0.0
    rho: float = 1.0
    eps: float = 1e-3
    seed: int = 0
    jobs: int = 1
    vectors: int = 100
    train: FitConfig = field(default_factory=FitConfig)
    core: tuple = core_cli.DEFAULT_CORE


def _collect_one(cfg: CollectConfig, dirs: dict, round_i: int, r: int,
                 theta_path: Path):
    """Generate, solve exactly, solve under the policy, label the dump."""
    name = f"round{round_i:02d}_inst{r:02d}"
    inst = dirs["instances"] / f"{name}.json"
    seed = cfg.seed + (round_i - 1) * cfg.instances + (r - 1)
    core_cli.generate_instance(
        inst, scenario=cfg.scenario, k=cfg.k, nt=cfg.nt,
        power_dbm=cfg.power_dbm, rho=cfg.rho, seed=seed, core=cfg.core)
    exact = core_cli.solve_exact(
        inst, dirs["exact"] / name, eps=cfg.eps, core=cfg.core)
    dump = dirs["policy"] / f"{name}.features.jsonl"
    policy = core_cli.solve_policy(
        inst, dirs["policy"] / name, theta_path, dump,
        eps=cfg.eps, core=cfg.core)
    pairs = pairs_from_dump(dump, exact["Gamma"], round_i, name)
    stats = {
        "instance": name,
        "seed": seed,
        "pairs": len(pairs),
        "positives": sum(p.y for p in pairs),
        "iterations_exact": exact["iterations"],
        "iterations_policy": policy["iterations"],
        "objective_exact": exact["objective"],
        "objective_policy": policy["objective"],
    }
    return pairs, stats


def run_collect(out_dir, cfg: CollectConfig = CollectConfig()) -> dict:
    """Run the full loop; returns (and writes) a manifest of what happened.

    Layout under out_dir: instances/, exact/, policy/ (solutions plus
    feature dumps), pairs/roundNN.jsonl (the labeled dataset, one file per
    round), weights/theta_roundNN.json (the policy each round collected
    under), and weights/final.json + final.vectors.jsonl (the result).
    """
    out_dir = Path(out_dir)
    dirs = {n: out_dir / n for n in ("instances", "exact", "policy",
                                     "pairs", "weights")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    theta = dirs["weights"] / "theta_round01.json"
    save_net(PruningNet(cfg.train.hidden, cfg.train.depth), theta)  # all-zero
    dataset = []
    manifest = {"config": {**{k: v for k, v in vars(cfg).items()
                              if k not in ("train", "core")},
                           "train": vars(cfg.train)},
                "rounds": []}
    for i in range(1, cfg.rounds + 1):
        with ThreadPoolExecutor(max_workers=max(cfg.jobs, 1)) as pool:
            results = list(pool.map(
                lambda r: _collect_one(cfg, dirs, i, r, theta),
                range(1, cfg.instances + 1)))
        round_pairs = [p for pairs, _ in results for p in pairs]
        write_pairs(dirs["pairs"] / f"round{i:02d}.jsonl", round_pairs)
        dataset.extend(round_pairs)
        if not dataset:
            raise RuntimeError(
                "no nodes were scored: every instance so far converged at "
                "the root; tighten --eps or enlarge the instances")
        net, history = fit(dataset, cfg.train)
        theta = dirs["weights"] / f"theta_round{i + 1:02d}.json"
        save_net(net, theta)
        manifest["rounds"].append({
            "round": i,
            "pairs": len(round_pairs),
            "dataset": len(dataset),
            "positives": sum(p.y for p in dataset),
            "loss_initial": history[0],
            "loss_final": history[-1],
            "instances": [stats for _, stats in results],
        })
    final = dirs["weights"] / "final.json"
    save_net(net, final)
    n_vec = export_vectors(net, dataset, dirs["weights"] / "final.vectors.jsonl",
                           count=cfg.vectors, seed=cfg.train.seed)
    manifest["final_weights"] = str(final)
    manifest["vectors"] = n_vec
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest
