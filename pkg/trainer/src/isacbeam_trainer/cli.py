"""Command-line interface: collect, train, parity."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

import click
import numpy as np

from isacbeam_trainer import core as core_cli
from isacbeam_trainer.collect import CollectConfig, run_collect
from isacbeam_trainer.data import load_dataset
from isacbeam_trainer.fit import FitConfig, export_vectors, fit
from isacbeam_trainer.net import (
    N_EDGE_FEATURES,
    N_USER_FEATURES,
    load_net,
    save_net,
    score_graph,
)

PARITY_TOL = 1e-6


def _core_option(f):
    return click.option(
        "--core", default="isacbeam", show_default=True,
        help="Optimizer command (split on spaces), e.g. "
             "'python3 -m isacbeam.cli'.")(f)


def _fit_options(f):
    for opt in reversed([
        click.option("--hidden", default=64, show_default=True,
                     help="Hidden width of the classifier."),
        click.option("--depth", default=3, show_default=True,
                     help="Message-passing rounds."),
        click.option("--epochs", default=20, show_default=True),
        click.option("--batch", default=128, show_default=True),
        click.option("--lr", default=1e-3, show_default=True),
        click.option("--q", default=11.0, show_default=True,
                     help="Up-weight of preserve labels: (1+q)/depth vs 1/depth."),
        click.option("--train-seed", default=0, show_default=True),
    ]):
        f = opt(f)
    return f


@click.group()
def main():
    """Imitation-learning trainer for the optimizer's node-pruning policy."""


@main.command()
@click.option("--rounds", default=5, show_default=True,
              help="Dataset-aggregation rounds.")
@click.option("--instances", default=20, show_default=True,
              help="Fresh instances per round.")
@click.option("--scenario", default=1, show_default=True, type=click.IntRange(1, 2))
@click.option("--k", default=3, show_default=True)
@click.option("--nt", default=6, show_default=True)
@click.option("--power-dbm", default=0.0, show_default=True)
@click.option("--rho", default=1.0, show_default=True)
@click.option("--eps", default=1e-3, show_default=True,
              help="Optimality gap for both searches.")
@click.option("--seed", default=0, show_default=True,
              help="Base seed; instance r of round i uses seed + (i-1)R + (r-1).")
@click.option("--jobs", default=1, show_default=True,
              help="Concurrent optimizer subprocesses per round.")
@click.option("--vectors", default=100, show_default=True,
              help="Parity test vectors exported with the final weights.")
@_fit_options
@_core_option
@click.option("--out", required=True, type=click.Path(file_okay=False),
              help="Output directory for the collected dataset and weights.")
def collect(rounds, instances, scenario, k, nt, power_dbm, rho, eps, seed,
            jobs, vectors, hidden, depth, epochs, batch, lr, q, train_seed,
            core, out):
    """Run the full data-generation and training loop."""
    cfg = CollectConfig(
        rounds=rounds, instances=instances, scenario=scenario, k=k, nt=nt,
        power_dbm=power_dbm, rho=rho, eps=eps, seed=seed, jobs=jobs,
        vectors=vectors,
        train=FitConfig(hidden=hidden, depth=depth, epochs=epochs,
                        batch=batch, lr=lr, q=q, seed=train_seed),
        core=tuple(core.split()))
    manifest = run_collect(out, cfg)
    for r in manifest["rounds"]:
        click.echo(f"round {r['round']}: {r['pairs']} pairs "
                   f"({r['positives']}/{r['dataset']} positive in aggregate), "
                   f"loss {r['loss_initial']:.4f} -> {r['loss_final']:.4f}")
    click.echo(f"final weights: {manifest['final_weights']}")
    click.echo(f"wrote {Path(out) / 'manifest.json'}")


@main.command()
@click.option("--data", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory holding labeled-pair JSONL files.")
@_fit_options
@click.option("--vectors", default=100, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Weight file to write; parity vectors go to "
                   "<out minus .json>.vectors.jsonl.")
def train(data, hidden, depth, epochs, batch, lr, q, train_seed, vectors, out):
    """Fit the classifier on an existing dataset and export weights."""
    pairs = load_dataset(data)
    if not pairs:
        raise click.ClickException(f"no labeled pairs found under {data}")
    cfg = FitConfig(hidden=hidden, depth=depth, epochs=epochs, batch=batch,
                    lr=lr, q=q, seed=train_seed)
    net, history = fit(pairs, cfg)
    save_net(net, out)
    vec_path = Path(out).with_suffix("").as_posix() + ".vectors.jsonl"
    n_vec = export_vectors(net, pairs, vec_path, count=vectors, seed=cfg.seed)
    rounds = sorted({p.round_i for p in pairs})
    click.echo(f"pairs: {len(pairs)} over rounds {rounds} "
               f"({sum(p.y for p in pairs)} positive)")
    click.echo(f"loss: {history[0]:.6f} -> {history[-1]:.6f} "
               f"over {cfg.epochs} epochs")
    click.echo(f"wrote {out}")
    click.echo(f"wrote {vec_path} ({n_vec} vectors)")


def _random_graphs(count: int, nt: int, k: int, seed: int) -> list[dict]:
    """Synthetic featurized nodes with plausible magnitudes, for parity."""
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        lo = rng.uniform(0.0, 2.0, k)
        hi = lo + rng.uniform(0.0, 3.0, k)
        user = np.column_stack([
            lo, hi, rng.uniform(lo, hi), rng.uniform(lo, hi),
            rng.normal(size=k), rng.normal(size=k),
            rng.integers(0, 2, k).astype(float),
            rng.integers(1, 15, k).astype(float),
            rng.uniform(0.0, 5.0, k), rng.uniform(0.0, 5.0, k),
            rng.normal(size=k), rng.normal(size=k), rng.uniform(0.0, 3.0, k),
        ])
        assert user.shape == (k, N_USER_FEATURES)
        graphs.append({
            "ant": rng.uniform(0.0, 1.0, (nt, 1)).tolist(),
            "user": user.tolist(),
            "edge": rng.normal(size=(nt, k, N_EDGE_FEATURES)).tolist(),
        })
    return graphs


@main.command()
@click.option("--weights", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--vectors", type=click.Path(exists=True, dir_okay=False),
              help="Parity-vector JSONL; omitted: score random graphs instead.")
@click.option("--count", default=100, show_default=True,
              help="Random graphs to generate when --vectors is omitted.")
@click.option("--nt", default=6, show_default=True)
@click.option("--k", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_core_option
def parity(weights, vectors, count, nt, k, seed, core):
    """Check the optimizer reproduces this package's scores bit-for-bit-ish.

    Scores every vector with the local forward pass and through the
    optimizer's score command; exits nonzero if any pair of values
    disagrees by more than 1e-6.
    """
    net = load_net(weights)
    if vectors:
        docs = [json.loads(line) for line in Path(vectors).read_text().splitlines()]
        graphs = [d["graph"] if "graph" in d else d for d in docs]
        expected = [d.get("expected") for d in docs]
        features_path = vectors
        tmp = None
    else:
        graphs = _random_graphs(count, nt, k, seed)
        expected = [None] * len(graphs)
        tmp = tempfile.NamedTemporaryFile(
            "w", suffix=".jsonl", delete=False)
        for g in graphs:
            tmp.write(json.dumps(g) + "\n")
        tmp.close()
        features_path = tmp.name
    try:
        local = [score_graph(net, g) for g in graphs]
        with tempfile.NamedTemporaryFile(suffix=".csv", delete=False) as out_csv:
            pass
        remote = core_cli.score_features(weights, features_path, out_csv.name,
                                         core=tuple(core.split()))
        Path(out_csv.name).unlink()
    finally:
        if tmp is not None:
            Path(tmp.name).unlink()
    if len(local) != len(remote):
        raise click.ClickException(
            f"score count mismatch: {len(local)} local vs {len(remote)}")
    diffs = [abs(a - b) for a, b in zip(local, remote)]
    stored = [abs(a - e) for a, e in zip(local, expected) if e is not None]
    click.echo(f"vectors: {len(local)}")
    click.echo(f"max |local - optimizer|: {max(diffs):.3e}")
    if stored:
        click.echo(f"max |local - stored|: {max(stored):.3e}")
    if max(diffs + stored) > PARITY_TOL:
        raise click.ClickException(f"parity violated beyond {PARITY_TOL}")
    click.echo("parity ok")


if __name__ == "__main__":
    main()
