"""Classifier fitting: depth-weighted binary cross-entropy on node labels.

The training criterion averages per-round mean losses over all collected
rounds (dataset aggregation), with each pair's loss weighted (1+q)/d for
preserve labels and 1/d for prune labels, d being the node depth: deep
nodes matter less, and positives are up-weighted because a search tree
contains few boxes that hold the optimum but pruning one of them is the
only unrecoverable mistake.  Optimization is adaptive-moment gradient
descent over minibatches whose loss is an unbiased estimate of the full
criterion.

Fitting always restarts from a fresh seeded random initialization rather
than refining the previous round's parameters: the all-zero policy used
for round-1 collection is a stationary point of the loss (every gradient
path crosses a zero factor), so "retraining" from it would never move.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import torch

from isacbeam_trainer.data import TrainingPair
from isacbeam_trainer.net import DTYPE, PruningNet, score_graph

__all__ = [
    "FitConfig",
    "standardization",
    "sample_coefficients",
    "evaluate_loss",
    "fit",
    "export_vectors",
]

_CLAMP = 1e-12  # keeps log() finite when a score saturates

@dataclass
class FitConfig:
    """Training hyperparameters; the defaults are the reference recipe."""

    hidden: int = 64
    depth: int = 3
    epochs: int = 20
    batch: int = 128
    lr: float = 1e-3
    q: float = 11.0
    seed: int = 0

def standardization(pairs) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature (shift, scale) over every user row of the dataset.

    scale falls back to 1.0 for features that are constant in the data
    (their standardized value is then 0 regardless, and unseen deviations
    at inference stay O(1) instead of exploding).
    """
    rows = np.concatenate(
        [np.asarray(p.graph["user"], dtype=float) for p in pairs], axis=0)
    shift = rows.mean(axis=0)
    scale = rows.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return shift, scale

def sample_coefficients(pairs, q: float) -> np.ndarray:
    """Per-pair loss coefficients: depth/label weight over round-size norm.

    The full-dataset criterion is sum_s coeff_s * loss_s, which equals the
    mean over rounds of each round's weighted mean loss.
    """
    rounds = sorted({p.round_i for p in pairs})
    size = {i: sum(1 for p in pairs if p.round_i == i) for i in rounds}
    coeff = np.empty(len(pairs))
    for s, p in enumerate(pairs):
        d = max(p.depth, 1)
        w = (1.0 + q) / d if p.y == 1 else 1.0 / d
        coeff[s] = w / (len(rounds) * size[p.round_i])
    return coeff

class _ShapeGroups:
    """Dataset tensorized per (Nt, K) shape so batches stay vectorized."""

    def __init__(self, pairs, coeff):
        self.group_of = np.empty(len(pairs), dtype=int)
        self.pos_of = np.empty(len(pairs), dtype=int)
        self.groups = []
        index = {}
        buckets = []
        for s, p in enumerate(pairs):
            ant = np.asarray(p.graph["ant"], dtype=float)
            user = np.asarray(p.graph["user"], dtype=float)
            shape = (ant.shape[0], user.shape[0])
            if shape not in index:
                index[shape] = len(buckets)
                buckets.append([])
            g = index[shape]
            self.group_of[s] = g
            self.pos_of[s] = len(buckets[g])
            buckets[g].append(s)
        for members in buckets:
            ant = torch.tensor(
                np.stack([pairs[s].graph["ant"] for s in members]), dtype=DTYPE)
            user = torch.tensor(
                np.stack([pairs[s].graph["user"] for s in members]), dtype=DTYPE)
            edge = torch.tensor(
                np.stack([pairs[s].graph["edge"] for s in members]), dtype=DTYPE)
            y = torch.tensor([float(pairs[s].y) for s in members], dtype=DTYPE)
            c = torch.tensor([coeff[s] for s in members], dtype=DTYPE)
            self.groups.append((ant, user, edge, y, c))

    def weighted_loss(self, net, sample_idx) -> torch.Tensor:
        """sum over the sampled pairs of coeff_s * bce(score_s, y_s)."""
        total = None
        sample_idx = np.asarray(sample_idx)
        for g, (ant, user, edge, y, c) in enumerate(self.groups):
            mask = self.group_of[sample_idx] == g
            if not np.any(mask):
                continue
            pos = torch.from_numpy(self.pos_of[sample_idx[mask]])
            score = net(ant[pos], user[pos], edge[pos])
            p = score.clamp(_CLAMP, 1.0 - _CLAMP)
            bce = -(y[pos] * torch.log(p) + (1.0 - y[pos]) * torch.log1p(-p))
            part = (c[pos] * bce).sum()
            total = part if total is None else total + part
        assert total is not None
        return total

def evaluate_loss(net: PruningNet, pairs, q: float = 11.0) -> float:
    """Exact training criterion on the whole dataset (no gradients)."""
    coeff = sample_coefficients(pairs, q)
    groups = _ShapeGroups(pairs, coeff)
    with torch.no_grad():
        return float(groups.weighted_loss(net, np.arange(len(pairs))))

def fit(pairs, cfg: FitConfig = FitConfig()) -> tuple[PruningNet, list[float]]:
    """Train a fresh classifier on the aggregated dataset.

    Returns the net and the loss history: the exact criterion before
    training and after every epoch (epochs + 1 entries).
    """
    if not pairs:
        raise ValueError("cannot fit on an empty dataset")
    shift, scale = standardization(pairs)
    net = PruningNet(hidden=cfg.hidden, depth=cfg.depth).init_random(cfg.seed)
    net.set_standardization(shift, scale)
    coeff = sample_coefficients(pairs, cfg.q)
    groups = _ShapeGroups(pairs, coeff)
    n = len(pairs)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    history = [evaluate_loss(net, pairs, cfg.q)]
    for _ in range(cfg.epochs):
        perm = torch.randperm(n, generator=gen).numpy()
        for start in range(0, n, cfg.batch):
            batch = perm[start:start + cfg.batch]
            opt.zero_grad()
            # (n / |batch|) makes the batch loss unbiased for the criterion
            loss = groups.weighted_loss(net, batch) * (n / len(batch))
            loss.backward()
            opt.step()
        history.append(evaluate_loss(net, pairs, cfg.q))
    return net, history

def export_vectors(net: PruningNet, pairs, path, count: int = 100,
                   seed: int = 0) -> int:
    """Write parity test vectors: graphs from the dataset plus their scores.

    Samples without replacement when the dataset is large enough, with
    replacement otherwise; returns the number of vectors written.
    """
    rng = np.random.default_rng(seed)
    n = len(pairs)
    if n >= count:
        idx = rng.choice(n, size=count, replace=False)
    else:
        idx = rng.choice(n, size=count, replace=True)
    with open(path, "w") as fh:
        for s in idx:
            doc = {"graph": pairs[int(s)].graph,
                   "expected": score_graph(net, pairs[int(s)].graph)}
            fh.write(json.dumps(doc) + "\n")
    return len(idx)
