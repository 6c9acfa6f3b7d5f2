"""Labeled training pairs: labeling rule, dump parsing, and JSONL storage.

A training pair is one featurized search node plus its binary label: 1 when
the node's SINR box contains the exact optimizer's optimal SINR vector
(such nodes must be preserved), 0 otherwise (prunable).  The box edges are
the first two per-user features in the node's graph document, so labeling
needs only the feature dump of a policy-guided run and the Gamma vector
from the matching exact run's solution file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "TrainingPair",
    "label",
    "pairs_from_dump",
    "write_pairs",
    "read_pairs",
    "load_dataset",
]


def label(box_lo, box_hi, gamma_star) -> int:
    """1 when lo_k <= Gamma*_k <= hi_k for every user, else 0."""
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    g = np.asarray(gamma_star, dtype=float)
    if not (lo.shape == hi.shape == g.shape):
        raise ValueError("box edges and optimal SINRs must share one shape")
    return int(bool(np.all((lo <= g) & (g <= hi))))


@dataclass
class TrainingPair:
    """One labeled node: featurized graph, label, and provenance."""

    graph: dict
    y: int
    depth: int
    round_i: int
    instance: str
    node_id: int
    t: int

    def to_doc(self) -> dict:
        return {"round": self.round_i, "instance": self.instance, "t": self.t,
                "node_id": self.node_id, "depth": self.depth, "y": self.y,
                "graph": self.graph}

    @classmethod
    def from_doc(cls, doc: dict) -> "TrainingPair":
        return cls(graph=doc["graph"], y=int(doc["y"]), depth=int(doc["depth"]),
                   round_i=int(doc["round"]), instance=doc["instance"],
                   node_id=int(doc["node_id"]), t=int(doc["t"]))


def pairs_from_dump(dump_path, gamma_star, round_i: int,
                    instance: str) -> list[TrainingPair]:
    """Label every node of one feature-dump file against Gamma*."""
    gamma_star = np.asarray(gamma_star, dtype=float)
    pairs = []
    with open(dump_path) as fh:
        for line in fh:
            rec = json.loads(line)
            user = np.asarray(rec["graph"]["user"], dtype=float)
            y = label(user[:, 0], user[:, 1], gamma_star)
            pairs.append(TrainingPair(
                graph=rec["graph"], y=y, depth=int(rec["depth"]),
                round_i=round_i, instance=instance,
                node_id=int(rec["node_id"]), t=int(rec["t"])))
    return pairs


def write_pairs(path, pairs, append: bool = False) -> None:
    mode = "a" if append else "w"
    with open(path, mode) as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_doc()) + "\n")


def read_pairs(path) -> list[TrainingPair]:
    pairs = []
    with open(path) as fh:
        for line in fh:
            pairs.append(TrainingPair.from_doc(json.loads(line)))
    return pairs


def load_dataset(data_dir) -> list[TrainingPair]:
    """All training pairs under a directory, in deterministic file order.

    Scans every .jsonl file recursively and keeps records that carry a
    label; other JSONL files (feature dumps, parity vectors) are skipped.
    """
    pairs = []
    for path in sorted(Path(data_dir).rglob("*.jsonl")):
        with open(path) as fh:
            for line in fh:
                doc = json.loads(line)
                if "y" in doc and "graph" in doc:
                    pairs.append(TrainingPair.from_doc(doc))
    return pairs
