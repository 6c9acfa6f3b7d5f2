"""Labeling rule: box containment of the optimal SINR vector."""

import json

import numpy as np

from isacbeam_trainer.data import (
    TrainingPair,
    label,
    load_dataset,
    pairs_from_dump,
    read_pairs,
    write_pairs,
)


def test_label_contained():
    assert label([0.0, 0.0], [2.0, 2.0], [1.0, 1.0]) == 1


def test_label_outside():
    assert label([0.0, 0.0], [2.0, 2.0], [3.0, 1.0]) == 0


def test_label_root_box_always_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        k = int(rng.integers(1, 5))
        cap = rng.uniform(1.0, 50.0, k)
        gamma_star = rng.uniform(0.0, 1.0, k) * cap
        assert label(np.zeros(k), cap, gamma_star) == 1


def test_label_edges_inclusive():
    assert label([1.0, 0.0], [2.0, 3.0], [1.0, 3.0]) == 1


def test_label_shape_mismatch():
    try:
        label([0.0], [1.0, 2.0], [0.5])
    except ValueError:
        pass
    else:
        assert False, "mismatched shapes must be rejected"


def test_label_monotone_under_bisection():
    """An ancestor's box contains its children's, so labels can only drop."""
    rng = np.random.default_rng(3)
    for _ in range(200):
        k = int(rng.integers(1, 4))
        lo = rng.uniform(0.0, 2.0, k)
        hi = lo + rng.uniform(0.1, 4.0, k)
        gamma_star = rng.uniform(-0.5, 4.5, k)
        j = int(rng.integers(0, k))
        mid = 0.5 * (lo[j] + hi[j])
        lo_child, hi_child = lo.copy(), hi.copy()
        if rng.random() < 0.5:
            hi_child[j] = mid
        else:
            lo_child[j] = mid
        assert label(lo, hi, gamma_star) >= label(lo_child, hi_child, gamma_star)


def _graph(lo, hi):
    k = len(lo)
    user = np.zeros((k, 13))
    user[:, 0] = lo
    user[:, 1] = hi
    return {"ant": [[0.5], [0.5]], "user": user.tolist(),
            "edge": np.zeros((2, k, 4)).tolist()}


def test_pairs_from_dump(tmp_path):
    dump = tmp_path / "d.jsonl"
    recs = [
        {"t": 1, "node_id": 1, "depth": 1, "kept": True, "score": None,
         "graph": _graph([0.0, 0.0], [4.0, 4.0])},
        {"t": 2, "node_id": 2, "depth": 2, "kept": True, "score": None,
         "graph": _graph([0.0, 0.0], [4.0, 1.0])},
    ]
    dump.write_text("".join(json.dumps(r) + "\n" for r in recs))
    pairs = pairs_from_dump(dump, [2.0, 2.0], round_i=3, instance="i7")
    assert [p.y for p in pairs] == [1, 0]
    assert [p.depth for p in pairs] == [1, 2]
    assert [p.node_id for p in pairs] == [1, 2]
    assert all(p.round_i == 3 and p.instance == "i7" for p in pairs)


def test_pairs_round_trip(tmp_path):
    pairs = [TrainingPair(graph=_graph([0.0], [2.0]), y=1, depth=4,
                          round_i=2, instance="a", node_id=9, t=5)]
    path = tmp_path / "pairs.jsonl"
    write_pairs(path, pairs)
    back = read_pairs(path)
    assert len(back) == 1
    assert back[0] == pairs[0]


def test_load_dataset_skips_unlabeled(tmp_path):
    write_pairs(tmp_path / "round01.jsonl",
                [TrainingPair(graph=_graph([0.0], [2.0]), y=0, depth=2,
                              round_i=1, instance="a", node_id=3, t=1)])
    # a feature dump and a vectors file in the same tree must be ignored
    (tmp_path / "dump.jsonl").write_text(json.dumps(
        {"t": 1, "node_id": 1, "depth": 1, "kept": True, "score": 0.5,
         "graph": _graph([0.0], [1.0])}) + "\n")
    (tmp_path / "final.vectors.jsonl").write_text(json.dumps(
        {"graph": _graph([0.0], [1.0]), "expected": 0.5}) + "\n")
    pairs = load_dataset(tmp_path)
    assert len(pairs) == 1
    assert pairs[0].instance == "a"
