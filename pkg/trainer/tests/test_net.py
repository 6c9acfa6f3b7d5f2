"""Forward-pass semantics and weight-file round trips."""

import json

import numpy as np
import torch

from isacbeam_trainer.net import (
    PruningNet,
    graph_tensors,
    load_net,
    net_to_doc,
    save_net,
    score_graph,
)


def random_graph(rng, nt=4, k=2):
    return {"ant": rng.uniform(0.0, 1.0, (nt, 1)).tolist(),
            "user": rng.normal(size=(k, 13)).tolist(),
            "edge": rng.normal(size=(nt, k, 4)).tolist()}


def numpy_score(doc, graph):
    """Independent replica of the optimizer's published scoring rule."""
    ant = np.asarray(graph["ant"], dtype=float)
    user = np.asarray(graph["user"], dtype=float)
    edge = np.asarray(graph["edge"], dtype=float)
    xu = (user - np.asarray(doc["feature_shift"])) / np.asarray(doc["feature_scale"])
    qa = ant @ np.asarray(doc["P_ant"]).T
    qu = xu @ np.asarray(doc["P_user"]).T
    ea = edge.sum(axis=1)
    eu = edge.sum(axis=0)
    for lay in doc["layers"]:
        sa, su = qa.sum(axis=0), qu.sum(axis=0)
        nqa = qa @ np.asarray(lay["Z1"]).T + su @ np.asarray(lay["Z2"]).T \
            + ea @ np.asarray(lay["Z3"]).T
        nqu = qu @ np.asarray(lay["Z1"]).T + sa @ np.asarray(lay["Z2"]).T \
            + eu @ np.asarray(lay["Z3"]).T
        qa, qu = np.maximum(nqa, 0.0), np.maximum(nqu, 0.0)
    readout = np.concatenate([qa, qu], axis=0) @ np.asarray(doc["beta"])
    return float((1.0 / (1.0 + np.exp(-readout))).mean())


def test_zero_net_scores_half():
    rng = np.random.default_rng(0)
    net = PruningNet(8, 2)
    for _ in range(10):
        assert score_graph(net, random_graph(rng)) == 0.5


def test_forward_matches_published_rule():
    rng = np.random.default_rng(1)
    net = PruningNet(8, 3).init_random(1)
    net.set_standardization(rng.normal(size=13), rng.uniform(0.5, 2.0, 13))
    doc = net_to_doc(net)
    for i in range(20):
        g = random_graph(rng, nt=int(rng.integers(2, 7)),
                         k=int(rng.integers(1, 4)))
        s = score_graph(net, g)
        assert 0.0 < s < 1.0
        assert abs(s - numpy_score(doc, g)) < 1e-12


def test_batched_forward_matches_single():
    rng = np.random.default_rng(2)
    net = PruningNet(8, 2).init_random(2)
    graphs = [random_graph(rng) for _ in range(5)]
    ant, user, edge = (torch.stack(ts) for ts in zip(
        *[graph_tensors(g) for g in graphs]))
    with torch.no_grad():
        batch = net(ant, user, edge).numpy()
    singles = np.array([score_graph(net, g) for g in graphs])
    assert np.allclose(batch, singles, rtol=0, atol=1e-15)


def test_weight_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    net = PruningNet(8, 2).init_random(3)
    net.set_standardization(rng.normal(size=13), rng.uniform(0.5, 2.0, 13))
    path = tmp_path / "w.json"
    save_net(net, path)
    back = load_net(path)
    assert net_to_doc(back) == net_to_doc(net)  # bit-exact via repr floats
    g = random_graph(rng)
    assert score_graph(back, g) == score_graph(net, g)
    doc = json.loads(path.read_text())
    assert doc["D"] == 2 and doc["H"] == 8
    assert len(doc["layers"]) == 2


def test_graph_tensors_validation():
    bad = [
        {"ant": [[0.1, 0.2]], "user": [[0.0] * 13], "edge": [[[0.0] * 4]]},
        {"ant": [[0.1]], "user": [[0.0] * 12], "edge": [[[0.0] * 4]]},
        {"ant": [[0.1]], "user": [[0.0] * 13], "edge": [[[0.0] * 3]]},
    ]
    for doc in bad:
        try:
            graph_tensors(doc)
        except ValueError:
            pass
        else:
            assert False, f"accepted malformed graph {doc}"


def test_standardization_validation():
    net = PruningNet(4, 1)
    try:
        net.set_standardization(np.zeros(13), np.zeros(13))
    except ValueError:
        pass
    else:
        assert False, "zero scales must be rejected"
