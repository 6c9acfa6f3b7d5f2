"""Pruning-network tests: featurization, scoring, serialization, search hook.

The forward pass is pure numpy, so scores are checked for exact determinism;
permutation invariance gets a small floating tolerance because summation
order changes under relabeling.
"""

import math

import numpy as np
import pytest

from isacbeam.bnb import solve_bnb
from isacbeam.gnn import (
    GnnPolicy,
    GnnWeights,
    LayerWeights,
    N_EDGE_FEATURES,
    N_USER_FEATURES,
    NodeGraph,
    decide,
    extract_features,
    graph_from_doc,
    graph_to_doc,
    load_weights,
    policy_score,
    save_weights,
    zero_weights,
)
from isacbeam.model import ProblemInstance, gen_scenario1


def make_instance(channels, P_T=1.0, rho=0.1):
    channels = np.asarray(channels, dtype=complex)
    K, Nt = channels.shape
    return ProblemInstance(K=K, Nt=Nt, Nr=16, L=16, channels=channels,
                           P_T=P_T, rho=rho)


def random_graph(rng, nt=3, k=2):
    return NodeGraph(ant=rng.normal(size=(nt, 1)),
                     user=rng.normal(size=(k, N_USER_FEATURES)),
                     edge=rng.normal(size=(nt, k, N_EDGE_FEATURES)))


def random_weights(rng, H=8, D=2):
    layers = [LayerWeights(0.3 * rng.normal(size=(H, H)),
                           0.3 * rng.normal(size=(H, H)),
                           0.3 * rng.normal(size=(H, N_EDGE_FEATURES)))
              for _ in range(D)]
    return GnnWeights(P_ant=rng.normal(size=(H, 1)),
                      P_user=rng.normal(size=(H, N_USER_FEATURES)),
                      layers=layers,
                      beta=rng.normal(size=H),
                      feature_shift=rng.normal(size=N_USER_FEATURES),
                      feature_scale=np.abs(rng.normal(size=N_USER_FEATURES)) + 0.5)


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

def test_zero_weights_score_exactly_half():
    rng = np.random.default_rng(0)
    g = random_graph(rng)
    assert policy_score(g, zero_weights(H=8, D=2)) == 0.5
    assert policy_score(g, zero_weights()) == 0.5  # defaults H=64, D=3


def test_readout_saturates_with_scaled_beta():
    nt, k, H = 3, 2, 4
    g = NodeGraph(ant=np.zeros((nt, 1)),
                  user=np.zeros((k, N_USER_FEATURES)),
                  edge=np.ones((nt, k, N_EDGE_FEATURES)))
    base = dict(P_ant=np.zeros((H, 1)),
                P_user=np.zeros((H, N_USER_FEATURES)),
                layers=[LayerWeights(np.zeros((H, H)), np.zeros((H, H)),
                                     np.ones((H, N_EDGE_FEATURES)))],
                feature_shift=np.zeros(N_USER_FEATURES),
                feature_scale=np.ones(N_USER_FEATURES))
    # every vertex state is strictly positive after one round, so scaling the
    # readout saturates the sigmoid in either direction
    up = GnnWeights(beta=50.0 * np.ones(H), **base)
    down = GnnWeights(beta=-50.0 * np.ones(H), **base)
    assert policy_score(g, up) > 1.0 - 1e-12
    assert policy_score(g, down) < 1e-12
    assert decide(policy_score(g, up))
    assert not decide(policy_score(g, down))


def test_scores_are_deterministic():
    rng = np.random.default_rng(1)
    g = random_graph(rng, nt=4, k=3)
    w = random_weights(rng)
    s1 = policy_score(g, w)
    s2 = policy_score(g, w)
    assert s1 == s2
    assert 0.0 <= s1 <= 1.0


def test_score_invariant_under_vertex_relabeling():
    rng = np.random.default_rng(2)
    g = random_graph(rng, nt=4, k=3)
    w = random_weights(rng)
    s = policy_score(g, w)
    perm_u = np.array([2, 0, 1])
    gu = NodeGraph(ant=g.ant, user=g.user[perm_u], edge=g.edge[:, perm_u, :])
    assert math.isclose(policy_score(gu, w), s, rel_tol=1e-12)
    perm_a = np.array([3, 1, 0, 2])
    ga = NodeGraph(ant=g.ant[perm_a], user=g.user, edge=g.edge[perm_a, :, :])
    assert math.isclose(policy_score(ga, w), s, rel_tol=1e-12)


def test_decide_threshold():
    assert decide(0.5)
    assert decide(0.7)
    assert not decide(0.5 - 1e-12)


# ---------------------------------------------------------------------------
# featurization
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def root_case():
    inst = gen_scenario1(K=2, Nt=3, P_T=1.0, rho=0.5, seed=3)
    res = solve_bnb(inst, eps=10.0, keep_nodes=True)  # stops at the root
    assert res.iterations == 0 and len(res.nodes) == 1
    return inst, res


def test_root_node_features(root_case):
    inst, res = root_case
    root = res.nodes[0]
    eps = 10.0
    g = extract_features(root, res.best, inst, eps)
    assert g.Nt == inst.Nt and g.K == inst.K and g.M == inst.Nt + inst.K
    # box edges: lo = 0, hi = P_T * ||h_k||^2 / sigma^2; depth 1
    assert np.all(g.user[:, 0] == 0.0)
    caps = [inst.P_T * inst.channel_gain(k) / inst.sigmaC2
            for k in range(inst.K)]
    assert np.allclose(g.user[:, 1], caps, rtol=1e-12)
    assert np.all(g.user[:, 7] == 1.0)
    # the indicator is boolean, and at the root the repair IS the incumbent
    assert set(np.unique(g.user[:, 6])) <= {0.0, 1.0}
    assert np.all(g.user[:, 6] == 1.0)
    # bound features: global U and L, own relaxation value, own repair value
    assert np.all(g.user[:, 4] == res.best.value)
    assert np.all(g.user[:, 5] == root.lower_bound)
    assert np.all(g.user[:, 10] == root.lower_bound)
    assert np.all(g.user[:, 11] == root.repaired.value)
    # per-user SINR features
    assert np.allclose(g.user[:, 2], root.repaired.Gamma_hat, rtol=1e-12)
    assert np.allclose(g.user[:, 3], root.relaxation.Gamma, rtol=1e-12)
    assert np.allclose(g.user[:, 12], res.best.Gamma_hat, rtol=1e-12)
    # antenna features: eigenvalues of R_X, descending, summing to the trace
    R = root.relaxation.R_X
    assert abs(g.ant.sum() - np.trace(R).real) <= 1e-9 * (1 + abs(np.trace(R)))
    assert np.all(np.diff(g.ant[:, 0]) <= 1e-12)
    # edge features: channel entry parts and eigenvalues of each W_k
    for k in range(inst.K):
        h = inst.channels[k]
        assert np.allclose(g.edge[:, k, 0], h.real, rtol=1e-12)
        assert np.allclose(g.edge[:, k, 1], h.imag, rtol=1e-12)
        assert np.allclose(g.edge[:, k, 2], np.abs(h), rtol=1e-12)
        Wk = root.relaxation.W[k]
        assert abs(g.edge[:, k, 3].sum() - np.trace(Wk).real) <= 1e-9
        # beam power and interference features match the matrices
        sig = float(np.real(h.conj() @ Wk @ h))
        interf = float(np.real(h.conj() @ (R - Wk) @ h))
        assert math.isclose(g.user[k, 8], sig, rel_tol=1e-12)
        assert math.isclose(g.user[k, 9], interf, rel_tol=1e-12)


def test_feature_override_of_global_bounds(root_case):
    inst, res = root_case
    root = res.nodes[0]
    g = extract_features(root, res.best, inst, 1e-3,
                         upper_bound=123.0, lower_bound=-7.0)
    assert np.all(g.user[:, 4] == 123.0)
    assert np.all(g.user[:, 5] == -7.0)
    assert np.all(g.user[:, 10] == root.lower_bound)  # own bound unchanged


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def test_node_graph_validates_shapes_and_finiteness():
    with pytest.raises(ValueError):
        NodeGraph(ant=np.zeros((3, 1)), user=np.zeros((2, 5)),
                  edge=np.zeros((3, 2, 4)))
    with pytest.raises(ValueError):
        NodeGraph(ant=np.zeros((3, 1)), user=np.zeros((2, 13)),
                  edge=np.zeros((2, 2, 4)))
    bad = np.zeros((2, 13))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        NodeGraph(ant=np.zeros((3, 1)), user=bad, edge=np.zeros((3, 2, 4)))


def test_weights_validate_shapes_and_scale():
    rng = np.random.default_rng(4)
    w = random_weights(rng, H=4, D=1)
    with pytest.raises(ValueError):
        GnnWeights(P_ant=w.P_ant, P_user=w.P_user,
                   layers=[LayerWeights(np.zeros((4, 4)), np.zeros((4, 4)),
                                        np.zeros((4, 3)))],  # bad Z3 width
                   beta=w.beta, feature_shift=w.feature_shift,
                   feature_scale=w.feature_scale)
    with pytest.raises(ValueError):
        GnnWeights(P_ant=w.P_ant, P_user=w.P_user, layers=w.layers,
                   beta=w.beta, feature_shift=w.feature_shift,
                   feature_scale=np.zeros(N_USER_FEATURES))  # degenerate scale
    with pytest.raises(ValueError):
        GnnWeights(P_ant=w.P_ant, P_user=w.P_user, layers=[],
                   beta=w.beta, feature_shift=w.feature_shift,
                   feature_scale=w.feature_scale)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_weight_file_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    w = random_weights(rng, H=6, D=3)
    path = tmp_path / "weights.json"
    save_weights(w, path)
    w2 = load_weights(path)
    assert w2.H == w.H and w2.D == w.D
    assert np.array_equal(w2.P_ant, w.P_ant)
    assert np.array_equal(w2.P_user, w.P_user)
    assert np.array_equal(w2.beta, w.beta)
    assert np.array_equal(w2.feature_shift, w.feature_shift)
    assert np.array_equal(w2.feature_scale, w.feature_scale)
    for a, b in zip(w2.layers, w.layers):
        assert np.array_equal(a.Z1, b.Z1)
        assert np.array_equal(a.Z2, b.Z2)
        assert np.array_equal(a.Z3, b.Z3)
    g = random_graph(rng, nt=5, k=3)
    assert policy_score(g, w2) == policy_score(g, w)


def test_weight_file_rejects_dim_mismatch(tmp_path):
    import json
    rng = np.random.default_rng(6)
    w = random_weights(rng, H=4, D=2)
    path = tmp_path / "weights.json"
    save_weights(w, path)
    doc = json.loads(path.read_text())
    doc["H"] = 5
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_weights(path)


def test_graph_doc_round_trip():
    rng = np.random.default_rng(7)
    g = random_graph(rng, nt=4, k=2)
    g2 = graph_from_doc(graph_to_doc(g))
    assert np.array_equal(g2.ant, g.ant)
    assert np.array_equal(g2.user, g.user)
    assert np.array_equal(g2.edge, g.edge)


# ---------------------------------------------------------------------------
# search-loop integration
# ---------------------------------------------------------------------------

def test_untrained_policy_reproduces_exact_search():
    inst = gen_scenario1(K=2, Nt=3, P_T=1.0, rho=0.5, seed=3)
    exact = solve_bnb(inst, eps=0.5)
    gnn = solve_bnb(inst, eps=0.5, policy=GnnPolicy(zero_weights(H=8, D=2)))
    assert gnn.policy_pruned == 0
    assert gnn.gap_certified
    assert gnn.upper_bound == exact.upper_bound
    assert gnn.lower_bound == exact.lower_bound
    assert len(gnn.trace.rows) == len(exact.trace.rows)


def test_always_prune_policy_flags_gap():
    inst = gen_scenario1(K=2, Nt=3, P_T=1.0, rho=0.5, seed=3)
    H = 4
    w = GnnWeights(P_ant=np.zeros((H, 1)),
                   P_user=np.zeros((H, N_USER_FEATURES)),
                   layers=[LayerWeights(np.zeros((H, H)), np.zeros((H, H)),
                                        np.ones((H, N_EDGE_FEATURES)))],
                   beta=-50.0 * np.ones(H),
                   feature_shift=np.zeros(N_USER_FEATURES),
                   feature_scale=np.ones(N_USER_FEATURES))
    res = solve_bnb(inst, eps=1e-3, policy=GnnPolicy(w))
    assert res.policy_pruned >= 1
    assert not res.gap_certified
    assert res.status == "optimal"
    assert res.iterations == 0  # even the root was discarded
    assert [r.action for r in res.trace.rows] == ["prune", "terminate"]
    assert math.isfinite(res.upper_bound)
