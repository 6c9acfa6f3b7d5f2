"""Learned node-pruning policy: featurization and forward-pass scoring.

A search node becomes a complete bipartite graph between transmit antennas
and users: each antenna vertex carries one eigenvalue of the node's transmit
covariance, each user vertex a 13-entry summary of the node and the global
search state, and each antenna-user edge the channel entry plus one
eigenvalue of that user's beam covariance.  A message-passing network with
shared weights maps the graph to a score in [0, 1]; ``decide`` preserves a
node exactly when its score is at least 0.5.  All-zero weights score 0.5 at
every vertex, so an untrained policy preserves everything and the search
stays exact.

The 13 user features, in order: box edges (lo, hi), repaired SINR, relaxation
SINR, global upper and lower bounds, the indicator that the node's own
repaired value is within eps of the global upper bound, node depth, beam
power tr(Q_k W_k), interference tr(Q_k (R_X - W_k)), the node's own
relaxation value, the node's repaired value, and the incumbent's SINR for
the user.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "N_USER_FEATURES",
    "N_EDGE_FEATURES",
    "NodeGraph",
    "LayerWeights",
    "GnnWeights",
    "GnnPolicy",
    "extract_features",
    "policy_score",
    "decide",
    "zero_weights",
    "save_weights",
    "load_weights",
    "graph_to_doc",
    "graph_from_doc",
]

log = logging.getLogger(__name__)

N_USER_FEATURES = 13
N_EDGE_FEATURES = 4


@dataclass
class NodeGraph:
    """Featurized search node: complete bipartite antennas x users.

    ant has shape (Nt, 1), user (K, 13), edge (Nt, K, 4); the edge array is
    indexed by (antenna, user) and shared by both message directions.
    """

    ant: np.ndarray
    user: np.ndarray
    edge: np.ndarray

    def __post_init__(self):
        self.ant = np.asarray(self.ant, dtype=float)
        self.user = np.asarray(self.user, dtype=float)
        self.edge = np.asarray(self.edge, dtype=float)
        if self.ant.ndim != 2 or self.ant.shape[1] != 1:
            raise ValueError(f"ant features must be (Nt, 1), got {self.ant.shape}")
        nt = self.ant.shape[0]
        if self.user.ndim != 2 or self.user.shape[1] != N_USER_FEATURES:
            raise ValueError(
                f"user features must be (K, {N_USER_FEATURES}), got {self.user.shape}")
        k = self.user.shape[0]
        if self.edge.shape != (nt, k, N_EDGE_FEATURES):
            raise ValueError(
                f"edge features must be ({nt}, {k}, {N_EDGE_FEATURES}), "
                f"got {self.edge.shape}")
        if nt < 1 or k < 1:
            raise ValueError("need at least one antenna and one user")
        for name, arr in (("ant", self.ant), ("user", self.user),
                          ("edge", self.edge)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} features must be finite")

    @property
    def Nt(self) -> int:
        return self.ant.shape[0]

    @property
    def K(self) -> int:
        return self.user.shape[0]

    @property
    def M(self) -> int:
        """Vertex count Nt + K."""
        return self.Nt + self.K


@dataclass
class LayerWeights:
    """One message-passing layer: self, neighbor, and edge maps."""

    Z1: np.ndarray  # (H, H)
    Z2: np.ndarray  # (H, H)
    Z3: np.ndarray  # (H, 4)


@dataclass
class GnnWeights:
    """All trainable parameters plus the fixed user-feature standardization.

    Scoring standardizes the 13 raw user features as (x - shift) / scale
    before the input projection; shift/scale are data statistics recorded at
    training time, not trainable weights.
    """

    P_ant: np.ndarray        # (H, 1) antenna input projection
    P_user: np.ndarray       # (H, 13) user input projection
    layers: list             # D LayerWeights
    beta: np.ndarray         # (H,) readout
    feature_shift: np.ndarray  # (13,)
    feature_scale: np.ndarray  # (13,), strictly positive

    def __post_init__(self):
        self.P_ant = np.asarray(self.P_ant, dtype=float)
        self.P_user = np.asarray(self.P_user, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.feature_shift = np.asarray(self.feature_shift, dtype=float)
        self.feature_scale = np.asarray(self.feature_scale, dtype=float)
        if self.P_ant.ndim != 2 or self.P_ant.shape[1] != 1:
            raise ValueError(f"P_ant must be (H, 1), got {self.P_ant.shape}")
        h = self.P_ant.shape[0]
        if self.P_user.shape != (h, N_USER_FEATURES):
            raise ValueError(
                f"P_user must be ({h}, {N_USER_FEATURES}), got {self.P_user.shape}")
        if not self.layers:
            raise ValueError("need at least one message-passing layer")
        fixed = []
        for i, lay in enumerate(self.layers):
            z1 = np.asarray(lay.Z1, dtype=float)
            z2 = np.asarray(lay.Z2, dtype=float)
            z3 = np.asarray(lay.Z3, dtype=float)
            if z1.shape != (h, h) or z2.shape != (h, h):
                raise ValueError(f"layer {i}: Z1/Z2 must be ({h}, {h})")
            if z3.shape != (h, N_EDGE_FEATURES):
                raise ValueError(
                    f"layer {i}: Z3 must be ({h}, {N_EDGE_FEATURES}), got {z3.shape}")
            fixed.append(LayerWeights(z1, z2, z3))
        self.layers = fixed
        if self.beta.shape != (h,):
            raise ValueError(f"beta must be ({h},), got {self.beta.shape}")
        if self.feature_shift.shape != (N_USER_FEATURES,):
            raise ValueError("feature_shift must have one entry per user feature")
        if self.feature_scale.shape != (N_USER_FEATURES,):
            raise ValueError("feature_scale must have one entry per user feature")
        arrays = [self.P_ant, self.P_user, self.beta, self.feature_shift,
                  self.feature_scale]
        arrays += [a for lay in self.layers for a in (lay.Z1, lay.Z2, lay.Z3)]
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("weights must be finite")
        if np.any(self.feature_scale <= 0):
            raise ValueError("feature_scale entries must be strictly positive")

    @property
    def H(self) -> int:
        return self.P_ant.shape[0]

    @property
    def D(self) -> int:
        return len(self.layers)


def zero_weights(H: int = 64, D: int = 3) -> GnnWeights:
    """All-zero parameters with identity standardization: scores 0.5 always."""
    return GnnWeights(
        P_ant=np.zeros((H, 1)),
        P_user=np.zeros((H, N_USER_FEATURES)),
        layers=[LayerWeights(np.zeros((H, H)), np.zeros((H, H)),
                             np.zeros((H, N_EDGE_FEATURES))) for _ in range(D)],
        beta=np.zeros(H),
        feature_shift=np.zeros(N_USER_FEATURES),
        feature_scale=np.ones(N_USER_FEATURES),
    )


def _descending_eigvals(M: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh((M + M.conj().T) / 2.0)[::-1]


def extract_features(node, incumbent, inst, eps: float,
                     upper_bound: float | None = None,
                     lower_bound: float | None = None) -> NodeGraph:
    """Featurize a popped node against the current incumbent.

    The global bounds default to what the node itself exposes -- the popped
    node holds the lowest bound in a best-first search, and the incumbent's
    value is the upper bound -- but the driver may pass its own bookkeeping
    values (e.g. the monotone-clamped lower bound) to override them.
    """
    rel = node.relaxation
    R_X, W = rel.R_X, rel.W
    U = float(incumbent.value if upper_bound is None else upper_bound)
    L = float(node.lower_bound if lower_bound is None else lower_bound)
    u_hat = float(node.repaired.value)
    indicator = 1.0 if u_hat - U <= eps else 0.0
    K, nt = inst.K, inst.Nt
    ant = _descending_eigvals(R_X).reshape(nt, 1)
    user = np.empty((K, N_USER_FEATURES))
    edge = np.empty((nt, K, N_EDGE_FEATURES))
    # channel matrix with one column per user: entry (n, k) is h_k[n]
    Hmat = inst.channels.T
    edge[:, :, 0] = Hmat.real
    edge[:, :, 1] = Hmat.imag
    edge[:, :, 2] = np.abs(Hmat)
    for k in range(K):
        h = inst.channels[k]
        sig = float(np.real(h.conj() @ W[k] @ h))
        interf = float(np.real(h.conj() @ (R_X - W[k]) @ h))
        user[k] = (
            node.box.lo[k], node.box.hi[k],
            node.repaired.Gamma_hat[k], rel.Gamma[k],
            U, L, indicator, float(node.depth),
            sig, interf,
            float(node.lower_bound), u_hat,
            incumbent.Gamma_hat[k],
        )
        edge[:, k, 3] = _descending_eigvals(W[k])
    return NodeGraph(ant=ant, user=user, edge=edge)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def policy_score(g: NodeGraph, w: GnnWeights) -> float:
    """Mean sigmoid readout over all vertices after D message-passing rounds.

    Round d maps every vertex r to relu(Z1 q_r + sum over neighbors v of
    (Z2 q_v + Z3 e_rv)) using the previous round's states; the bipartite
    topology reduces the neighbor sums to per-side totals.
    """
    if g.edge.shape[2] != N_EDGE_FEATURES or g.user.shape[1] != w.P_user.shape[1]:
        raise ValueError("feature lengths do not match the weights")
    xu = (g.user - w.feature_shift) / w.feature_scale
    qa = g.ant @ w.P_ant.T          # (Nt, H)
    qu = xu @ w.P_user.T            # (K, H)
    ea = g.edge.sum(axis=1)         # (Nt, 4) edge totals per antenna
    eu = g.edge.sum(axis=0)         # (K, 4) edge totals per user
    for lay in w.layers:
        sa = qa.sum(axis=0)
        su = qu.sum(axis=0)
        nqa = qa @ lay.Z1.T + su @ lay.Z2.T + ea @ lay.Z3.T
        nqu = qu @ lay.Z1.T + sa @ lay.Z2.T + eu @ lay.Z3.T
        qa = np.maximum(nqa, 0.0)
        qu = np.maximum(nqu, 0.0)
    readout = np.concatenate([qa, qu], axis=0) @ w.beta
    return float(_sigmoid(readout).mean())


def decide(score: float) -> bool:
    """True to preserve (branch) the node, False to prune; 0.5 preserves."""
    return score >= 0.5


class GnnPolicy:
    """Adapter giving the search loop a keep(node, state) view of the net."""

    def __init__(self, weights: GnnWeights):
        self.weights = weights

    def keep(self, node, state) -> bool:
        g = extract_features(node, state.incumbent, state.inst, state.eps,
                             upper_bound=state.upper_bound,
                             lower_bound=state.lower_bound)
        return decide(policy_score(g, self.weights))


# ---------------------------------------------------------------------------
# serialization


def save_weights(w: GnnWeights, path) -> None:
    """Write weights as a self-describing JSON document.

    Floats serialize via repr (shortest round-tripping decimal, at most 17
    significant digits), so a save/load cycle reproduces every array bit for
    bit.
    """
    doc = {
        "D": w.D,
        "H": w.H,
        "P_ant": w.P_ant.tolist(),
        "P_user": w.P_user.tolist(),
        "layers": [{"Z1": lay.Z1.tolist(), "Z2": lay.Z2.tolist(),
                    "Z3": lay.Z3.tolist()} for lay in w.layers],
        "beta": w.beta.tolist(),
        "feature_shift": w.feature_shift.tolist(),
        "feature_scale": w.feature_scale.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_weights(path) -> GnnWeights:
    doc = json.loads(Path(path).read_text())
    layers = [LayerWeights(np.asarray(lay["Z1"], dtype=float),
                           np.asarray(lay["Z2"], dtype=float),
                           np.asarray(lay["Z3"], dtype=float))
              for lay in doc["layers"]]
    w = GnnWeights(
        P_ant=np.asarray(doc["P_ant"], dtype=float),
        P_user=np.asarray(doc["P_user"], dtype=float),
        layers=layers,
        beta=np.asarray(doc["beta"], dtype=float),
        feature_shift=np.asarray(doc["feature_shift"], dtype=float),
        feature_scale=np.asarray(doc["feature_scale"], dtype=float),
    )
    if w.D != doc["D"] or w.H != doc["H"]:
        raise ValueError(
            f"declared dims D={doc['D']}, H={doc['H']} do not match arrays "
            f"(D={w.D}, H={w.H})")
    return w


def graph_to_doc(g: NodeGraph) -> dict:
    """JSON-ready dict for a featurized node (used by feature dumps)."""
    return {"ant": g.ant.tolist(), "user": g.user.tolist(),
            "edge": g.edge.tolist()}


def graph_from_doc(doc: dict) -> NodeGraph:
    return NodeGraph(ant=np.asarray(doc["ant"], dtype=float),
                     user=np.asarray(doc["user"], dtype=float),
                     edge=np.asarray(doc["edge"], dtype=float))
