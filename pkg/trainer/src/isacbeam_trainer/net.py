"""Pruning classifier: a bipartite message-passing network in float64.

The forward pass reproduces the optimizer's scoring rule operation for
operation so that weights exported from here score identically (to float
roundoff) when loaded by the optimizer: standardize the 13 per-user
features, project antenna and user vertices into a shared hidden space,
run D synchronous message-passing rounds over the complete bipartite
antenna-user graph with relu activations, and read out the mean sigmoid of
a shared linear head over all vertices.  All-zero parameters score exactly
0.5 everywhere, which the optimizer treats as "preserve".

The weight file is the optimizer's own JSON format (dims, input
projections, per-layer aggregation matrices, readout, and the fixed
per-feature standardization), written with repr floats so a save/load
cycle is bit-exact.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import torch

__all__ = [
    "N_USER_FEATURES",
    "N_EDGE_FEATURES",
    "PruningNet",
    "net_to_doc",
    "save_net",
    "load_net",
    "graph_tensors",
    "score_graph",
]

N_USER_FEATURES = 13
N_EDGE_FEATURES = 4

DTYPE = torch.float64


class PruningNet(torch.nn.Module):
    """Message-passing scorer over the antenna-user graph of a search node.

    Freshly constructed nets are all-zero (the preserve-everything policy);
    call ``init_random`` before fitting.  ``feature_shift``/``feature_scale``
    are buffers, fixed data statistics rather than trainable weights.
    """

    def __init__(self, hidden: int = 64, depth: int = 3):
        super().__init__()
        if hidden < 1 or depth < 1:
            raise ValueError("hidden width and depth must be positive")
        self.hidden = hidden
        self.depth = depth
        z = lambda *s: torch.nn.Parameter(torch.zeros(*s, dtype=DTYPE))
        self.P_ant = z(hidden, 1)
        self.P_user = z(hidden, N_USER_FEATURES)
        self.Z1 = torch.nn.ParameterList(z(hidden, hidden) for _ in range(depth))
        self.Z2 = torch.nn.ParameterList(z(hidden, hidden) for _ in range(depth))
        self.Z3 = torch.nn.ParameterList(
            z(hidden, N_EDGE_FEATURES) for _ in range(depth))
        self.beta = z(hidden)
        self.register_buffer(
            "feature_shift", torch.zeros(N_USER_FEATURES, dtype=DTYPE))
        self.register_buffer(
            "feature_scale", torch.ones(N_USER_FEATURES, dtype=DTYPE))

    def init_random(self, seed: int = 0) -> "PruningNet":
        """He-style random initialization (relu fan-in scaling), seeded."""
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for p, fan_in in [(self.P_ant, 1), (self.P_user, N_USER_FEATURES),
                              (self.beta, self.hidden)]:
                p.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
            for lst, fan_in in [(self.Z1, self.hidden), (self.Z2, self.hidden),
                                (self.Z3, N_EDGE_FEATURES)]:
                for p in lst:
                    p.normal_(0.0, math.sqrt(2.0 / fan_in), generator=gen)
        return self

    @torch.no_grad()
    def set_standardization(self, shift, scale) -> None:
        shift = torch.as_tensor(shift, dtype=DTYPE)
        scale = torch.as_tensor(scale, dtype=DTYPE)
        if shift.shape != (N_USER_FEATURES,) or scale.shape != (N_USER_FEATURES,):
            raise ValueError("shift/scale must have one entry per user feature")
        if torch.any(scale <= 0):
            raise ValueError("feature scales must be strictly positive")
        self.feature_shift.copy_(shift)
        self.feature_scale.copy_(scale)

    def forward(self, ant: torch.Tensor, user: torch.Tensor,
                edge: torch.Tensor) -> torch.Tensor:
        """Score a batch of same-shape graphs.

        ant is (B, Nt, 1), user (B, K, 13), edge (B, Nt, K, 4); returns (B,)
        scores in [0, 1].
        """
        xu = (user - self.feature_shift) / self.feature_scale
        qa = ant @ self.P_ant.T                      # (B, Nt, H)
        qu = xu @ self.P_user.T                      # (B, K, H)
        ea = edge.sum(dim=2)                         # (B, Nt, 4)
        eu = edge.sum(dim=1)                         # (B, K, 4)
        for z1, z2, z3 in zip(self.Z1, self.Z2, self.Z3):
            sa = qa.sum(dim=1)                       # (B, H)
            su = qu.sum(dim=1)
            nqa = qa @ z1.T + (su @ z2.T).unsqueeze(1) + ea @ z3.T
            nqu = qu @ z1.T + (sa @ z2.T).unsqueeze(1) + eu @ z3.T
            qa = torch.relu(nqa)
            qu = torch.relu(nqu)
        readout = torch.cat([qa, qu], dim=1) @ self.beta   # (B, Nt + K)
        return torch.sigmoid(readout).mean(dim=1)


def net_to_doc(net: PruningNet) -> dict:
    """The optimizer's weight-file document for this net."""
    t = lambda p: p.detach().cpu().numpy().tolist()
    return {
        "D": net.depth,
        "H": net.hidden,
        "P_ant": t(net.P_ant),
        "P_user": t(net.P_user),
        "layers": [{"Z1": t(z1), "Z2": t(z2), "Z3": t(z3)}
                   for z1, z2, z3 in zip(net.Z1, net.Z2, net.Z3)],
        "beta": t(net.beta),
        "feature_shift": t(net.feature_shift),
        "feature_scale": t(net.feature_scale),
    }


def save_net(net: PruningNet, path) -> None:
    Path(path).write_text(json.dumps(net_to_doc(net)))


def load_net(path) -> PruningNet:
    doc = json.loads(Path(path).read_text())
    net = PruningNet(hidden=doc["H"], depth=doc["D"])
    with torch.no_grad():
        net.P_ant.copy_(torch.tensor(doc["P_ant"], dtype=DTYPE))
        net.P_user.copy_(torch.tensor(doc["P_user"], dtype=DTYPE))
        for lay, z1, z2, z3 in zip(doc["layers"], net.Z1, net.Z2, net.Z3):
            z1.copy_(torch.tensor(lay["Z1"], dtype=DTYPE))
            z2.copy_(torch.tensor(lay["Z2"], dtype=DTYPE))
            z3.copy_(torch.tensor(lay["Z3"], dtype=DTYPE))
        net.beta.copy_(torch.tensor(doc["beta"], dtype=DTYPE))
    net.set_standardization(torch.tensor(doc["feature_shift"], dtype=DTYPE),
                            torch.tensor(doc["feature_scale"], dtype=DTYPE))
    return net


def graph_tensors(graph: dict) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Unbatched (ant, user, edge) tensors from a featurized-node document."""
    ant = torch.tensor(graph["ant"], dtype=DTYPE)
    user = torch.tensor(graph["user"], dtype=DTYPE)
    edge = torch.tensor(graph["edge"], dtype=DTYPE)
    if ant.ndim != 2 or ant.shape[1] != 1:
        raise ValueError(f"ant features must be (Nt, 1), got {tuple(ant.shape)}")
    if user.ndim != 2 or user.shape[1] != N_USER_FEATURES:
        raise ValueError(
            f"user features must be (K, {N_USER_FEATURES}), got {tuple(user.shape)}")
    if edge.shape != (ant.shape[0], user.shape[0], N_EDGE_FEATURES):
        raise ValueError(f"edge features must be (Nt, K, {N_EDGE_FEATURES}), "
                         f"got {tuple(edge.shape)}")
    return ant, user, edge


@torch.no_grad()
def score_graph(net: PruningNet, graph: dict) -> float:
    """Score one featurized-node document."""
    ant, user, edge = graph_tensors(graph)
    return float(net(ant.unsqueeze(0), user.unsqueeze(0), edge.unsqueeze(0))[0])
