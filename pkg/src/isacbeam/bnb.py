"""Best-first branch-and-bound over SINR boxes with certified gap.

Each live node carries a box, its envelope-relaxation solution (a certified
lower bound there), and the repaired feasible solution obtained from it.  One
loop pass either terminates (gap at or below epsilon), discards the popped
node (pruning policy), or branches it: the SINR interval of the user with the
largest relative envelope slack is bisected, both children are solved
(warm-started from the parent) and repaired, and the incumbent takes the
better repaired value.  Children whose bound cannot beat the incumbent by
more than epsilon never enter the list; the minimum discarded bound is kept
so the reported global lower bound -- and hence the whole trace -- is
identical to a run without that shortcut.

The per-pass trace rows use k_star = 1..K for branching passes and 0
otherwise, and action in {"expand", "prune", "terminate", "node-cap"}.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .envelope import (
    FeasibleSolution,
    bisect,
    branch_index,
    interference_caps,
    repair,
    root_box,
)
from .model import ProblemInstance
from .serial import TraceRow
from .solver import (
    InfeasibleBox,
    MerProblem,
    NumericalFailure,
    RelaxationSolution,
    solve_mer,
)

__all__ = [
    "BnbNode",
    "BnbTrace",
    "BnbResult",
    "NodeSolveError",
    "solve_bnb",
    "worst_case_iterations",
]

log = logging.getLogger(__name__)

NODE_TOL = 1e-6  # per-node relaxation accuracy; well below any sensible eps


class NodeSolveError(NumericalFailure):
    """A node's relaxation failed numerically; carries the node context."""

    def __init__(self, msg, node_id, depth, box):
        super().__init__(msg)
        self.node_id = node_id
        self.depth = depth
        self.box = box


@dataclass
class BnbNode:
    """A live subproblem: box, relaxation on it, and its repaired solution."""

    box: object
    relaxation: RelaxationSolution
    lower_bound: float
    depth: int
    id: int
    repaired: FeasibleSolution
    parent_id: int = 0

    def __lt__(self, other):  # heap order: lowest bound, oldest id first
        return (self.lower_bound, self.id) < (other.lower_bound, other.id)


@dataclass
class BnbTrace:
    """Per-pass records plus run-level counters."""

    rows: list = field(default_factory=list)
    status: str = ""
    iterations: int = 0  # branching operations
    wall_time: float = 0.0


@dataclass
class BnbResult:
    best: FeasibleSolution
    trace: BnbTrace
    certified_gap: float
    lower_bound: float
    status: str
    iterations: int
    nodes_solved: int
    policy_pruned: int
    gap_certified: bool
    wall_time: float
    nodes: list | None = None  # audit copy of every created node (optional)

    @property
    def upper_bound(self) -> float:
        return self.best.value


@dataclass
class PolicyState:
    """What a pruning policy may look at besides the popped node."""

    inst: ProblemInstance
    eps: float
    t: int
    upper_bound: float
    lower_bound: float
    incumbent: FeasibleSolution


def worst_case_iterations(inst: ProblemInstance, eps: float) -> int:
    """Iterations guaranteed to reach an eps-optimal solution.

    T = ceil((Gamma_max / delta)^K) + 1 with delta = (exp(eps/K) - 1) / 2 and
    Gamma_max the largest single-user SINR cap.  The power and ceiling are
    taken over exact rationals so boundary cases do not wobble with rounding.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    K = inst.K
    gmax = max(inst.P_T * inst.channel_gain(k) / inst.sigmaC2
               for k in range(K))
    try:
        delta = (math.exp(eps / K) - 1.0) / 2.0
    except OverflowError:
        return 2  # interval already eps-tight after one bisection
    if not math.isfinite(delta):
        return 2
    ratio = Fraction(gmax) / Fraction(delta)
    return max(math.ceil(ratio ** K) + 1, 2)


def _solve_node(inst, box, b, warm, node_id, depth):
    try:
        return solve_mer(MerProblem(inst, box, b=b), tol=NODE_TOL, warm=warm)
    except NumericalFailure as e:
        raise NodeSolveError(
            f"relaxation failed at node {node_id} (depth {depth}): {e}",
            node_id, depth, box) from e


def solve_bnb(inst: ProblemInstance, eps: float = 1e-3, policy=None,
              node_cap: int = 100_000, keep_nodes: bool = False) -> BnbResult:
    """Certified global minimization by branch-and-bound on the SINR boxes.

    With ``policy=None`` the result is eps-optimal: the returned value U*
    satisfies U* - OPT <= certified_gap <= eps.  A pruning policy (an object
    with ``keep(node, state) -> bool``) may discard popped nodes without
    branching; the run is then faster but the reported gap is no longer a
    certificate, which the result records in ``gap_certified``.

    ``node_cap`` bounds the number of loop passes; hitting it returns the
    best solution found so far with its (still valid, merely loose) gap and
    status "node-cap".  Child relaxations within one pass are independent and
    are evaluated in child order (lower half first).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    start = time.perf_counter()
    b = interference_caps(inst)
    box0 = root_box(inst)
    rel0 = _solve_node(inst, box0, b, None, 1, 1)
    rep0 = repair(rel0, box0, inst)
    root = BnbNode(box=box0, relaxation=rel0, lower_bound=rel0.value,
                   depth=1, id=1, repaired=rep0)
    heap = [root]
    audit = [root] if keep_nodes else None
    incumbent = rep0
    U = rep0.value
    floor = math.inf  # smallest bound discarded by insert-time fathoming
    next_id = 2
    rows: list[TraceRow] = []
    expansions = 0
    nodes_solved = 1
    policy_pruned = 0
    status = "optimal"
    t = 0
    L = -math.inf
    while True:
        t += 1
        heap_min = heap[0].lower_bound if heap else math.inf
        # clamping keeps the reported bound monotone across the per-node
        # solver wobble: both the old and the new value are valid global
        # lower bounds, so their max is too
        L = max(L, min(heap_min, floor, U))
        gap = U - L
        if gap <= eps:
            rows.append(TraceRow(t, L, U, gap, 0, 0, 0, "terminate"))
            break
        if t > node_cap:
            rows.append(TraceRow(t, L, U, gap, 0, 0, 0, "node-cap"))
            status = "node-cap"
            break
        node = heapq.heappop(heap)
        if policy is not None:
            state = PolicyState(inst=inst, eps=eps, t=t, upper_bound=U,
                                lower_bound=L, incumbent=incumbent)
            if not policy.keep(node, state):
                policy_pruned += 1
                rows.append(TraceRow(t, L, U, gap, node.id, node.depth, 0,
                                     "prune"))
                continue
        k_star = branch_index(node.relaxation, node.repaired)
        assert k_star is not None, "bisection never creates width-zero boxes"
        children = []
        for child_box in bisect(node.box, k_star):
            child_id = next_id
            next_id += 1
            try:
                rel = _solve_node(inst, child_box, b, node.relaxation,
                                  child_id, node.depth + 1)
            except InfeasibleBox:
                continue  # no feasible point in this half: nothing to keep
            finally:
                nodes_solved += 1
            rep = repair(rel, child_box, inst)
            children.append(BnbNode(box=child_box, relaxation=rel,
                                    lower_bound=rel.value,
                                    depth=node.depth + 1, id=child_id,
                                    repaired=rep, parent_id=node.id))
        if children:
            best_child = min(children, key=lambda c: c.repaired.value)
            if U >= best_child.repaired.value:
                U = best_child.repaired.value
                incumbent = best_child.repaired
        for child in children:
            if audit is not None:
                audit.append(child)
            if child.lower_bound >= U - eps:
                floor = min(floor, child.lower_bound)
            else:
                heapq.heappush(heap, child)
        expansions += 1
        rows.append(TraceRow(t, L, U, U - L, node.id, node.depth,
                             k_star + 1, "expand"))
    wall = time.perf_counter() - start
    final = rows[-1]
    trace = BnbTrace(rows=rows, status=status, iterations=expansions,
                     wall_time=wall)
    return BnbResult(
        best=incumbent,
        trace=trace,
        certified_gap=final.gap,
        lower_bound=final.L,
        status=status,
        iterations=expansions,
        nodes_solved=nodes_solved,
        policy_pruned=policy_pruned,
        gap_certified=policy_pruned == 0,
        wall_time=wall,
        nodes=audit,
    )
