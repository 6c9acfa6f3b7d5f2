"""McCormick envelopes, feasibility repair, branching, and box bisection.

The bilinear coupling a_k = Gamma_k * I_k between the SINR variable and the
interference power I_k = tr(Q_k (R_X - W_k)) is relaxed over the rectangle
Gamma_k in [lo_k, hi_k], I_k in [0, b_k] by its four McCormick inequalities.
This module builds those inequalities, repairs a relaxation point into a
feasible one by deflating each SINR to what the interference actually
supports, picks the branching coordinate with the largest relative relaxation
gap, and bisects boxes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import BeamformingSolution, ProblemInstance, objective

__all__ = [
    "Box",
    "LinearConstraint",
    "FeasibleSolution",
    "envelope_constraints",
    "interference",
    "repair",
    "branch_index",
    "bisect",
    "root_box",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box:
    """Per-user SINR rectangle prod_k [lo_k, hi_k]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).copy()
        hi = np.asarray(self.hi, dtype=float).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-D arrays of equal length")
        if np.any(lo < 0) or np.any(hi < lo):
            raise ValueError("need 0 <= lo_k <= hi_k")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def K(self) -> int:
        return self.lo.shape[0]

    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        return float(np.prod(self.width()))

    def contains(self, gamma, tol: float = 0.0) -> bool:
        g = np.asarray(gamma, dtype=float)
        return bool(np.all(g >= self.lo - tol) and np.all(g <= self.hi + tol))


@dataclass(frozen=True)
class LinearConstraint:
    """Inequality c_a*a + c_gamma*Gamma + c_i*I + const >= 0 for one user."""

    c_a: float
    c_gamma: float
    c_i: float
    const: float

    def residual(self, a: float, gamma: float, i: float) -> float:
        """Slack at a point; nonnegative iff the inequality holds."""
        return self.c_a * a + self.c_gamma * gamma + self.c_i * i + self.const


def envelope_constraints(lo: float, hi: float, b: float) -> list[LinearConstraint]:
    """Four McCormick inequalities for a = Gamma*I on [lo,hi] x [0,b].

    Returned in order: the two lower envelopes (a >= lo*I and
    a >= hi*I + b*Gamma - hi*b) then the two upper envelopes (a <= hi*I and
    a <= lo*I + b*Gamma - lo*b).
    """
    if not (0.0 <= lo <= hi):
        raise ValueError("need 0 <= lo <= hi")
    if b < 0:
        raise ValueError("need b >= 0")
    return [
        LinearConstraint(1.0, 0.0, -lo, 0.0),
        LinearConstraint(1.0, -b, -hi, hi * b),
        LinearConstraint(-1.0, 0.0, hi, 0.0),
        LinearConstraint(-1.0, b, lo, -lo * b),
    ]


def interference(inst: ProblemInstance, R_X: np.ndarray, W_k: np.ndarray,
                 k: int) -> float:
    """Interference power I_k = tr(Q_k (R_X - W_k)) seen by user k."""
    h = inst.channels[k]
    d = R_X - W_k
    return float(np.real(h.conj() @ d @ h))


@dataclass
class FeasibleSolution:
    """Feasible point built from a relaxation point by SINR deflation.

    Gamma holds the relaxation's declared SINRs, Gamma_hat the repaired ones;
    matrices are copied unchanged; value prices Gamma_hat in the rate term.
    """

    R_X: np.ndarray
    W: np.ndarray
    Gamma: np.ndarray
    Gamma_hat: np.ndarray
    a: np.ndarray
    value: float
    box: Box


def repair(node_sol, box: Box, inst: ProblemInstance) -> FeasibleSolution:
    """Deflate each SINR to the level its interference supports.

    Gamma_hat_k = (Gamma_k*sigma^2 + lo_k*I_k) / (sigma^2 + I_k), a convex
    combination of Gamma_k and lo_k, so Gamma_hat_k in [lo_k, Gamma_k].
    Feasibility of the result is structural: the relaxation guarantees
    tr(Q_k W_k) >= Gamma_k*sigma^2 + lo_k*I_k = Gamma_hat_k*(sigma^2 + I_k).
    """
    R_X = np.array(node_sol.R_X, copy=True)
    W = np.array(node_sol.W, copy=True)
    gamma = np.asarray(node_sol.Gamma, dtype=float)
    s2 = inst.sigmaC2
    I = np.array([interference(inst, R_X, W[k], k) for k in range(inst.K)])
    gamma_hat = (gamma * s2 + box.lo * I) / (s2 + I)
    gamma_hat = np.minimum(np.maximum(gamma_hat, box.lo), gamma)
    value = objective(inst, BeamformingSolution(R_X=R_X, W=W, Gamma=gamma_hat))
    return FeasibleSolution(R_X=R_X, W=W, Gamma=gamma.copy(),
                            Gamma_hat=gamma_hat, a=gamma_hat * I,
                            value=value, box=box)


def branch_index(node_sol, repaired: FeasibleSolution) -> int | None:
    """Coordinate with the largest relative relaxation gap.

    k* = argmax (Gamma_k - Gamma_hat_k)/(1 + Gamma_hat_k), ties to the
    smallest index.  Width-zero coordinates are never branched; if every
    branchable coordinate has a nonpositive gap (possible only through solver
    tolerance slack) the widest one is used.  Returns None when the whole box
    is degenerate.
    """
    gamma = np.asarray(node_sol.Gamma, dtype=float)
    ratios = (gamma - repaired.Gamma_hat) / (1.0 + repaired.Gamma_hat)
    widths = repaired.box.width()
    branchable = widths > 0.0
    if not branchable.any():
        return None
    masked = np.where(branchable, ratios, -np.inf)
    k_star = int(np.argmax(masked))  # argmax takes the first maximum: smallest k
    if masked[k_star] <= 0.0:
        log.debug("all relaxation gaps nonpositive; branching widest interval")
        k_star = int(np.argmax(np.where(branchable, widths, -np.inf)))
    return k_star


def bisect(box: Box, k_star: int) -> tuple[Box, Box]:
    """Split the k*-th interval at its midpoint; lower half first."""
    z = 0.5 * (box.lo[k_star] + box.hi[k_star])
    hi1 = box.hi.copy()
    hi1[k_star] = z
    lo2 = box.lo.copy()
    lo2[k_star] = z
    return Box(box.lo.copy(), hi1), Box(lo2, box.hi.copy())


def root_box(inst: ProblemInstance) -> Box:
    """Initial rectangle: 0 <= Gamma_k <= P_T*||h_k||^2 / sigma_C^2."""
    hi = np.array([inst.P_T * inst.channel_gain(k) / inst.sigmaC2
                   for k in range(inst.K)])
    return Box(np.zeros(inst.K), hi)


def interference_caps(inst: ProblemInstance) -> np.ndarray:
    """Fixed interference bounds b_k = P_T*||h_k||^2 used by every node."""
    return np.array([inst.P_T * inst.channel_gain(k) for k in range(inst.K)])
