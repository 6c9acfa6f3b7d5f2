"""Closed-form fast paths: single user and mutually orthogonal users.

For one user the optimal transmit covariance is known in closed form up to a
univariate root: the covariance is isotropic on the channel's null space, puts
eigenvalue Gamma*sigma^2/||h||^2 on the channel direction, and the optimal
SINR solves a scalar equation balancing the rate gradient against the
sensing-term gradient.  For pairwise-orthogonal channels the matrix problem
collapses to a separable eigenvalue allocation handled by the convex solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .hermitian import complete_basis, outer
from .model import BeamformingSolution, ProblemInstance

__all__ = [
    "RootNotBracketed",
    "ChannelsNotOrthogonal",
    "SingleUserSolution",
    "single_user_solution",
    "solve_single_user",
    "single_user_kkt_residual",
    "check_orthogonal",
    "solve_orthogonal_case",
]

log = logging.getLogger(__name__)


class RootNotBracketed(RuntimeError):
    """No sign change found for the single-user optimality equation."""


class ChannelsNotOrthogonal(ValueError):
    """Channels are not pairwise orthogonal within tolerance."""


@dataclass(frozen=True)
class SingleUserSolution:
    """Optimal single-user operating point.

    lam[0] = Gamma1*sigma^2/||h||^2 rides the channel direction basis[:, 0] =
    h/||h||; lam[1:] are equal and fill the power budget; W1 is rank one.
    """

    Gamma1: float
    lam: np.ndarray
    basis: np.ndarray
    W1: np.ndarray

    @property
    def R_X(self) -> np.ndarray:
        return (self.basis * self.lam[None, :]) @ self.basis.conj().T

    def objective(self, rho: float) -> float:
        return float(-np.log1p(self.Gamma1) + rho * np.sum(1.0 / self.lam))


def _stationarity(gamma, g2, s2, P_T, Nt, rho):
    """Residual of the optimality equation; negative below the root.

    rho*s2*(1/lam_tail^2 - 1/lam_1^2) - g2/(1+gamma), with
    lam_1 = gamma*s2/g2 and lam_tail = (P_T*g2 - gamma*s2)/(g2*(Nt-1)).
    """
    inv_tail_sq = (g2 * (Nt - 1)) ** 2 / (P_T * g2 - gamma * s2) ** 2
    inv_head_sq = g2 ** 2 / (gamma * s2) ** 2
    return rho * s2 * (inv_tail_sq - inv_head_sq) - g2 / (1.0 + gamma)


def _objective_at(gamma, g2, s2, P_T, Nt, rho):
    lam1 = gamma * s2 / g2
    lam_tail = (P_T * g2 - gamma * s2) / (g2 * (Nt - 1))
    return -np.log1p(gamma) + rho * (1.0 / lam1 + (Nt - 1) / lam_tail)


def _root_scan(g2, s2, P_T, Nt, rho, points=10_000):
    """All roots of the optimality equation on (0, Gamma_max), best first."""
    gmax = P_T * g2 / s2
    grid = gmax * np.linspace(1e-9, 1.0 - 1e-9, points)
    vals = _stationarity(grid, g2, s2, P_T, Nt, rho)
    sign_flips = np.nonzero(np.diff(np.sign(vals)) != 0)[0]
    if sign_flips.size == 0:
        raise RootNotBracketed(
            "no sign change for the single-user optimality equation; "
            "the equation should span -inf to +inf on (0, Gamma_max)")
    roots = []
    for idx in sign_flips:
        lo, hi = grid[idx], grid[idx + 1]
        flo = vals[idx]
        while hi - lo > 1e-12 * gmax:
            mid = 0.5 * (lo + hi)
            fm = _stationarity(mid, g2, s2, P_T, Nt, rho)
            if (fm < 0) == (flo < 0):
                lo, flo = mid, fm
            else:
                hi = mid
        root = 0.5 * (lo + hi)
        for _ in range(2):  # Newton polish on the bisection result
            f = _stationarity(root, g2, s2, P_T, Nt, rho)
            h = 1e-7 * gmax
            df = (_stationarity(root + h, g2, s2, P_T, Nt, rho) - f) / h
            step = f / df
            cand = root - step
            if 0.0 < cand < gmax:
                root = cand
        roots.append(root)
    if len(roots) > 1:
        log.info("single-user equation has %d roots; keeping best objective",
                 len(roots))
        roots.sort(key=lambda r: _objective_at(r, g2, s2, P_T, Nt, rho))
    return roots


def single_user_solution(inst: ProblemInstance) -> SingleUserSolution:
    """Optimal eigenvalue allocation and basis for a one-user instance."""
    if inst.K != 1:
        raise ValueError(f"single-user path requires K=1, got K={inst.K}")
    h = inst.channels[0]
    g2 = inst.channel_gain(0)
    s2, P_T, Nt, rho = inst.sigmaC2, inst.P_T, inst.Nt, inst.rho
    u1 = h / np.sqrt(g2)
    if Nt == 1:
        # all power on the only direction; SINR hits its upper bound
        gamma = P_T * g2 / s2
        lam = np.array([P_T])
        basis = u1[:, None]
        W1 = gamma * s2 * outer(h) / g2 ** 2
        return SingleUserSolution(Gamma1=float(gamma), lam=lam, basis=basis, W1=W1)
    gamma = _root_scan(g2, s2, P_T, Nt, rho)[0]
    lam1 = gamma * s2 / g2
    lam_tail = (P_T * g2 - gamma * s2) / (g2 * (Nt - 1))
    lam = np.concatenate([[lam1], np.full(Nt - 1, lam_tail)])
    basis = complete_basis(u1)
    W1 = gamma * s2 * outer(h) / g2 ** 2
    return SingleUserSolution(Gamma1=float(gamma), lam=lam, basis=basis, W1=W1)


def solve_single_user(inst: ProblemInstance) -> BeamformingSolution:
    """Optimal beamforming for a one-user instance."""
    sol = single_user_solution(inst)
    return BeamformingSolution(R_X=sol.R_X, W=sol.W1[None, :, :],
                               Gamma=np.array([sol.Gamma1]))


def single_user_kkt_residual(inst: ProblemInstance,
                             sol: SingleUserSolution) -> float:
    """Stationarity residual of the single-user optimality system.

    Multipliers omega (SINR constraint) and mu (power) follow from the tail
    eigenvalues; the head eigenvalue must satisfy rho/lam_1^2 = mu - omega.
    Returns a relative residual; also checks multiplier positivity and the
    power equality.
    """
    if inst.Nt == 1:
        return abs(np.sum(sol.lam) - inst.P_T) / inst.P_T
    g2 = inst.channel_gain(0)
    omega = g2 / ((1.0 + sol.Gamma1) * inst.sigmaC2)
    mu = inst.rho / sol.lam[1] ** 2
    res = abs(inst.rho / sol.lam[0] ** 2 - (mu - omega)) / max(mu, 1.0)
    if not (omega > 0 and mu > 0):
        return np.inf
    res = max(res, abs(np.sum(sol.lam) - inst.P_T) / inst.P_T)
    return float(res)


def check_orthogonal(inst: ProblemInstance, tol: float = 1e-8) -> bool:
    """True iff channels are pairwise orthogonal: max normalized |h_i^H h_j| <= tol."""
    H = inst.channels
    norms = np.linalg.norm(H, axis=1)
    G = np.abs(H.conj() @ H.T) / np.outer(norms, norms)
    np.fill_diagonal(G, 0.0)
    return bool(G.max() <= tol)


def solve_orthogonal_case(inst: ProblemInstance) -> BeamformingSolution:
    """Optimal beamforming for pairwise-orthogonal channels.

    Delegates the separable eigenvalue allocation to the convex solver and
    returns the assembled solution (zero inter-user interference).
    """
    from .solver import solve_orthogonal  # deferred to avoid a module cycle

    return solve_orthogonal(inst)
