"""Rank-one covariance construction and physical beamformer recovery.

A covariance-level solution (R_X, {W_k}, Gamma) is turned into transmit
beamformers without losing objective value: each user covariance is replaced
by the rank-one matrix that carries the same beam gain on its own channel,
the displaced energy joins the sensing part, and the channel sees identical
signal and interference powers before and after.
"""

from __future__ import annotations

import numpy as np

from .hermitian import hermitize, psd_factor
from .model import BeamformingSolution, ProblemInstance

__all__ = ["ZeroBeamGain", "rank_one_project", "recover_beamformers"]


class ZeroBeamGain(ValueError):
    """The covariance carries (essentially) no energy on the user's channel."""


def rank_one_project(Wbar, h) -> np.ndarray:
    """Rank-one replacement W = (Wbar h)(Wbar h)^H / (h^H Wbar h).

    Preserves the beam gain h^H W h exactly, and Wbar - W stays PSD
    (Cauchy-Schwarz in the Wbar inner product), so swapping it into a
    feasible solution changes neither the objective nor any constraint
    involving the channel.

    Raises ZeroBeamGain when the gain is at the numerical floor
    (1e-12 * ||h||^2 * tr(Wbar)), where the division is meaningless.
    """
    Wbar = np.asarray(Wbar, dtype=complex)
    h = np.asarray(h, dtype=complex).reshape(-1)
    v = Wbar @ h
    gain = float(np.vdot(h, v).real)  # = tr(h h^H Wbar)
    floor = 1e-12 * float(np.vdot(h, h).real) * float(np.trace(Wbar).real)
    if gain <= floor:
        raise ZeroBeamGain(
            f"beam gain {gain:.3e} at or below the degeneracy floor "
            f"{floor:.3e}")
    return np.outer(v, v.conj()) / gain


def recover_beamformers(sol: BeamformingSolution,
                        inst: ProblemInstance) -> BeamformingSolution:
    """Fill in beamformers w_k and the sensing factor of a covariance solution.

    Returns a new solution with w_k = (h_k^H W_k h_k)^{-1/2} W_k h_k (so
    w_k w_k^H is exactly the rank-one projection of W_k) and W_A_factor F
    with F F^H = R_X - sum_k w_k w_k^H.  R_X and the declared SINRs are
    untouched; a user whose covariance carries no energy on its channel and
    declares (essentially) zero SINR gets a zero beam.

    Raises NotPSD if the sensing remainder R_X - sum_k W~_k is not PSD
    within tolerance, and ZeroBeamGain if a user declares a positive SINR
    from a gainless covariance.
    """
    K, Nt = inst.K, inst.Nt
    W_tilde = np.zeros((K, Nt, Nt), dtype=complex)
    w = np.zeros((K, Nt), dtype=complex)
    for k in range(K):
        h = inst.channels[k]
        try:
            W_tilde[k] = rank_one_project(sol.W[k], h)
        except ZeroBeamGain:
            if sol.Gamma[k] <= 1e-9:
                continue  # user is switched off: zero beam, zero covariance
            raise
        gain = float(np.vdot(h, sol.W[k] @ h).real)
        w[k] = (sol.W[k] @ h) / np.sqrt(gain)
    W_A = hermitize(sol.R_X - W_tilde.sum(axis=0))
    F = psd_factor(W_A)
    return BeamformingSolution(R_X=sol.R_X, W=W_tilde, Gamma=sol.Gamma,
                               w=w, W_A_factor=F)
