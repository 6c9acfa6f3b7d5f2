"""Problem data model, random scenario generation, and performance metrics.

A problem instance collects the downlink channels, power budget, noise
variances and the rate/sensing trade-off weight; a beamforming solution is a
transmit covariance, per-user covariances, and the SINR targets the solution
declares for each user.  The metrics here evaluate the declared operating
point: ``sinr`` recomputes the achieved SINR from the matrices for audit,
while ``sum_rate``/``objective`` price the *stored* SINRs -- feasible
solutions always declare SINRs at or below what the matrices achieve, and
bound bookkeeping in the search engine depends on reproducing the declared
value exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SingularCovariance",
    "ProblemInstance",
    "BeamformingSolution",
    "dbm_to_linear",
    "linear_to_dbm",
    "sinr",
    "sum_rate",
    "crb",
    "objective",
    "gen_scenario1",
    "gen_scenario2",
]


class SingularCovariance(ValueError):
    """Transmit covariance is singular where positive definiteness is required."""


def dbm_to_linear(p_dbm: float) -> float:
    """Convert a dBm power to linear (milliwatt-referenced): 30 dBm -> 1000."""
    return 10.0 ** (p_dbm / 10.0)


def linear_to_dbm(p: float) -> float:
    return 10.0 * np.log10(p)


@dataclass(frozen=True)
class ProblemInstance:
    """Joint sensing/communication beamforming instance.

    channels has shape (K, Nt); P_T, sigmaC2, sigmaS2 are linear powers.
    rho weights the sensing term tr(R_X^-1) against the negative sum rate.
    """

    K: int
    Nt: int
    Nr: int
    L: int
    channels: np.ndarray
    P_T: float
    sigmaC2: float = 1.0
    sigmaS2: float = 1.0
    rho: float = 1.0
    seed: int | None = None
    scenario: int | None = None

    def __post_init__(self):
        ch = np.ascontiguousarray(np.asarray(self.channels, dtype=complex))
        object.__setattr__(self, "channels", ch)
        if self.K < 1:
            raise ValueError("need at least one user")
        if self.Nt < 1 or self.Nr < 1 or self.L < 1:
            raise ValueError("antenna/frame counts must be positive")
        if ch.shape != (self.K, self.Nt):
            raise ValueError(f"channels shape {ch.shape} != (K, Nt) = {(self.K, self.Nt)}")
        if not (self.P_T > 0 and self.sigmaC2 > 0 and self.sigmaS2 > 0 and self.rho > 0):
            raise ValueError("P_T, noise variances and rho must be positive")
        if not np.all(np.isfinite(ch.view(float))):
            raise ValueError("channels must be finite")
        norms = np.linalg.norm(ch, axis=1)
        if np.any(norms == 0):
            raise ValueError("every channel must be nonzero")
        if self.Nt >= self.Nr:
            warnings.warn(
                f"Nt={self.Nt} >= Nr={self.Nr}: the sensing model assumes more "
                "receive than transmit antennas",
                stacklevel=2,
            )
        ch.setflags(write=False)

    @property
    def P_T_dBm(self) -> float:
        return linear_to_dbm(self.P_T)

    def gram(self, k: int):
        """Channel outer product Q_k = h_k h_k^H."""
        h = self.channels[k]
        return np.outer(h, h.conj())

    def channel_gain(self, k: int) -> float:
        """||h_k||^2."""
        return float(np.vdot(self.channels[k], self.channels[k]).real)


@dataclass
class BeamformingSolution:
    """Transmit covariance R_X, per-user covariances W_k and declared SINRs.

    Beamformers w_k and the sensing factor W_A (with W_A W_A^H = R_X - sum W_k)
    are filled in by the extraction step and stay None until then.
    """

    R_X: np.ndarray
    W: np.ndarray
    Gamma: np.ndarray
    w: np.ndarray | None = None
    W_A_factor: np.ndarray | None = None

    def __post_init__(self):
        self.R_X = np.asarray(self.R_X, dtype=complex)
        self.W = np.asarray(self.W, dtype=complex)
        self.Gamma = np.asarray(self.Gamma, dtype=float)

    @property
    def K(self) -> int:
        return self.Gamma.shape[0]

    def sensing_covariance(self):
        """R_X - sum_k W_k (PSD for any feasible solution)."""
        return self.R_X - self.W.sum(axis=0)


def _achieved_sinr_cov(inst: ProblemInstance, sol: BeamformingSolution, k: int) -> float:
    Q = inst.gram(k)
    sig = float(np.trace(Q @ sol.W[k]).real)
    interf = float(np.trace(Q @ (sol.R_X - sol.W[k])).real)
    return sig / (interf + inst.sigmaC2)


def _achieved_sinr_beamformers(inst: ProblemInstance, sol: BeamformingSolution, k: int) -> float:
    h = inst.channels[k]
    sig = abs(np.vdot(h, sol.w[k])) ** 2
    interf = sum(abs(np.vdot(h, sol.w[i])) ** 2 for i in range(sol.K) if i != k)
    if sol.W_A_factor is not None:
        interf += float(np.linalg.norm(h.conj() @ sol.W_A_factor) ** 2)
    return float(sig / (interf + inst.sigmaC2))


def sinr(inst: ProblemInstance, sol: BeamformingSolution, k: int) -> float:
    """Achieved SINR of user k, recomputed from the solution matrices.

    Uses the covariance form tr(Q W_k) / (tr(Q (R_X - W_k)) + sigma_C^2);
    with beamformers present and covariances absent, falls back to the
    beamformer-level expression.
    """
    if not 0 <= k < sol.K:
        raise IndexError(f"user index {k} out of range for K={sol.K}")
    if sol.W.size:
        return _achieved_sinr_cov(inst, sol, k)
    return _achieved_sinr_beamformers(inst, sol, k)


def sum_rate(inst: ProblemInstance, sol: BeamformingSolution) -> float:
    """Total throughput sum_k log(1 + Gamma_k) in nats, at the declared SINRs."""
    return float(np.log1p(sol.Gamma).sum())


def _trace_inverse(R) -> float:
    w = np.linalg.eigvalsh(R)
    if w.min() <= 0:
        raise SingularCovariance(f"covariance not positive definite: lambda_min={w.min():.3e}")
    return float((1.0 / w).sum())


def crb(inst: ProblemInstance, sol: BeamformingSolution) -> float:
    """Estimation bound for the target response: (sigma_s^2 Nr / L) tr(R_X^-1)."""
    return inst.sigmaS2 * inst.Nr / inst.L * _trace_inverse(sol.R_X)


def objective(inst: ProblemInstance, sol: BeamformingSolution) -> float:
    """Design objective -sum_rate + rho * tr(R_X^-1).

    The sensing term is the bare trace of the inverse; the physically scaled
    bound is reported separately by ``crb``.
    """
    return -sum_rate(inst, sol) + inst.rho * _trace_inverse(sol.R_X)


def _finish(K, Nt, Nr, L, P_T, rho, seed, scenario, channels):
    return ProblemInstance(
        K=K, Nt=Nt, Nr=Nr, L=L, channels=channels, P_T=float(P_T),
        rho=float(rho), seed=seed, scenario=scenario,
    )


def gen_scenario1(K, Nt, Nr=16, L=16, P_T=1000.0, rho=1.0, seed=0) -> ProblemInstance:
    """i.i.d. unit-variance complex Gaussian channels."""
    rng = np.random.default_rng(seed)
    ch = (rng.standard_normal((K, Nt)) + 1j * rng.standard_normal((K, Nt))) / np.sqrt(2.0)
    return _finish(K, Nt, Nr, L, P_T, rho, seed, 1, ch)


def path_loss_db(d: float) -> float:
    """Distance-dependent path loss 32.6 + 36.7 log10(d) in dB (d in meters)."""
    return 32.6 + 36.7 * np.log10(d)


def gen_scenario2(K, Nt, Nr=16, L=16, P_T=1000.0, rho=1.0, seed=0) -> ProblemInstance:
    """Rayleigh-faded channels with users equally spaced from 50 m to 200 m.

    A single user sits at 50 m (the degenerate case of "equally spaced").
    """
    rng = np.random.default_rng(seed)
    if K == 1:
        dists = np.array([50.0])
    else:
        dists = np.linspace(50.0, 200.0, K)
    gains = dbm_to_linear(-path_loss_db(dists))  # linear amplitude^2 per entry
    g = (rng.standard_normal((K, Nt)) + 1j * rng.standard_normal((K, Nt))) / np.sqrt(2.0)
    ch = np.sqrt(gains)[:, None] * g
    return _finish(K, Nt, Nr, L, P_T, rho, seed, 2, ch)
