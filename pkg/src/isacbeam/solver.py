"""Self-contained barrier interior-point solver for the convex subproblems.

Two problems live here.  ``solve_mer`` minimizes the relaxed design objective

    -sum_k log(1 + Gamma_k) + rho * tr(T),   [[T, I], [I, R_X]] >= 0

over transmit/per-user covariances with the bilinear SINR constraint replaced
by its McCormick envelope on a given SINR box; its optimal value is a lower
bound for the exact problem restricted to that box.  ``solve_orthogonal``
solves the separable eigenvalue allocation that the problem reduces to when
channels are pairwise orthogonal.

The barrier method works on a scaled formulation (covariances divided by
P_T, SINRs by their root upper bound P_T*||h_k||^2/sigma_C^2, envelope
auxiliaries to the unit box) so that all quantities are O(1) regardless of
the power budget.  Degenerate box coordinates (lo_k = hi_k) are eliminated
by substitution because the envelope pinches to an equality there, which has
no barrier interior.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .closedform import ChannelsNotOrthogonal, check_orthogonal
from .envelope import Box, interference_caps
from .hermitian import complete_basis
from .model import BeamformingSolution, ProblemInstance

__all__ = [
    "InfeasibleBox",
    "NumericalFailure",
    "MerProblem",
    "RelaxationSolution",
    "solve_mer",
    "solve_orthogonal",
    "orthogonal_allocation",
    "hermitian_basis",
]

log = logging.getLogger(__name__)

DEGENERATE_WIDTH = 1e-12  # scaled box width below which the coordinate is fixed


class InfeasibleBox(RuntimeError):
    """The relaxation has no strictly feasible point on this box."""


class NumericalFailure(RuntimeError):
    """Barrier iteration failed to converge within its step budget."""


@lru_cache(maxsize=8)
def hermitian_basis(n: int):
    """Orthonormal (trace inner product) basis of n x n Hermitian matrices.

    Returns (B, tau): B has shape (n^2, n, n) with tr(B_q B_p) = delta_qp;
    tau[q] = tr(B_q).  Real coefficient vectors over this basis represent
    Hermitian matrices exactly.
    """
    mats = []
    for i in range(n):
        E = np.zeros((n, n), dtype=complex)
        E[i, i] = 1.0
        mats.append(E)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = E[j, i] = inv_sqrt2
            mats.append(E)
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n), dtype=complex)
            E[i, j] = -1j * inv_sqrt2
            E[j, i] = 1j * inv_sqrt2
            mats.append(E)
    B = np.stack(mats)
    tau = np.einsum("qii->q", B).real.copy()
    B.setflags(write=False)
    tau.setflags(write=False)
    return B, tau


def _coeffs(M: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Real coefficient vector of Hermitian M over the basis B."""
    return np.einsum("ab,qba->q", M, B).real


def _materialize(x: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Hermitian matrix from its real coefficient vector."""
    return np.einsum("q,qab->ab", x, B)


@dataclass(frozen=True)
class MerProblem:
    """Envelope relaxation data: instance, SINR box, interference caps b_k."""

    inst: ProblemInstance
    box: Box
    b: np.ndarray = None

    def __post_init__(self):
        if self.box.K != self.inst.K:
            raise ValueError("box dimension must match the number of users")
        b = self.b
        if b is None:
            b = interference_caps(self.inst)
        b = np.asarray(b, dtype=float)
        if b.shape != (self.inst.K,) or np.any(b <= 0):
            raise ValueError("need K positive interference caps")
        object.__setattr__(self, "b", b)


@dataclass
class RelaxationSolution:
    """Relaxation output: matrices, SINRs, auxiliaries, certified value.

    ``value`` is a certified lower bound on the exact problem restricted to
    the box: the barrier objective at the final iterate minus the duality
    margin 2*m*mu.  ``kkt_residual`` is that margin normalized by the
    objective scale.
    """

    R_X: np.ndarray
    W: np.ndarray
    Gamma: np.ndarray
    a: np.ndarray
    value: float
    kkt_residual: float
    T: np.ndarray = None
    raw_objective: float = 0.0
    mu: float = 0.0
    newton_steps: int = 0
    phase1_used: bool = False


# ---------------------------------------------------------------------------
# scaled problem layout


class _Layout:
    """Variable layout, constraint matrices, and barrier calculus."""

    def __init__(self, p: MerProblem):
        inst = p.inst
        self.inst = inst
        self.box = p.box
        n, K = inst.Nt, inst.K
        self.n, self.K = n, K
        n2 = n * n
        self.n2 = n2
        self.B, self.tau = hermitian_basis(n)
        self.P_T = inst.P_T
        self.s2 = inst.sigmaC2
        self.rho_t = inst.rho / inst.P_T
        self.gain = np.array([inst.channel_gain(k) for k in range(K)])
        self.g = inst.P_T * self.gain / inst.sigmaC2  # SINR scale per user
        self.bcap = np.asarray(p.b, dtype=float)
        self.ltil = p.box.lo / self.g
        self.util = p.box.hi / self.g
        width = self.util - self.ltil
        self.degenerate = width <= DEGENERATE_WIDTH
        self.nd = np.nonzero(~self.degenerate)[0]

        self.qhat = np.stack([
            _coeffs(np.outer(inst.channels[k], inst.channels[k].conj())
                    / self.gain[k], self.B)
            for k in range(K)
        ])

        self.r_sl = slice(0, n2)
        self.t_sl = slice(n2, 2 * n2)
        self.w_sl = [slice((2 + k) * n2, (3 + k) * n2) for k in range(K)]
        base = (2 + K) * n2
        self.gamma_idx = {}
        self.a_idx = {}
        for j, k in enumerate(self.nd):
            self.gamma_idx[int(k)] = base + 2 * j
            self.a_idx[int(k)] = base + 2 * j + 1
        self.N = base + 2 * len(self.nd)

        self.f_const = float(-np.sum(np.log1p(
            self.g[self.degenerate] * self.ltil[self.degenerate])))

        self._build_scalar_rows()
        # barrier parameter: scalar count plus complex LMI dimensions
        self.m = self.Dmat.shape[0] + K * n + n + 2 * n

    def _build_scalar_rows(self):
        rows, consts = [], []
        N = self.N

        def new_row():
            return np.zeros(N)

        d = new_row()  # power: 1 - tr(R_tilde) >= 0
        d[self.r_sl] = -self.tau
        rows.append(d)
        consts.append(1.0)

        for k in range(self.K):
            qh = self.qhat[k]
            l, u, g = self.ltil[k], self.util[k], self.g[k]
            if self.degenerate[k]:
                d = new_row()  # (1+g*l)*tr(QW) - g*l*tr(QR) - l >= 0
                d[self.w_sl[k]] = (1.0 + g * l) * qh
                d[self.r_sl] = -g * l * qh
                rows.append(d)
                consts.append(-l)
            else:
                gi, ai = self.gamma_idx[k], self.a_idx[k]
                d = new_row()  # rate: tr(QW) - Gamma - g*a >= 0
                d[self.w_sl[k]] = qh
                d[gi] = -1.0
                d[ai] = -g
                rows.append(d)
                consts.append(0.0)
                d = new_row()  # envelope lower: a - l*I >= 0
                d[ai] = 1.0
                d[self.r_sl] = -l * qh
                d[self.w_sl[k]] = l * qh
                rows.append(d)
                consts.append(0.0)
                d = new_row()  # envelope lower: a - u*I - Gamma + u >= 0
                d[ai] = 1.0
                d[self.r_sl] = -u * qh
                d[self.w_sl[k]] = u * qh
                d[gi] = -1.0
                rows.append(d)
                consts.append(u)
                d = new_row()  # envelope upper: u*I - a >= 0
                d[ai] = -1.0
                d[self.r_sl] = u * qh
                d[self.w_sl[k]] = -u * qh
                rows.append(d)
                consts.append(0.0)
                d = new_row()  # envelope upper: l*I + Gamma - l - a >= 0
                d[ai] = -1.0
                d[self.r_sl] = l * qh
                d[self.w_sl[k]] = -l * qh
                d[gi] = 1.0
                rows.append(d)
                consts.append(-l)
                d = new_row()  # box lower
                d[gi] = 1.0
                rows.append(d)
                consts.append(-l)
                d = new_row()  # box upper
                d[gi] = -1.0
                rows.append(d)
                consts.append(u)
            d = new_row()  # interference nonnegative: I >= 0
            d[self.r_sl] = qh
            d[self.w_sl[k]] = -qh
            rows.append(d)
            consts.append(0.0)
            d = new_row()  # interference cap: 1 - I >= 0
            d[self.r_sl] = -qh
            d[self.w_sl[k]] = qh
            rows.append(d)
            consts.append(1.0)

        Dmat = np.stack(rows)
        e = np.asarray(consts, dtype=float)
        norms = np.linalg.norm(Dmat, axis=1)
        self.Dmat = Dmat / norms[:, None]
        self.e = e / norms

    # -- matrix views -------------------------------------------------------

    def matrices(self, x):
        """(W (K,n,n), D, S, R, T) at the scaled point x."""
        n, n2 = self.n, self.n2
        wcoef = x[2 * n2:(2 + self.K) * n2].reshape(self.K, n2)
        W = np.einsum("kq,qab->kab", wcoef, self.B)
        R = _materialize(x[self.r_sl], self.B)
        T = _materialize(x[self.t_sl], self.B)
        D = R - W.sum(axis=0)
        S = np.zeros((2 * n, 2 * n), dtype=complex)
        S[:n, :n] = T
        S[:n, n:] = np.eye(n)
        S[n:, :n] = np.eye(n)
        S[n:, n:] = R
        return W, D, S, R, T

    def pack(self, R, T, W, gamma_til, a_hat):
        x = np.zeros(self.N)
        x[self.r_sl] = _coeffs(R, self.B)
        x[self.t_sl] = _coeffs(T, self.B)
        for k in range(self.K):
            x[self.w_sl[k]] = _coeffs(W[k], self.B)
        for k in self.nd:
            x[self.gamma_idx[k]] = gamma_til[k]
            x[self.a_idx[k]] = a_hat[k]
        return x

    def gamma_til_of(self, x):
        gt = self.ltil.copy()
        for k in self.nd:
            gt[k] = x[self.gamma_idx[k]]
        return gt

    def interference_til(self, x):
        """Scaled interference I_k/b_k = tr(Qhat_k (R - W_k)) for all k."""
        r = x[self.r_sl]
        return np.array([
            self.qhat[k] @ (r - x[self.w_sl[k]]) for k in range(self.K)
        ])

    # -- objective ----------------------------------------------------------

    def f(self, x):
        val = self.f_const + self.rho_t * (self.tau @ x[self.t_sl])
        for k in self.nd:
            val -= np.log1p(self.g[k] * x[self.gamma_idx[k]])
        return float(val)

    def f_grad(self, x, grad):
        grad[self.t_sl] += self.rho_t * self.tau
        for k in self.nd:
            gk = self.g[k]
            grad[self.gamma_idx[k]] += -gk / (1.0 + gk * x[self.gamma_idx[k]])

    def f_hess(self, x, H):
        for k in self.nd:
            gk = self.g[k]
            gi = self.gamma_idx[k]
            H[gi, gi] += gk * gk / (1.0 + gk * x[gi]) ** 2

    def true_objective(self, x):
        """Exact objective at the iterate: -sum log(1+Gamma) + rho*tr(R_X^-1).

        Uses the real trace of the inverse (not the epigraph variable), so it
        never exceeds the barrier objective; the repaired feasible value at
        the same point always dominates it.
        """
        _, _, _, R, _ = self.matrices(x)
        ev = np.linalg.eigvalsh(R)
        if ev.min() <= 0:
            return np.inf
        gt = self.gamma_til_of(x)
        return float(-np.sum(np.log1p(self.g * gt))
                     + self.rho_t * np.sum(1.0 / ev))

    # -- barrier calculus ---------------------------------------------------

    def slacks(self, x):
        return self.Dmat @ x + self.e

    def barrier_value(self, x):
        """phi(x), or None if x is not strictly feasible."""
        s = self.slacks(x)
        if s.min() <= 0:
            return None
        phi = -np.sum(np.log(s))
        W, D, S, _, _ = self.matrices(x)
        for M in [*W, D, S]:
            try:
                L = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                return None
            phi -= 2.0 * np.sum(np.log(np.diag(L).real))
        return float(phi)

    def lmi_terms(self, W, D, S, grad, H, *, include_S=True):
        """Add gradient and Hessian of the log-det barriers (weight 1)."""
        B = self.B
        n = self.n
        for k in range(self.K):
            Minv = np.linalg.inv(W[k])
            C = np.matmul(Minv, B)
            grad[self.w_sl[k]] -= np.einsum("qaa->q", C).real
            Hc = np.einsum("qab,pba->qp", C, C).real
            H[self.w_sl[k], self.w_sl[k]] += Hc
        Dinv = np.linalg.inv(D)
        C = np.matmul(Dinv, B)
        gd = np.einsum("qaa->q", C).real
        Hd = np.einsum("qab,pba->qp", C, C).real
        grad[self.r_sl] -= gd
        H[self.r_sl, self.r_sl] += Hd
        for k in range(self.K):
            grad[self.w_sl[k]] += gd
            H[self.r_sl, self.w_sl[k]] -= Hd
            H[self.w_sl[k], self.r_sl] -= Hd
            for j in range(self.K):
                H[self.w_sl[k], self.w_sl[j]] += Hd
        if not include_S:
            return
        Sinv = np.linalg.inv(S)
        P, Y, V = Sinv[:n, :n], Sinv[:n, n:], Sinv[n:, n:]
        CP = np.matmul(P, B)
        CV = np.matmul(V, B)
        C1 = np.matmul(Y.conj().T, B)
        C2 = np.matmul(Y, B)
        grad[self.t_sl] -= np.einsum("qaa->q", CP).real
        grad[self.r_sl] -= np.einsum("qaa->q", CV).real
        H[self.t_sl, self.t_sl] += np.einsum("qab,pba->qp", CP, CP).real
        H[self.r_sl, self.r_sl] += np.einsum("qab,pba->qp", CV, CV).real
        Htr = np.einsum("qab,pba->qp", C1, C2).real
        H[self.t_sl, self.r_sl] += Htr
        H[self.r_sl, self.t_sl] += Htr.T

    def lmi_deltas(self, dx, *, include_S=True):
        """Delta matrices of each LMI along the step dx (same order)."""
        n, n2 = self.n, self.n2
        wd = dx[2 * n2:(2 + self.K) * n2].reshape(self.K, n2)
        dW = np.einsum("kq,qab->kab", wd, self.B)
        dR = _materialize(dx[self.r_sl], self.B)
        dD = dR - dW.sum(axis=0)
        if not include_S:
            return [*dW, dD]
        dT = _materialize(dx[self.t_sl], self.B)
        dS = np.zeros((2 * n, 2 * n), dtype=complex)
        dS[:n, :n] = dT
        dS[n:, n:] = dR
        return [*dW, dD, dS]


# ---------------------------------------------------------------------------
# Newton machinery (shared by the main solve and phase 1)


def _newton_system(layout: _Layout, x, mu, *, phase1_row=None):
    """Gradient and Hessian of f + mu*phi at x.

    With phase1_row=(D1, e1), the problem is the phase-1 one: variables are
    (x, tau) with objective -tau, scalar rows D1, and LMIs on the x part.
    """
    if phase1_row is None:
        N = layout.N
        grad = np.zeros(N)
        H = np.zeros((N, N))
        layout.f_grad(x, grad)
        layout.f_hess(x, H)
        s = layout.Dmat @ x + layout.e
        inv_s = 1.0 / s
        grad -= mu * (layout.Dmat.T @ inv_s)
        H += mu * (layout.Dmat.T * inv_s ** 2) @ layout.Dmat
        gl = np.zeros(N)
        Hl = np.zeros((N, N))
        W, D, S, _, _ = layout.matrices(x)
        layout.lmi_terms(W, D, S, gl, Hl)
        grad += mu * gl
        H += mu * Hl
        return grad, H
    D1, e1 = phase1_row
    N1 = D1.shape[1]
    grad = np.zeros(N1)
    H = np.zeros((N1, N1))
    grad[-1] = -1.0  # objective -tau
    s = D1 @ x + e1
    inv_s = 1.0 / s
    grad -= mu * (D1.T @ inv_s)
    H += mu * (D1.T * inv_s ** 2) @ D1
    gl = np.zeros(layout.N)
    Hl = np.zeros((layout.N, layout.N))
    W, D, S, _, _ = layout.matrices(x[:-1])
    # phase 1 drops the epigraph LMI (it never constrains feasibility, and
    # without tr(T) in the objective its barrier is unbounded); the T block
    # is pinned with an identity Hessian so the Newton step leaves it alone
    layout.lmi_terms(W, D, S, gl, Hl, include_S=False)
    Hl[layout.t_sl, layout.t_sl] += np.eye(layout.n2)
    grad[:-1] += mu * gl
    H[:-1, :-1] += mu * Hl
    return grad, H


def _barrier_F(layout: _Layout, x, mu, *, phase1_row=None):
    """f + mu*phi, or None when x is outside the barrier domain."""
    if phase1_row is None:
        phi = layout.barrier_value(x)
        if phi is None:
            return None
        return layout.f(x) + mu * phi
    D1, e1 = phase1_row
    s = D1 @ x + e1
    if s.min() <= 0:
        return None
    phi = -np.sum(np.log(s))
    W, D, _, _, _ = layout.matrices(x[:-1])
    for M in [*W, D]:
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            return None
        phi -= 2.0 * np.sum(np.log(np.diag(L).real))
    return -x[-1] + mu * phi


def _max_feasible_step(layout: _Layout, x, dx, *, phase1_row=None):
    """Largest step keeping all constraints strictly feasible (0.99 backoff)."""
    phase1 = phase1_row is not None
    if phase1:
        Dm, e = phase1_row
        x_m, dx_m = x[:-1], dx[:-1]
    else:
        Dm, e = layout.Dmat, layout.e
        x_m, dx_m = x, dx
    s = Dm @ x + e
    ds = Dm @ dx
    cap = np.inf
    neg = ds < 0
    if neg.any():
        cap = np.min(s[neg] / -ds[neg])
    W, D, S, _, _ = layout.matrices(x_m)
    mats = [*W, D] if phase1 else [*W, D, S]
    deltas = layout.lmi_deltas(dx_m, include_S=not phase1)
    for M, dM in zip(mats, deltas):
        L = np.linalg.cholesky(M)
        X = np.linalg.solve(L, dM)
        A = np.linalg.solve(L, X.conj().T).conj().T
        wmin = np.linalg.eigvalsh(A).min()
        if wmin < 0:
            cap = min(cap, 1.0 / -wmin)
    return min(1.0, 0.99 * cap)


def _center(layout: _Layout, x, mu, *, phase1_row=None, max_steps=80,
            decrement_tol=None):
    """Damped Newton to approximate centrality at fixed mu."""
    if decrement_tol is None:
        m_here = layout.m + (1 if phase1_row is not None else 0)
        decrement_tol = max(1e-2 * m_here * mu, 1e-13)
    steps = 0
    for _ in range(max_steps):
        grad, H = _newton_system(layout, x, mu, phase1_row=phase1_row)
        try:
            dx = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            H = H + (1e-10 * np.trace(H) / H.shape[0]) * np.eye(H.shape[0])
            dx = np.linalg.solve(H, -grad)
        lam2 = float(-grad @ dx)
        if lam2 < 0:  # indefiniteness from roundoff: regularize and retry
            H = H + (1e-8 * np.abs(np.trace(H)) / H.shape[0] + 1e-12) \
                * np.eye(H.shape[0])
            dx = np.linalg.solve(H, -grad)
            lam2 = float(-grad @ dx)
            if lam2 < 0:
                raise NumericalFailure("Newton system lost positive curvature")
        if 0.5 * lam2 <= decrement_tol:
            return x, steps
        alpha = _max_feasible_step(layout, x, dx, phase1_row=phase1_row)
        F0 = _barrier_F(layout, x, mu, phase1_row=phase1_row)
        slope = float(grad @ dx)
        for _ in range(60):
            cand = x + alpha * dx
            Fc = _barrier_F(layout, cand, mu, phase1_row=phase1_row)
            if Fc is not None and Fc <= F0 + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        else:
            raise NumericalFailure("line search failed to make progress")
        x = x + alpha * dx
        steps += 1
    raise NumericalFailure(f"centering exceeded {max_steps} Newton steps")


# ---------------------------------------------------------------------------
# starting points


def _cold_matrices(layout: _Layout):
    n, K = layout.n, layout.K
    R = (0.9 / n) * np.eye(n, dtype=complex)
    delta = 0.9 / (20.0 * K * (n + 1))
    Qh = [_materialize(layout.qhat[k], layout.B) for k in range(K)]
    W = np.stack([delta * (Qh[k] + np.eye(n)) for k in range(K)])
    T = 1.5 * (n / 0.9) * np.eye(n, dtype=complex)
    return R, T, W


def _choose_gamma_a(layout: _Layout, x, *, margin_frac=0.1):
    """Pick interior Gamma/a coordinates given the matrix part of x.

    Returns the adjusted x, or None when no strictly feasible choice exists
    at these matrices.
    """
    x = x.copy()
    Itil = layout.interference_til(x)
    if np.any(Itil <= 0) or np.any(Itil >= 1):
        return None
    for k in layout.nd:
        l, u, g = layout.ltil[k], layout.util[k], layout.g[k]
        sig = float(layout.qhat[k] @ x[layout.w_sl[k]])  # tr(Qhat W)
        w = u - l
        # rate budget: Gamma + g*a must stay below sig
        gamma = l + min(0.25 * w, max(0.3 * max(sig - l, 0.0), 1e-10 * w))
        gamma = min(gamma, u - 1e-12 * max(1.0, u))
        if gamma <= l:
            gamma = l + 1e-14 * max(w, 1e-6)
        I = Itil[k]
        a_lo = max(l * I, u * I + gamma - u)
        a_hi = min(u * I, l * I + gamma - l)
        if a_hi <= a_lo:
            return None
        budget = sig - gamma - g * a_lo
        if budget <= 0:
            return None
        a = a_lo + min(margin_frac * (a_hi - a_lo), 0.3 * budget / g)
        x[layout.gamma_idx[k]] = gamma
        x[layout.a_idx[k]] = a
    s = layout.slacks(x)
    if s.min() <= 0:
        return None
    return x


def _boost_W(layout: _Layout, x, gamma_target=None):
    """Raise tr(Qhat_k W_k) where the rate row starves, keeping LMIs PD.

    ``gamma_target`` (scaled, per user) defaults to the box lower edge; the
    warm path passes its clipped SINRs so the boost covers those instead.
    """
    x = x.copy()
    for _ in range(4):
        Itil = layout.interference_til(x)
        changed = False
        for k in range(layout.K):
            l, u, g = layout.ltil[k], layout.util[k], layout.g[k]
            sig = float(layout.qhat[k] @ x[layout.w_sl[k]])
            if layout.degenerate[k]:
                need = l + g * l * Itil[k] - sig
            else:
                gamma_min = l if gamma_target is None \
                    else float(gamma_target[k])
                a_min = max(l * Itil[k], u * Itil[k] + gamma_min - u)
                need = gamma_min + g * a_min - sig
            if need <= 0:
                continue
            beta = (need * 1.5 + 1e-9) / (1.0 + g * l)
            # keep the interference strictly positive and D strictly PD
            beta = min(beta, 0.8 * Itil[k])
            W, D, _, _, _ = layout.matrices(x)
            Qh = _materialize(layout.qhat[k], layout.B)
            dmin = np.linalg.eigvalsh(D - beta * Qh).min()
            if dmin <= 0:
                beta = min(beta, 0.5 * float(np.linalg.eigvalsh(D).min()))
                dmin = np.linalg.eigvalsh(D - beta * Qh).min()
                if dmin <= 0 or beta <= 0:
                    continue
            x[layout.w_sl[k]] += beta * layout.qhat[k]
            changed = True
        if not changed:
            break
    return x


def _warm_point(layout: _Layout, warm: RelaxationSolution):
    """Scaled starting point from a previous solution; None if unusable."""
    P_T = layout.P_T
    R = np.asarray(warm.R_X, dtype=complex) / P_T
    W = np.asarray(warm.W, dtype=complex) / P_T
    if warm.T is not None:
        T = np.asarray(warm.T, dtype=complex) * P_T
    else:
        T = 1.001 * np.linalg.inv(R)
    gamma_til = np.asarray(warm.Gamma, dtype=float) / layout.g
    x = layout.pack(R, T, W, np.zeros(layout.K), np.zeros(layout.K))
    # clip SINRs into the box with a 2% interior margin
    gt = gamma_til.copy()
    for k in layout.nd:
        l, u = layout.ltil[k], layout.util[k]
        wdt = u - l
        gt[k] = min(max(gt[k], l + 0.02 * wdt), u - 0.02 * wdt)
        x[layout.gamma_idx[k]] = gt[k]
    x = _boost_W(layout, x, gamma_target=gt)
    # recompute the envelope auxiliaries at the (possibly boosted) matrices
    cand = _choose_gamma_a_warm(layout, x, gt)
    if cand is None:
        return None
    if layout.barrier_value(cand) is None:
        return None
    return cand


def _choose_gamma_a_warm(layout: _Layout, x, gamma_til):
    x = x.copy()
    Itil = layout.interference_til(x)
    if np.any(Itil <= 0) or np.any(Itil >= 1):
        return None
    for k in layout.nd:
        l, u, g = layout.ltil[k], layout.util[k], layout.g[k]
        gamma = gamma_til[k]
        sig = float(layout.qhat[k] @ x[layout.w_sl[k]])
        I = Itil[k]
        lo_edge = l + 0.02 * (u - l)
        # rate budget sig - gamma - g*a_floor(gamma) must stay positive; a
        # parent whose rate row was active leaves none, so walk gamma down
        # (the box permitting) until a small margin reappears
        target = 0.02 * (1e-6 + abs(sig))
        a_floor = max(l * I, u * I + gamma - u)
        if sig - gamma - g * a_floor < target:
            gamma_a = sig - g * l * I - target
            if gamma_a <= u - (u - l) * I:
                gamma = min(gamma, gamma_a)
            else:
                gamma = min(gamma, (sig + g * (u - u * I) - target) / (1 + g))
            if gamma < lo_edge:
                return None
        a_lo = max(l * I, u * I + gamma - u)
        a_hi = min(u * I, l * I + gamma - l)
        if a_hi <= a_lo:
            return None
        # stay below the rate row while inside the envelope window
        a_cap = (sig - gamma) / g
        if a_cap <= a_lo:
            return None
        hi = min(a_hi, a_cap)
        a = a_lo + 0.5 * (hi - a_lo)
        x[layout.gamma_idx[k]] = gamma
        x[layout.a_idx[k]] = a
    if layout.slacks(x).min() <= 0:
        return None
    return x


def _phase1(layout: _Layout, x_lmi):
    """Find a strictly feasible point by maximizing the worst slack margin.

    Raises InfeasibleBox when the maximum margin is certified negative.
    """
    m_s, N = layout.Dmat.shape
    D1 = np.zeros((m_s + 1, N + 1))
    D1[:m_s, :N] = layout.Dmat
    D1[:m_s, N] = -1.0
    D1[m_s, N] = -1.0  # cap: 1 - tau >= 0
    e1 = np.concatenate([layout.e, [1.0]])
    s0 = layout.slacks(x_lmi)
    tau0 = float(s0.min() - 0.1 * (1.0 + abs(s0.min())))
    y = np.concatenate([x_lmi, [tau0]])
    # barrier parameter without the dropped epigraph LMI, plus the cap row
    m1 = layout.Dmat.shape[0] + 1 + layout.K * layout.n + layout.n
    mu = (1.0 + abs(tau0)) / m1
    total = 0
    for _ in range(90):
        y, steps = _center(layout, y, mu, phase1_row=(D1, e1))
        total += steps
        tau = float(y[-1])
        if tau > 1e-6:
            log.debug("phase 1 found margin %.3e in %d steps", tau, total)
            return _restore_T(layout, y[:-1])
        if tau + 2.0 * m1 * mu < 1e-12:
            raise InfeasibleBox(
                f"no strictly feasible point: margin bound {tau + 2 * m1 * mu:.3e}")
        if mu < 1e-16:
            if tau > 0:
                return _restore_T(layout, y[:-1])
            raise InfeasibleBox("phase 1 margin nonpositive at mu floor")
        mu /= 5.0
    raise NumericalFailure("phase 1 exceeded its outer iteration budget")


def _restore_T(layout: _Layout, x):
    """Reset the epigraph block to a strictly feasible T = 1.001 * R^-1."""
    x = x.copy()
    _, _, _, R, _ = layout.matrices(x)
    x[layout.t_sl] = _coeffs(1.001 * np.linalg.inv(R), layout.B)
    return x


def _starting_point(layout: _Layout, warm):
    if warm is not None:
        x = _warm_point(layout, warm)
        if x is not None:
            mu0 = max(warm.mu * 125.0, 1e-14)
            return x, mu0, False
    R, T, W = _cold_matrices(layout)
    x_lmi = layout.pack(R, T, W, layout.ltil + 1e-3, np.full(layout.K, 1e-3))
    x = _choose_gamma_a(layout, _boost_W(layout, x_lmi))
    if x is not None and layout.barrier_value(x) is not None:
        mu0 = (1.0 + abs(layout.f(x))) / layout.m
        return x, mu0, False
    x = _phase1(layout, x_lmi)
    mu0 = (1.0 + abs(layout.f(x))) / layout.m
    return x, mu0, True


# ---------------------------------------------------------------------------
# main entry points


def _package(layout: _Layout, x, mu, steps, phase1_used):
    W, D, S, R, T = layout.matrices(x)
    P_T = layout.P_T
    R_X = R * P_T
    Wout = W * P_T
    gt = layout.gamma_til_of(x)
    Gamma = layout.g * gt
    Gamma[layout.degenerate] = layout.box.lo[layout.degenerate]
    Itil = layout.interference_til(x)
    a = np.empty(layout.K)
    for k in range(layout.K):
        if layout.degenerate[k]:
            a[k] = layout.box.lo[k] * Itil[k] * layout.bcap[k]
        else:
            a[k] = layout.g[k] * layout.bcap[k] * x[layout.a_idx[k]]
    f_ev = layout.true_objective(x)
    margin = 2.0 * layout.m * mu
    return RelaxationSolution(
        R_X=R_X, W=Wout, Gamma=Gamma, a=a,
        value=f_ev - margin,
        kkt_residual=margin / (1.0 + abs(f_ev)),
        T=T / P_T,
        raw_objective=f_ev,
        mu=mu,
        newton_steps=steps,
        phase1_used=phase1_used,
    )


def solve_mer(p: MerProblem, tol: float = 1e-7,
              warm: RelaxationSolution | None = None) -> RelaxationSolution:
    """Solve the envelope relaxation on a box to relative accuracy tol.

    The returned ``value`` is a certified lower bound for the exact problem
    restricted to the box and lies within tol*(1+|value|) of the relaxation
    optimum.  ``warm`` (a solution of a related box, e.g. the parent node's)
    accelerates the solve; it is validated and silently discarded if not
    strictly feasible here.
    """
    layout = _Layout(p)
    try:
        x, mu, phase1_used = _starting_point(layout, warm)
    except NumericalFailure:
        if warm is None:
            raise
        x, mu, phase1_used = _starting_point(layout, None)
    total = 0
    last_good = None  # (x, mu) of the deepest completed centering stage
    for _ in range(80):
        try:
            x, steps = _center(layout, x, mu)
        except NumericalFailure:
            if warm is not None:
                # warm trajectory went bad: restart cold once
                warm = None
                x, mu, phase1_used = _starting_point(layout, None)
                x, steps = _center(layout, x, mu)
            elif last_good is not None:
                # deep centering stalled on an ill-conditioned box; the last
                # completed stage still carries a valid (looser) certificate
                log.warning("centering stalled at mu=%.2e; returning the "
                            "certificate from mu=%.2e", mu, last_good[1])
                return _package(layout, last_good[0], last_good[1], total,
                                phase1_used)
            else:
                raise
        total += steps
        last_good = (x, mu)
        f_ev = layout.true_objective(x)
        if 2.0 * layout.m * mu <= tol * (1.0 + abs(f_ev)):
            return _package(layout, x, mu, total, phase1_used)
        if total > 2000:
            log.warning("Newton step budget exhausted at mu=%.2e; returning "
                        "its certificate", mu)
            return _package(layout, x, mu, total, phase1_used)
        mu /= 5.0
    raise NumericalFailure("barrier exceeded its outer iteration budget")


# ---------------------------------------------------------------------------
# orthogonal-channel fast path


def _lambda_of_nu(c: float, rho: float, nu: float) -> float:
    """Solve c/(1+c*lam) + rho/lam^2 = nu for lam > 0 (LHS is decreasing)."""
    hi = 1.0
    while c / (1.0 + c * hi) + rho / hi ** 2 > nu:
        hi *= 2.0
        if hi > 1e300:
            return np.inf
    lo = 0.5 * hi
    while c / (1.0 + c * lo) + rho / lo ** 2 < nu:
        lo *= 0.5
        if lo < 1e-150:  # LHS ~ rho/lo^2 has certainly exceeded nu by now
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if c / (1.0 + c * mid) + rho / mid ** 2 > nu:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * hi:
            break
    return 0.5 * (lo + hi)


def orthogonal_allocation(inst: ProblemInstance):
    """Optimal eigenvalues for pairwise-orthogonal channels.

    Returns (lam (Nt,), Gamma (K,), kkt_residual).  The first K eigenvalues
    ride the user directions; the rest are free sensing directions.
    """
    K, Nt, rho = inst.K, inst.Nt, inst.rho
    if K > Nt:
        raise ValueError("orthogonal channels require K <= Nt")
    c = np.array([inst.channel_gain(k) / inst.sigmaC2 for k in range(K)])
    P_T = inst.P_T

    def total(nu):
        lam = np.array([_lambda_of_nu(ck, rho, nu) for ck in c])
        free = np.sqrt(rho / nu)
        return lam.sum() + (Nt - K) * free, lam, free

    nu_lo, nu_hi = 1e-12, 1e12
    while total(nu_lo)[0] < P_T:
        nu_lo *= 1e-3
    while total(nu_hi)[0] > P_T:
        nu_hi *= 1e3
    for _ in range(200):
        nu = np.sqrt(nu_lo * nu_hi)  # bisection in log space
        tot, lam_u, free = total(nu)
        if tot > P_T:
            nu_lo = nu
        else:
            nu_hi = nu
        if nu_hi - nu_lo <= 1e-15 * nu_hi:
            break
    nu = np.sqrt(nu_lo * nu_hi)
    tot, lam_u, free = total(nu)
    lam = np.concatenate([lam_u, np.full(Nt - K, free)])
    lam *= P_T / lam.sum()  # exact power equality
    Gamma = c * lam[:K]
    # stationarity spread across coordinates
    nus = np.concatenate([
        c / (1.0 + c * lam[:K]) + rho / lam[:K] ** 2,
        rho / lam[K:] ** 2,
    ])
    kkt = float((nus.max() - nus.min()) / nus.max())
    return lam, Gamma, kkt


def solve_orthogonal(inst: ProblemInstance) -> BeamformingSolution:
    """Optimal beamforming when channels are pairwise orthogonal.

    The transmit covariance is diagonal in the basis formed by the normalized
    channels plus an orthonormal completion; each user's covariance is the
    rank-one slice on its own channel, so inter-user interference is exactly
    zero and every declared SINR is achieved.
    """
    if not check_orthogonal(inst):
        raise ChannelsNotOrthogonal(
            "channels are not pairwise orthogonal within 1e-8")
    lam, Gamma, kkt = orthogonal_allocation(inst)
    if kkt > 1e-6:
        log.warning("orthogonal allocation stationarity spread %.2e", kkt)
    K, Nt = inst.K, inst.Nt
    U0 = np.stack([inst.channels[k] / np.linalg.norm(inst.channels[k])
                   for k in range(K)], axis=1)
    U = complete_basis(U0)
    R_X = (U * lam[None, :]) @ U.conj().T
    W = np.stack([lam[k] * np.outer(U[:, k], U[:, k].conj())
                  for k in range(K)])
    return BeamformingSolution(R_X=R_X, W=W, Gamma=Gamma)
