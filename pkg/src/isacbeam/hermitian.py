"""Complex Hermitian linear algebra kernel.

Small dense Hermitian matrices (channel outer products, transmit covariances)
are the working currency of every other module.  This module wraps the few
operations they need -- eigendecomposition sorted descending, PSD
factorization with tolerance-aware clipping, the real symmetric embedding,
and rank-one outer products -- with the error semantics the callers rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NotPSD",
    "EigenDecomposition",
    "outer",
    "hermitize",
    "eig",
    "psd_factor",
    "real_embed",
    "complete_basis",
]


class NotPSD(ValueError):
    """Matrix has an eigenvalue below the negative tolerance."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted descending with the matching orthonormal eigenvectors.

    ``vectors[:, i]`` is the eigenvector for ``values[i]``.
    """

    values: np.ndarray
    vectors: np.ndarray


def outer(h):
    """Rank-one Hermitian outer product h h^H of a complex vector."""
    h = np.asarray(h, dtype=complex)
    return np.outer(h, h.conj())


def hermitize(A):
    """Project a nearly-Hermitian array onto exact Hermitian symmetry."""
    A = np.asarray(A, dtype=complex)
    return 0.5 * (A + A.conj().T)


def eig(A) -> EigenDecomposition:
    """Eigendecompose a Hermitian matrix, eigenvalues descending.

    Raises a diagnostic RuntimeError if the underlying solver fails to
    converge (it does not at these sizes unless fed NaN/Inf).
    """
    A = np.asarray(A, dtype=complex)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise RuntimeError(f"Hermitian eigensolver failed to converge: {exc}") from exc
    order = np.argsort(w)[::-1]
    return EigenDecomposition(values=w[order], vectors=V[:, order])


def psd_factor(A, tol: float = 1e-9):
    """Factor a PSD matrix as A ~= F F^H, clipping eigenvalues in [-tol, 0).

    The factor keeps one column per eigenvalue (zero columns for clipped
    ones), so a rank-one input yields a single nonzero column.
    """
    dec = eig(A)
    lam_min = dec.values.min() if dec.values.size else 0.0
    if lam_min < -tol:
        raise NotPSD(f"matrix is not PSD within tolerance: lambda_min={lam_min:.3e} < -{tol:.1e}")
    clipped = np.clip(dec.values, 0.0, None)
    return dec.vectors * np.sqrt(clipped)[None, :]


def real_embed(A):
    """Real symmetric embedding [[Re A, -Im A], [Im A, Re A]] of a Hermitian A.

    The embedding has the same spectrum as A with every eigenvalue doubled in
    multiplicity, and twice the trace.
    """
    A = np.asarray(A, dtype=complex)
    re, im = A.real, A.imag
    return np.block([[re, -im], [im, re]])


def complete_basis(U0):
    """Extend orthonormal columns U0 (n x m) to a full unitary (n x n).

    The completion comes from pivoted double Gram-Schmidt over the standard
    basis: at each step the candidate with the largest residual is
    orthogonalized twice and appended.  The first m columns are U0 unchanged.
    """
    U0 = np.asarray(U0, dtype=complex)
    if U0.ndim == 1:
        U0 = U0[:, None]
    n, m = U0.shape
    G = U0.conj().T @ U0
    if np.linalg.norm(G - np.eye(m)) > 1e-8:
        raise ValueError("seed columns are not orthonormal")
    basis = [U0[:, j].copy() for j in range(m)]
    candidates = list(np.eye(n, dtype=complex))
    while len(basis) < n:
        best, best_norm = None, -1.0
        for cand in candidates:
            v = cand.copy()
            for b in basis:
                v -= np.vdot(b, v) * b
            nv = float(np.linalg.norm(v))
            if nv > best_norm:
                best, best_norm = v, nv
        v = best / best_norm
        for b in basis:  # second pass for numerical cleanliness
            v -= np.vdot(b, v) * b
        basis.append(v / np.linalg.norm(v))
    return np.stack(basis, axis=1)
