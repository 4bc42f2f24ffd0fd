"""Small dense linear-algebra helpers used by several modules."""

from __future__ import annotations

import numpy as np


def truncated_svd(Y: np.ndarray, r: int):
    """Thin SVD of ``Y`` truncated to ``min(r, *Y.shape)`` components.

    Signs are fixed so that the largest-magnitude entry of every left
    singular vector is positive (first such entry on ties).  The right
    singular vector is flipped together with it, so ``U @ diag(s) @ Vt``
    is unchanged.

    Returns
    -------
    U : (n, k) array
    s : (k,) array, non-increasing
    V : (t, k) array
    """
    Y = np.asarray(Y, dtype=float)
    k = min(r, *Y.shape)
    if k == 0:
        return (np.zeros((Y.shape[0], 0)), np.zeros(0), np.zeros((Y.shape[1], 0)))
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    U = U[:, :k].copy()
    V = Vt[:k].T.copy()
    s = s[:k].copy()
    fix_signs(U, V)
    return U, s, V


def fix_signs(U: np.ndarray, V: np.ndarray) -> None:
    """Flip column pairs of (U, V) in place so max-|.| entries of U are positive."""
    if U.size == 0:
        return
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    U *= signs
    V *= signs


def spectral_norm(A: np.ndarray, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value of ``A`` by power iteration on the smaller Gram matrix.

    Stops when the Rayleigh quotient changes by less than ``tol`` relative.
    The start vector is fixed so the result is deterministic.
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    G = A.T @ A if A.shape[1] <= A.shape[0] else A @ A.T
    v = np.random.default_rng(0).standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    # one last Rayleigh quotient with the converged vector
    lam = max(lam, float(v @ (G @ v)))
    return float(np.sqrt(max(lam, 0.0)))
