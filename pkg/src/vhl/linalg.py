"""Truncated SVD with oracle access, Procrustes alignment, spectral stats."""

import warnings
from dataclasses import dataclass

import numpy as np

DENSE_FALLBACK_ENTRIES = 200_000
SUBSPACE_TOL = 1e-8
SUBSPACE_MAX_ITERS = 50


@dataclass
class TruncatedSVD:
    U: np.ndarray        # (m, r), orthonormal columns
    S: np.ndarray        # (r,), non-increasing, >= 0
    V: np.ndarray        # (n, r), orthonormal columns
    converged: bool = True
    residual: float = 0.0


def truncated_svd(matvec, rmatvec, dims, r, seed=0, oversample=8, power_iters=10) -> TruncatedSVD:
    """Top-r singular triplet of a linear operator given product oracles.

    ``matvec(V)`` applies the operator to an (n, q) block, ``rmatvec(U)``
    applies the adjoint to an (m, q) block.  Small operators (below
    ``DENSE_FALLBACK_ENTRIES`` entries) are materialized and decomposed
    densely; larger ones use seeded randomized subspace iteration with the
    given oversampling, iterating past ``power_iters`` rounds until the
    subspace residual drops below 1e-8 (capped at 50 rounds, after which a
    warning is issued and the result is flagged unconverged).
    """
    m, n = dims
    if r < 1 or r > min(m, n):
        raise ValueError(f"r={r} out of range for dims {dims}")

    if m * n <= DENSE_FALLBACK_ENTRIES:
        A = matvec(np.eye(n, dtype=complex))
        U, S, Vh = np.linalg.svd(A, full_matrices=False)
        return TruncatedSVD(U=U[:, :r], S=S[:r], V=Vh[:r].conj().T)

    rng = np.random.default_rng(seed)
    q = min(r + oversample, min(m, n))
    sketch = rng.standard_normal((n, q)) + 1j * rng.standard_normal((n, q))
    Q, _ = np.linalg.qr(matvec(sketch))

    U = S = V = None
    residual = np.inf
    for it in range(SUBSPACE_MAX_ITERS):
        W, _ = np.linalg.qr(rmatvec(Q))
        Q, _ = np.linalg.qr(matvec(W))
        if it + 1 < power_iters:
            continue
        B = rmatvec(Q).conj().T                      # (q, n) = Q^H A
        Ub, S, Vh = np.linalg.svd(B, full_matrices=False)
        U = Q @ Ub
        V = Vh.conj().T
        # residual of the top-r triplets: ||A v_i - s_i u_i|| / s_1
        AV = matvec(V[:, :r])
        residual = float(np.linalg.norm(AV - U[:, :r] * S[:r], axis=0).max() / max(S[0], 1e-300))
        if residual <= SUBSPACE_TOL:
            return TruncatedSVD(U=U[:, :r], S=S[:r], V=V[:, :r])

    warnings.warn(f"randomized SVD subspace residual {residual:.2e} above "
                  f"{SUBSPACE_TOL} after {SUBSPACE_MAX_ITERS} rounds")
    return TruncatedSVD(U=U[:, :r], S=S[:r], V=V[:, :r], converged=False, residual=residual)


def dense_truncated_svd(A: np.ndarray, r: int) -> TruncatedSVD:
    """Rank-r truncation of an explicit matrix."""
    return truncated_svd(lambda V: A @ V, lambda U: A.conj().T @ U, A.shape, r)


def procrustes_distance(M: np.ndarray, Mref: np.ndarray) -> float:
    """min over unitary Q of ||M - Mref Q||_F.

    The minimizer is the polar factor of Mref^H M; Q ranges over complex
    unitary matrices since the factors are complex.
    """
    if M.shape != Mref.shape:
        raise ValueError(f"shape mismatch: {M.shape} vs {Mref.shape}")
    A, _, Bh = np.linalg.svd(Mref.conj().T @ M)
    Q = A @ Bh
    return float(np.linalg.norm(M - Mref @ Q))


def spectral_stats(S: np.ndarray):
    """(sigma_1, sigma_r, condition number) from a singular value list."""
    S = np.asarray(S, dtype=float)
    if S.size == 0 or np.any(S < 0):
        raise ValueError("need a non-empty list of non-negative singular values")
    s1, sr = float(S.max()), float(S.min())
    kappa = np.inf if sr == 0.0 else s1 / sr
    return s1, sr, kappa
