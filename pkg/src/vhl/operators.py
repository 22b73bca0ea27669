"""The vectorized Hankel lift and FFT-fast products against its factors.

The lift H maps an (s, n) matrix X to the (s*n1, n2) block-Hankel matrix
whose block (i, j) is the signal column x_{i+j}, with n1 + n2 = n + 1.
Column j of X is copied into w_j = min(j+1, n1, n2, n-j) cells of the lift,
which makes H*H the diagonal column scaling by w and gives the pseudo-inverse
H^+ = (H*H)^{-1} H* in closed form.  The measurement map A and its adjoint
use the convention <A, B> = trace(A^H B), so (A X)_j = b_j^H x_j and
A*(z) has columns z_j b_j.

All products against low-rank factors (L of shape (s*n1, r), R of shape
(n2, r)) are evaluated as batched length-n convolutions or correlations via
FFT, never materializing the lifted matrix; cost O(s r n log n).
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HankelShape:
    """Dimensions of the lift: (s, n) signal, (s*n1, n2) lifted matrix."""

    n: int
    s: int
    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1 or self.n1 + self.n2 != self.n + 1:
            raise ValueError(f"need n1, n2 >= 1 with n1 + n2 = n + 1, got {self}")
        if self.s < 1:
            raise ValueError("s must be >= 1")

    @classmethod
    def default(cls, n: int, s: int) -> "HankelShape":
        # n1 = n/2 for even n, the square-most split (n+1)//2 for odd n
        n1 = (n + 1) // 2
        return cls(n=n, s=s, n1=n1, n2=n + 1 - n1)

    @property
    def lifted_shape(self):
        return (self.s * self.n1, self.n2)


def _fft_len(n: int) -> int:
    # next power of two >= n
    return 1 << (n - 1).bit_length()


def multiplicities(shape: HankelShape) -> np.ndarray:
    """Integer weights w_j: how many lifted cells hold a copy of column j."""
    j = np.arange(shape.n)
    return np.minimum.reduce([j + 1, np.full(shape.n, shape.n1),
                              np.full(shape.n, shape.n2), shape.n - j])


def _check_signal(X, shape):
    if X.shape != (shape.s, shape.n):
        raise ValueError(f"signal must have shape ({shape.s}, {shape.n}), got {X.shape}")


def _check_lifted(Y, shape):
    if Y.shape != shape.lifted_shape:
        raise ValueError(f"lifted matrix must have shape {shape.lifted_shape}, got {Y.shape}")


def lifted_view(X: np.ndarray, shape: HankelShape) -> np.ndarray:
    """Read-only (n1, s, n2) strided view onto H(X): entry (i, l, j) = X[l, i+j]."""
    _check_signal(X, shape)
    X = np.ascontiguousarray(X)
    sr, sc = X.strides
    return np.lib.stride_tricks.as_strided(
        X, shape=(shape.n1, shape.s, shape.n2), strides=(sc, sr, sc), writeable=False)


def hankel_lift(X: np.ndarray, shape: HankelShape) -> np.ndarray:
    """Materialize H(X); block (i, j) of the output is column x_{i+j}."""
    view = lifted_view(np.asarray(X, dtype=complex), shape)
    return view.reshape(shape.s * shape.n1, shape.n2)


def hankel_adjoint(Y: np.ndarray, shape: HankelShape) -> np.ndarray:
    """H*(Y): column j is the sum of all lifted cells with block + column = j."""
    _check_lifted(Y, shape)
    s, n1, n2 = shape.s, shape.n1, shape.n2
    out = np.zeros((s, shape.n), dtype=complex)
    for i in range(n1):
        out[:, i:i + n2] += Y[i * s:(i + 1) * s, :]
    return out


def hankel_pinv(Y: np.ndarray, shape: HankelShape) -> np.ndarray:
    """H^+(Y) = (H*H)^{-1} H*(Y): anti-diagonal block averages."""
    return hankel_adjoint(Y, shape) / multiplicities(shape)


def measure(B: np.ndarray, X: np.ndarray) -> np.ndarray:
    """A(X): y_j = b_j^H x_j."""
    n, s = B.shape
    if X.shape != (s, n):
        raise ValueError(f"signal must have shape ({s}, {n}), got {X.shape}")
    return np.sum(np.conj(B.T) * X, axis=0)


def measure_adjoint(z: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A*(z): column j is z_j b_j, adjoint of A under <A,B> = trace(A^H B)."""
    n, s = B.shape
    if z.shape != (n,):
        raise ValueError(f"z must have length {n}, got shape {z.shape}")
    return B.T * z[None, :]


def weighted_lift_of_adjoint(z: np.ndarray, B: np.ndarray, shape: HankelShape) -> np.ndarray:
    """H(D^{-2} A*(z)), with D^{-2} dividing column j by w_j.

    D is the diagonal column scaling by sqrt(w_j), so H D^{-2} = H (H*H)^{-1}
    and composing with H* recovers A*(z) exactly.
    """
    C = measure_adjoint(z, B) / multiplicities(shape)
    return hankel_lift(C, shape)


def _blocks(L: np.ndarray, shape: HankelShape) -> np.ndarray:
    # view of L as (n1, s, r): block i of L is L3[i]
    r = L.shape[1]
    return L.reshape(shape.n1, shape.s, r)


def fast_factor_adjoint(L: np.ndarray, R: np.ndarray, shape: HankelShape) -> np.ndarray:
    """H*(L R^H) without forming L R^H, shape (s, n).

    Column j collects sum_{i+k=j} L_i (row k of R)^H, one length-n
    convolution per (signal row, rank) pair, batched through the FFT.
    """
    _check_factors(L, R, shape)
    N = _fft_len(shape.n)
    FL = np.fft.fft(_blocks(L, shape), n=N, axis=0)          # (N, s, r)
    FR = np.fft.fft(np.conj(R), n=N, axis=0)                 # (N, r)
    prod = np.einsum("nsr,nr->ns", FL, FR)
    return np.fft.ifft(prod, axis=0)[:shape.n].T


def fast_lift_times_factor(X: np.ndarray, R: np.ndarray, shape: HankelShape) -> np.ndarray:
    """H(X) @ R without forming H(X), shape (s*n1, r).

    Block i is sum_j x_{i+j} (row j of R): a correlation of each signal row
    with each factor column, batched through the FFT.
    """
    _check_signal(X, shape)
    if R.shape[0] != shape.n2:
        raise ValueError(f"R must have {shape.n2} rows, got {R.shape[0]}")
    N = _fft_len(shape.n)
    FX = np.fft.fft(X, n=N, axis=1)                          # (s, N)
    FR = np.conj(np.fft.fft(np.conj(R), n=N, axis=0))        # (N, r)
    core = np.einsum("sn,nr->nsr", FX, FR)
    out = np.fft.ifft(core, axis=0)[:shape.n1]               # (n1, s, r)
    return out.reshape(shape.n1 * shape.s, R.shape[1])


def fast_lift_adjoint_times_factor(X: np.ndarray, L: np.ndarray, shape: HankelShape) -> np.ndarray:
    """H(X)^H @ L without forming H(X), shape (n2, r).

    Row k is sum_i (x_{i+k})^H (block i of L); the conjugated-signal
    correlations reuse the same FFT batching as the forward product.
    """
    _check_signal(X, shape)
    if L.shape[0] != shape.s * shape.n1:
        raise ValueError(f"L must have {shape.s * shape.n1} rows, got {L.shape[0]}")
    N = _fft_len(shape.n)
    FX = np.fft.fft(np.conj(X), n=N, axis=1)                 # (s, N)
    FL = np.conj(np.fft.fft(np.conj(_blocks(L, shape)), n=N, axis=0))  # (N, s, r)
    prod = np.einsum("sn,nsr->nr", FX, FL)
    return np.fft.ifft(prod, axis=0)[:shape.n2]


def _check_factors(L, R, shape):
    if L.ndim != 2 or R.ndim != 2 or L.shape[1] != R.shape[1]:
        raise ValueError("L and R must be 2-d with a common rank")
    if L.shape[0] != shape.s * shape.n1:
        raise ValueError(f"L must have {shape.s * shape.n1} rows, got {L.shape[0]}")
    if R.shape[0] != shape.n2:
        raise ValueError(f"R must have {shape.n2} rows, got {R.shape[0]}")
