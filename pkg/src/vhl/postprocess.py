"""Location extraction via MUSIC and amplitude/coefficient recovery.

MUSIC operates on the right singular subspace of the lifted matrix H(X):
its row space is spanned by the conjugated steering vectors at the true
locations, so no knowledge of the point spread functions is needed.  The
pseudospectrum J(tau) = 1 / ||(I - V V^H) g(tau)||^2 with the normalized
probe g(tau) = conj(a_{n2}(tau)) / sqrt(n2) peaks at the source locations;
grid peaks are refined by golden-section search.

Once locations are known, the products v_k = d_k h_k follow from one
overdetermined least-squares solve against the measurements, and each v_k
splits into amplitude and unit coefficient vector up to the inherent unit
scalar (fixed by making the first nonzero coefficient entry real positive).
"""

import csv
from dataclasses import dataclass

import numpy as np

from .operators import HankelShape, hankel_lift
from .model import steering_vector

DEFAULT_GRID_SIZE = 4096
PEAK_SEPARATION_FACTOR = 0.5   # peaks must be >= 0.5/n2 apart before refinement
GOLDEN_TOL = 1e-10


class WeightRecoveryError(RuntimeError):
    """Raised when the least-squares system for the weights is rank deficient."""


@dataclass
class MusicSpectrum:
    grid: np.ndarray          # (grid_size,) locations in [0, 1)
    values: np.ndarray        # pseudospectrum on the grid
    peaks: np.ndarray         # refined peak locations, strongest first
    peak_values: np.ndarray
    requested: int

    @property
    def complete(self) -> bool:
        return len(self.peaks) == self.requested


def cyclic_distance(a, b) -> float:
    d = abs((a - b) % 1.0)
    return float(min(d, 1.0 - d))


def _noise_rejection(V: np.ndarray, tau: float, n2: int) -> float:
    """||(I - V V^H) g(tau)||^2 for the unit probe g; small at source locations."""
    g = np.conj(steering_vector(tau, n2)) / np.sqrt(n2)
    proj = V.conj().T @ g
    return max(1.0 - float(np.vdot(proj, proj).real), 0.0)


def _golden_refine(V, lo, hi, n2):
    """Minimize the noise rejection on [lo, hi] by golden-section search."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc = _noise_rejection(V, c % 1.0, n2)
    fd = _noise_rejection(V, d % 1.0, n2)
    while b - a > GOLDEN_TOL:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = _noise_rejection(V, c % 1.0, n2)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = _noise_rejection(V, d % 1.0, n2)
    return ((a + b) / 2.0) % 1.0


def music_locations(X: np.ndarray, r: int, shape: HankelShape,
                    grid_size: int = DEFAULT_GRID_SIZE) -> MusicSpectrum:
    """Locate r sources as pseudospectrum peaks of the lifted signal matrix.

    Selects the r largest well-separated local maxima on a uniform grid and
    refines each to 1e-10 by golden-section search.  If fewer than r
    separated peaks exist the spectrum is returned with the peaks found
    (``complete`` is False).
    """
    if r < 1 or r > shape.n2 - 1:
        raise ValueError(f"need 1 <= r <= n2 - 1 = {shape.n2 - 1}, got r={r}")
    if not np.any(X):
        raise ValueError("signal matrix is zero")

    H = hankel_lift(np.asarray(X, dtype=complex), shape)
    _, _, Vh = np.linalg.svd(H, full_matrices=False)
    V = Vh[:r].conj().T                       # (n2, r) right singular subspace

    grid = np.arange(grid_size) / grid_size
    # V^H g(tau_g) over the whole grid is an inverse DFT of the conjugated basis
    proj = np.fft.ifft(np.conj(V), n=grid_size, axis=0) * grid_size / np.sqrt(shape.n2)
    rejection = np.maximum(1.0 - (np.abs(proj) ** 2).sum(axis=1), 0.0)
    values = 1.0 / np.maximum(rejection, 1e-300)

    is_peak = (values >= np.roll(values, 1)) & (values >= np.roll(values, -1))
    order = np.argsort(values[is_peak])[::-1]
    candidates = np.flatnonzero(is_peak)[order]

    min_sep = PEAK_SEPARATION_FACTOR / shape.n2
    chosen = []
    for idx in candidates:
        tau = grid[idx]
        if all(cyclic_distance(tau, grid[other]) >= min_sep for other in chosen):
            chosen.append(idx)
        if len(chosen) == r:
            break

    step = 1.0 / grid_size
    peaks = []
    peak_values = []
    for idx in chosen:
        tau = _golden_refine(V, grid[idx] - step, grid[idx] + step, shape.n2)
        peaks.append(tau)
        peak_values.append(1.0 / max(_noise_rejection(V, tau, shape.n2), 1e-300))

    return MusicSpectrum(grid=grid, values=values, peaks=np.array(peaks),
                         peak_values=np.array(peak_values), requested=r)


def recover_weights(B: np.ndarray, y: np.ndarray, locations):
    """Least-squares estimate of v_k = d_k h_k given the source locations.

    Solves y_j = sum_k e^{-2 pi i tau_k j} b_j^H v_k for the stacked v and
    splits each v_k into (d_k, h_k) with the first nonzero entry of h_k made
    real positive.  Returns (v, d, h) with v and h of shape (r, s).
    """
    n, s = B.shape
    locations = np.asarray(locations, dtype=float)
    r = len(locations)
    if n < s * r:
        raise ValueError(f"system underdetermined: n={n} < s*r={s * r}")

    j = np.arange(n)
    design = np.empty((n, s * r), dtype=complex)
    for k, tau in enumerate(locations):
        design[:, k * s:(k + 1) * s] = np.exp(-2j * np.pi * tau * j)[:, None] * np.conj(B)

    sol, _, rank, svals = np.linalg.lstsq(design, y, rcond=None)
    cond = svals[0] / svals[-1] if svals[-1] > 0 else np.inf
    if rank < s * r or cond > 1e12:
        raise WeightRecoveryError(
            f"rank-deficient weight system (rank {rank} of {s * r}, "
            f"condition number {cond:.3e}); locations too close?"
        )

    v = sol.reshape(r, s)
    d = np.empty(r, dtype=complex)
    h = np.empty((r, s), dtype=complex)
    for k in range(r):
        scale = np.linalg.norm(v[k])
        unit = v[k] / scale
        nz = np.flatnonzero(np.abs(unit) > 1e-12)
        phase = unit[nz[0]] / abs(unit[nz[0]]) if len(nz) else 1.0
        h[k] = unit / phase
        d[k] = scale * phase
    return v, d, h


def resynthesize(locations, v, n: int) -> np.ndarray:
    """Rebuild the data matrix sum_k v_k a(tau_k)^T from recovered parts."""
    v = np.atleast_2d(v)
    X = np.zeros((v.shape[1], n), dtype=complex)
    for tau, vk in zip(np.asarray(locations, dtype=float), v):
        X += np.outer(vk, steering_vector(tau, n))
    return X


def match_locations(estimated, truth):
    """Pair estimates with truth minimizing total cyclic distance; returns
    (permutation, per-pair distances) with permutation[i] the truth index
    assigned to estimate i."""
    from scipy.optimize import linear_sum_assignment

    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(truth, dtype=float)
    cost = np.abs((est[:, None] - tru[None, :]) % 1.0)
    cost = np.minimum(cost, 1.0 - cost)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(est), dtype=int)
    perm[rows] = cols
    return perm, cost[rows, cols]


def write_spectrum_csv(spectrum: MusicSpectrum, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["tau", "pseudospectrum"])
        for tau, val in zip(spectrum.grid, spectrum.values):
            writer.writerow([repr(float(tau)), repr(float(val))])


def write_peaks_csv(spectrum: MusicSpectrum, amplitudes, path, header_lines=()):
    """Peaks table with the recovered amplitude magnitude and phase per peak."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["k", "tau_hat", "abs_d_hat", "phase_d_hat"])
        for k, tau in enumerate(spectrum.peaks):
            d = complex(amplitudes[k])
            writer.writerow([k, repr(float(tau)), repr(abs(d)), repr(float(np.angle(d)))])
