"""Point-source models, random instances and the measurement map.

A point-source signal is a superposition of r spikes with cyclic locations
tau_k in [0,1) and complex amplitudes d_k, each blurred by an unknown point
spread function whose Fourier samples live in a known s-dimensional subspace
(columns of B).  The data matrix is X = sum_k d_k h_k a(tau_k)^T and the n
measurements are y_j = b_j^H x_j, where b_j is the j-th row of B.
"""

import json
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

MAX_SEPARATION_ROUNDS = 10_000


class SeparationError(RuntimeError):
    """Raised when no location set with the requested cyclic gap is found."""


@dataclass
class PointSourceModel:
    """Ground-truth spikes: locations, amplitudes and subspace coefficients."""

    r: int
    locations: np.ndarray    # (r,) floats in [0, 1)
    amplitudes: np.ndarray   # (r,) complex
    coefficients: np.ndarray  # (r, s) complex, each row unit Euclidean norm

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        self.coefficients = np.atleast_2d(np.asarray(self.coefficients, dtype=complex))
        if not (len(self.locations) == len(self.amplitudes) == self.coefficients.shape[0] == self.r):
            raise ValueError("locations, amplitudes and coefficients must all have length r")
        if np.any(self.locations < 0) or np.any(self.locations >= 1):
            raise ValueError("locations must lie in [0, 1)")
        norms = np.linalg.norm(self.coefficients, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("coefficient vectors must have unit norm")

    @property
    def s(self) -> int:
        return self.coefficients.shape[1]


@dataclass
class ProblemInstance:
    """A measurement instance: subspace B, data y and the dimensions."""

    n: int
    s: int
    r: int
    B: np.ndarray            # (n, s) complex, row j is b_j
    y: np.ndarray            # (n,) complex
    seed: Optional[int] = None
    truth: Optional[Tuple[PointSourceModel, np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        self.B = np.asarray(self.B, dtype=complex)
        self.y = np.asarray(self.y, dtype=complex)
        if self.n < 1 or self.s < 1 or self.r < 1:
            raise ValueError("need n >= 1, s >= 1, r >= 1")
        if self.B.shape != (self.n, self.s):
            raise ValueError(f"B must have shape ({self.n}, {self.s}), got {self.B.shape}")
        if self.y.shape != (self.n,):
            raise ValueError(f"y must have shape ({self.n},), got {self.y.shape}")

    def validate(self):
        """Check that y is consistent with the stored ground truth."""
        if self.truth is None:
            return
        _, X = self.truth
        expected = forward_measure(self.B, X)
        err = np.linalg.norm(self.y - expected)
        scale = np.linalg.norm(expected)
        if err > 1e-10 * max(scale, 1.0):
            raise ValueError("stored y does not match the forward map of the stored truth")


def steering_vector(tau: float, m: int) -> np.ndarray:
    """Complex exponential (e^{-2 pi i tau t})_{t=0..m-1}; tau is reduced mod 1."""
    if m < 1:
        raise ValueError("m must be >= 1")
    t = np.arange(m)
    return np.exp(-2j * np.pi * (tau % 1.0) * t)


def min_cyclic_gap(locations: np.ndarray) -> float:
    """Smallest wrap-around distance between any two locations in [0, 1)."""
    locs = np.sort(np.asarray(locations, dtype=float))
    if len(locs) < 2:
        return 1.0
    gaps = np.diff(locs)
    wrap = 1.0 - (locs[-1] - locs[0])
    return float(min(gaps.min(), wrap))


def generate_model(n, s, r, separated=False, seed=None) -> PointSourceModel:
    """Draw a random point-source model.

    Locations are uniform on [0,1); amplitudes are d_k = (1 + 10^{c_k}) e^{-i phi_k}
    with c_k ~ U[0,1] and phi_k ~ U[0, 2 pi), so |d_k| lies in [2, 11].
    Coefficients h_k are normalized complex Gaussian vectors.  With
    ``separated`` the whole location set is rejection-sampled until the
    minimum cyclic gap is at least 1/n.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if separated and r > n:
        raise SeparationError(f"cannot place {r} locations with gap 1/{n} on the circle")
    rng = np.random.default_rng(seed)

    if separated:
        for _ in range(MAX_SEPARATION_ROUNDS):
            locations = rng.uniform(0.0, 1.0, size=r)
            if min_cyclic_gap(locations) >= 1.0 / n:
                break
        else:
            raise SeparationError(
                f"no location set with cyclic gap >= 1/{n} found for r={r} "
                f"in {MAX_SEPARATION_ROUNDS} rounds"
            )
    else:
        locations = rng.uniform(0.0, 1.0, size=r)

    c = rng.uniform(0.0, 1.0, size=r)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=r)
    amplitudes = (1.0 + 10.0 ** c) * np.exp(-1j * phi)

    h = rng.standard_normal((r, s)) + 1j * rng.standard_normal((r, s))
    h /= np.linalg.norm(h, axis=1, keepdims=True)

    return PointSourceModel(r=r, locations=locations, amplitudes=amplitudes, coefficients=h)


def synthesize_signal(model: PointSourceModel, n: int) -> np.ndarray:
    """Data matrix X = sum_k d_k h_k a(tau_k)^T, shape (s, n)."""
    X = np.zeros((model.s, n), dtype=complex)
    for d, tau, h in zip(model.amplitudes, model.locations, model.coefficients):
        X += d * np.outer(h, steering_vector(tau, n))
    return X


def generate_subspace(n, s, seed=None, kind="dft") -> np.ndarray:
    """Draw the (n, s) subspace matrix B.

    ``kind="dft"`` samples s distinct columns of the unnormalized n x n DFT
    matrix, B[j, l] = e^{-2 pi i j k_l / n}; every entry has unit modulus.
    ``kind="iid"`` draws rows independently with Rademacher (+/-1) entries,
    an isotropic alternative with the same coherence constant.
    """
    if s > n:
        raise ValueError(f"s={s} exceeds n={n}")
    rng = np.random.default_rng(seed)
    if kind == "dft":
        cols = rng.choice(n, size=s, replace=False)
        j = np.arange(n)[:, None]
        return np.exp(-2j * np.pi * j * cols[None, :] / n)
    if kind == "iid":
        return rng.choice([-1.0, 1.0], size=(n, s)).astype(complex)
    raise ValueError(f"unknown subspace kind {kind!r}")


def forward_measure(B: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Measurements y_j = b_j^H x_j for the data matrix X of shape (s, n)."""
    n, s = B.shape
    if X.shape != (s, n):
        raise ValueError(f"X must have shape ({s}, {n}), got {X.shape}")
    return np.sum(np.conj(B.T) * X, axis=0)


def generate_instance(n, s, r, separated=False, seed=None, kind="dft") -> ProblemInstance:
    """Model + subspace + measurements from a single seed."""
    rng = np.random.default_rng(seed)
    model = generate_model(n, s, r, separated=separated, seed=rng)
    B = generate_subspace(n, s, seed=rng, kind=kind)
    X = synthesize_signal(model, n)
    y = forward_measure(B, X)
    return ProblemInstance(n=n, s=s, r=r, B=B, y=y, seed=seed, truth=(model, X))


def _pairs(z: np.ndarray):
    z = np.asarray(z, dtype=complex)
    return [[float(v.real), float(v.imag)] for v in z.ravel()]


def _unpairs(pairs, shape=None) -> np.ndarray:
    arr = np.array([complex(re, im) for re, im in pairs])
    return arr.reshape(shape) if shape is not None else arr


def instance_to_dict(instance: ProblemInstance) -> dict:
    doc = {
        "n": instance.n,
        "s": instance.s,
        "r": instance.r,
        "seed": instance.seed,
        "B": [_pairs(row) for row in instance.B],
        "y": _pairs(instance.y),
    }
    if instance.truth is not None:
        model, _ = instance.truth
        doc["truth"] = {
            "locations": [float(t) for t in model.locations],
            "amplitudes": _pairs(model.amplitudes),
            "coefficients": [_pairs(h) for h in model.coefficients],
        }
    return doc


def instance_from_dict(doc: dict) -> ProblemInstance:
    n, s, r = int(doc["n"]), int(doc["s"]), int(doc["r"])
    B = np.array([_unpairs(row) for row in doc["B"]])
    y = _unpairs(doc["y"])
    truth = None
    if doc.get("truth") is not None:
        t = doc["truth"]
        model = PointSourceModel(
            r=r,
            locations=np.array(t["locations"], dtype=float),
            amplitudes=_unpairs(t["amplitudes"]),
            coefficients=np.array([_unpairs(h) for h in t["coefficients"]]),
        )
        truth = (model, synthesize_signal(model, n))
    return ProblemInstance(n=n, s=s, r=r, B=B, y=y, seed=doc.get("seed"), truth=truth)


def save_instance(instance: ProblemInstance, path, extra=None):
    """Write the instance as self-describing JSON (optionally with a config echo)."""
    doc = instance_to_dict(instance)
    if extra:
        doc["config"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_instance(path) -> ProblemInstance:
    with open(path) as fh:
        doc = json.load(fh)
    return instance_from_dict(doc)
