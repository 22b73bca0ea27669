"""Projected gradient descent on the lifted low-rank factors.

The recovery problem is solved over factor pairs M = (L, R) with
L R^H approximating the lifted data matrix.  The objective is

    f(M) = 1/2 ||y - A H^+(L R^H)||^2
         + 1/2 ||(I - H H^+)(L R^H)||_F^2
         + 1/16 ||L^H L - R^H R||_F^2

where the second term keeps L R^H close to the range of the lift and the
third balances the factors.  Iterates stay in the feasible set whose
L-blocks and R-rows obey the norm cap sqrt(mu r sigma / n); the projection
rescales offending blocks and rows individually.

Gradients follow the Wirtinger convention in which the directional
derivative of the real objective along a perturbation D equals
Re <grad f, D>; all heavy products run through the FFT-fast operator forms
at O(s r n log n) per evaluation.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import linalg
from .model import ProblemInstance
from .operators import (
    HankelShape,
    fast_factor_adjoint,
    fast_lift_adjoint_times_factor,
    fast_lift_times_factor,
    lifted_view,
    measure_adjoint,
    multiplicities,
)

ARMIJO_C = 1e-4
MAX_HALVINGS = 30
STEP_GROWTH = 2.0
STALL_WINDOW = 20
STALL_TOL = 1e-14
MU_INFLATION = 1.5
# Largest lifted size evaluated in deviation form; beyond it the structure
# term falls back to the O(s r n log n) difference of squared norms, which
# carries an absolute noise floor of order eps * sigma_1^2.
DENSE_STRUCTURE_ENTRIES = 2_000_000


@dataclass
class FactorPair:
    """Stacked factors M = [L; R]; L splits into n1 blocks of s rows."""

    L: np.ndarray   # (s * n1, r)
    R: np.ndarray   # (n2, r)
    s: int

    def __post_init__(self):
        if self.L.ndim != 2 or self.R.ndim != 2 or self.L.shape[1] != self.R.shape[1]:
            raise ValueError("L and R must be 2-d with a common rank")
        if self.L.shape[0] % self.s != 0:
            raise ValueError("L row count must be a multiple of the block size s")

    @property
    def r(self) -> int:
        return self.L.shape[1]

    @property
    def n1(self) -> int:
        return self.L.shape[0] // self.s

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.L, self.R])

    def block(self, ell: int) -> np.ndarray:
        return self.L[ell * self.s:(ell + 1) * self.s, :]

    def copy(self) -> "FactorPair":
        return FactorPair(self.L.copy(), self.R.copy(), self.s)


@dataclass(frozen=True)
class FeasibleSetParams:
    """Norm caps for the feasible set: blocks of L and rows of R stay below bound."""

    mu: float
    sigma: float
    bound: float


def feasible_params(mu: float, sigma: float, r: int, n: int) -> FeasibleSetParams:
    if mu <= 0 or sigma < 0:
        raise ValueError("need mu > 0 and sigma >= 0")
    return FeasibleSetParams(mu=mu, sigma=sigma, bound=float(np.sqrt(mu * r * sigma / n)))


@dataclass
class SolverConfig:
    eta: Optional[float] = None      # fixed step size; None selects backtracking
    eps: float = 1.0 / 3.0           # sigma inflation: sigma = sigma_1 / (1 - eps)
    max_iters: int = 5000
    tol_residual: float = 1e-5
    mu: Optional[float] = None       # feasible-set incoherence; None = data-driven
    seed: int = 0                    # sketch seed for the initialization SVD

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol_residual < 0 or not (0 < self.eps <= 1.0 / 3.0):
            raise ValueError("need tol_residual >= 0 and eps in (0, 1/3]")


@dataclass
class SolverReport:
    iterations: int
    stop_reason: str                 # converged | max_iters | stalled
    residuals: np.ndarray            # ||y - A(X_t)||, length iterations + 1
    objectives: np.ndarray
    factors: FactorPair
    params: FeasibleSetParams
    distances: Optional[np.ndarray] = None   # dist(M_t, M_truth)
    rel_errors: Optional[np.ndarray] = None  # ||X_t - X_truth||_F / ||X_truth||_F
    step_sizes: Optional[np.ndarray] = None  # accepted eta per iteration


def project(M: FactorPair, params: FeasibleSetParams) -> FactorPair:
    """Closed-form projection: rescale over-norm L-blocks and R-rows to the bound.

    Rescales repeatedly until every computed norm is within the bound, so the
    projection is exactly idempotent in floating point.
    """
    bound = params.bound
    L3 = M.L.reshape(M.n1, M.s, M.r).copy()
    for _ in range(4):
        norms = np.sqrt((L3.real ** 2 + L3.imag ** 2).sum(axis=(1, 2)))
        over = norms > bound
        if not over.any():
            break
        L3[over] *= (bound / norms[over])[:, None, None]

    R = M.R.copy()
    for _ in range(4):
        norms = np.sqrt((R.real ** 2 + R.imag ** 2).sum(axis=1))
        over = norms > bound
        if not over.any():
            break
        R[over] *= (bound / norms[over])[:, None]

    return FactorPair(L3.reshape(M.L.shape), R, M.s)


def _objective_pieces(L, R, Bconj, y, w, shape, dense_structure):
    """Objective value plus the intermediates shared with the gradient.

    The structure term 1/2 ||(I - H H^+)(L R^H)||_F^2 has two equal
    evaluations.  The deviation form materializes L R^H and subtracts the
    lifted averages cell by cell: a sum of non-negative terms, accurate to
    machine precision even when the product is nearly Hankel-structured.
    The factored form ||L R^H||^2 - sum_j w_j ||z_j||^2 never leaves the
    low-rank representation but cancels catastrophically near convergence;
    it is kept for sizes where materializing the lift is unreasonable.
    """
    GL = L.conj().T @ L
    GR = R.conj().T @ R
    Z = fast_factor_adjoint(L, R, shape) / w
    res = np.sum(Bconj * Z, axis=0) - y
    data = 0.5 * float(np.vdot(res, res).real)
    if dense_structure:
        T = (L @ R.conj().T).reshape(shape.n1, shape.s, shape.n2)
        dev = T - lifted_view(Z, shape)
        structure = 0.5 * float(np.vdot(dev, dev).real)
    else:
        lr_sq = float(np.vdot(GR, GL).real)                  # ||L R^H||_F^2
        hz_sq = float((w * (Z.real ** 2 + Z.imag ** 2).sum(axis=0)).sum())
        structure = 0.5 * (lr_sq - hz_sq)
    diff = GL - GR
    balance = float(np.vdot(diff, diff).real) / 16.0
    return data + structure + balance, res, Z, GL, GR


def _use_dense_structure(shape: HankelShape) -> bool:
    return shape.s * shape.n1 * shape.n2 <= DENSE_STRUCTURE_ENTRIES


def _gradient_pieces(L, R, Bt, w, res, Z, GL, GR, shape):
    """Gradient from the shared intermediates of ``_objective_pieces``.

    The data and structure terms share one lifted product each way:
    grad_L = H(C - Z) R + L G and grad_R = H(C - Z)^H L + R G', where C is
    the weighted measurement back-projection and G, G' fold the Gram and
    balance contributions into a single r x r multiply.
    """
    C = Bt * (res / w)[None, :]
    E = C - Z
    diff = GL - GR
    gL = fast_lift_times_factor(E, R, shape) + L @ (GR + 0.25 * diff)
    gR = fast_lift_adjoint_times_factor(E, L, shape) + R @ (GL - 0.25 * diff)
    return gL, gR


def objective(M: FactorPair, instance: ProblemInstance, shape: HankelShape,
              dense_structure=None) -> float:
    w = multiplicities(shape)
    dense = _use_dense_structure(shape) if dense_structure is None else dense_structure
    f, *_ = _objective_pieces(M.L, M.R, instance.B.conj().T, instance.y, w, shape, dense)
    return f


def gradient(M: FactorPair, instance: ProblemInstance, shape: HankelShape) -> FactorPair:
    w = multiplicities(shape)
    Bt = instance.B.T
    _, res, Z, GL, GR = _objective_pieces(M.L, M.R, np.conj(Bt), instance.y, w, shape, False)
    gL, gR = _gradient_pieces(M.L, M.R, Bt, w, res, Z, GL, GR, shape)
    return FactorPair(gL, gR, M.s)


def recover_signal(M: FactorPair, shape: HankelShape) -> np.ndarray:
    """X = H^+(L R^H), the signal-domain estimate behind a factor pair."""
    return fast_factor_adjoint(M.L, M.R, shape) / multiplicities(shape)


def theory_step_size(sigma_r, mu0, mu, s, r, sigma) -> float:
    """Step-size bound sigma_r / (4500 (mu0 mu s r)^2 sigma^2); diagnostic only."""
    return sigma_r / (4500.0 * (mu0 * mu * s * r) ** 2 * sigma ** 2)


def initialize(instance: ProblemInstance, shape: HankelShape, r: int,
               eps: float = 1.0 / 3.0, mu: Optional[float] = None, seed: int = 0):
    """Spectral initialization: rank-r truncation of H(A*(y)), balanced and projected.

    Returns the projected factor pair together with the feasible-set
    parameters (sigma inflated by 1/(1-eps); mu from the override or scaled
    from the initialization factors so the constraint is mildly active).
    """
    if r > min(shape.s * shape.n1, shape.n2):
        raise ValueError(f"rank {r} exceeds min(s*n1, n2) for {shape}")
    X0 = measure_adjoint(instance.y, instance.B)
    svd = linalg.truncated_svd(
        lambda V: fast_lift_times_factor(X0, V, shape),
        lambda U: fast_lift_adjoint_times_factor(X0, U, shape),
        shape.lifted_shape, r, seed=seed,
    )
    sq = np.sqrt(svd.S)
    Lhat = svd.U * sq
    Rhat = svd.V * sq
    sigma = float(svd.S[0] / (1.0 - eps))

    if mu is None:
        if sigma > 0:
            block_sq = (np.abs(Lhat.reshape(shape.n1, shape.s, r)) ** 2).sum(axis=(1, 2)).max()
            row_sq = (np.abs(Rhat) ** 2).sum(axis=1).max()
            mu = MU_INFLATION * (shape.n / (r * sigma)) * max(block_sq, row_sq)
        else:
            mu = 1.0
    params = feasible_params(mu, sigma, r, shape.n)
    M0 = project(FactorPair(Lhat, Rhat, shape.s), params)
    return M0, params


def ground_truth_factors(instance: ProblemInstance, shape: HankelShape, seed: int = 0) -> FactorPair:
    """Balanced rank-r factors of the lifted ground-truth matrix."""
    if instance.truth is None:
        raise ValueError("instance has no ground truth")
    _, X = instance.truth
    svd = linalg.truncated_svd(
        lambda V: fast_lift_times_factor(X, V, shape),
        lambda U: fast_lift_adjoint_times_factor(X, U, shape),
        shape.lifted_shape, instance.r, seed=seed,
    )
    sq = np.sqrt(svd.S)
    return FactorPair(svd.U * sq, svd.V * sq, shape.s)


def solve(instance: ProblemInstance, shape: HankelShape, r: int,
          config: Optional[SolverConfig] = None) -> SolverReport:
    """Run projected gradient descent from the spectral initialization.

    The step size is either the fixed ``config.eta`` or backtracking line
    search: the trial step starts at 1/(8 sigma) (later at the last accepted
    step) and halves, at most 30 times, until the projected trial point
    satisfies the sufficient-decrease test measured after projection.
    Stops on the residual tolerance, the iteration cap, or a stall
    (relative objective decrease below 1e-14 for 20 consecutive iterations).
    """
    config = config or SolverConfig()
    w = multiplicities(shape)
    Bt = instance.B.T
    Bconj = np.conj(Bt)
    y = instance.y
    dense = _use_dense_structure(shape)

    M, params = initialize(instance, shape, r, eps=config.eps, mu=config.mu, seed=config.seed)

    truth_pair = None
    X_true = None
    true_norm = 1.0
    if instance.truth is not None:
        X_true = instance.truth[1]
        true_norm = float(np.linalg.norm(X_true))
        if instance.r == r:
            truth_pair = ground_truth_factors(instance, shape, seed=config.seed)
    ref = truth_pair.stacked if truth_pair is not None else None

    f, res, Z, GL, GR = _objective_pieces(M.L, M.R, Bconj, y, w, shape, dense)

    residuals = [float(np.linalg.norm(res))]
    objectives = [f]
    distances = [] if ref is not None else None
    rel_errors = [] if X_true is not None else None
    steps = []

    def record_truth(Mcur, Zcur):
        if ref is not None:
            distances.append(linalg.procrustes_distance(Mcur.stacked, ref))
        if X_true is not None:
            rel_errors.append(float(np.linalg.norm(Zcur - X_true)) / max(true_norm, 1e-300))

    record_truth(M, Z)

    eta = config.eta if config.eta is not None else (1.0 / (8.0 * params.sigma) if params.sigma > 0 else 1.0)
    backtracking = config.eta is None

    stop_reason = "max_iters"
    stall = 0
    iterations = 0

    if residuals[0] <= config.tol_residual:
        stop_reason = "converged"
    else:
        for _ in range(config.max_iters):
            gL, gR = _gradient_pieces(M.L, M.R, Bt, w, res, Z, GL, GR, shape)

            if backtracking:
                # trial step grows from the last accepted one so flat
                # stretches do not pin the run at a tiny step
                eta *= STEP_GROWTH
                for halving in range(MAX_HALVINGS + 1):
                    trial = project(FactorPair(M.L - eta * gL, M.R - eta * gR, M.s), params)
                    ft, rest, Zt, GLt, GRt = _objective_pieces(
                        trial.L, trial.R, Bconj, y, w, shape, dense)
                    # gradient-mapping form of sufficient decrease: equals
                    # c * eta * ||grad||^2 when the projection is inactive but
                    # stays satisfiable when the norm caps clip the step
                    moved = (np.vdot(trial.L - M.L, trial.L - M.L).real
                             + np.vdot(trial.R - M.R, trial.R - M.R).real)
                    if ft <= f - (ARMIJO_C / eta) * moved:
                        break
                    if halving < MAX_HALVINGS:
                        eta *= 0.5
            else:
                trial = project(FactorPair(M.L - eta * gL, M.R - eta * gR, M.s), params)
                ft, rest, Zt, GLt, GRt = _objective_pieces(
                    trial.L, trial.R, Bconj, y, w, shape, dense)

            f_prev = f
            M, f, res, Z, GL, GR = trial, ft, rest, Zt, GLt, GRt
            iterations += 1

            residuals.append(float(np.linalg.norm(res)))
            objectives.append(f)
            steps.append(eta)
            record_truth(M, Z)

            if residuals[-1] <= config.tol_residual:
                stop_reason = "converged"
                break
            if (f_prev - f) < STALL_TOL * max(f_prev, 1e-300):
                stall += 1
                if stall >= STALL_WINDOW:
                    stop_reason = "stalled"
                    break
            else:
                stall = 0

    return SolverReport(
        iterations=iterations,
        stop_reason=stop_reason,
        residuals=np.array(residuals),
        objectives=np.array(objectives),
        factors=M,
        params=params,
        distances=np.array(distances) if distances is not None else None,
        rel_errors=np.array(rel_errors) if rel_errors is not None else None,
        step_sizes=np.array(steps),
    )


def report_to_dict(report: SolverReport, config: SolverConfig, include_factors=False) -> dict:
    doc = {
        "config": {
            "eta": config.eta,
            "eps": config.eps,
            "max_iters": config.max_iters,
            "tol_residual": config.tol_residual,
            "mu": config.mu,
            "seed": config.seed,
        },
        "iterations": report.iterations,
        "stop_reason": report.stop_reason,
        "feasible_set": {"mu": report.params.mu, "sigma": report.params.sigma,
                         "bound": report.params.bound},
        "residuals": [float(v) for v in report.residuals],
        "objectives": [float(v) for v in report.objectives],
        "distances": [float(v) for v in report.distances] if report.distances is not None else None,
        "rel_errors": [float(v) for v in report.rel_errors] if report.rel_errors is not None else None,
    }
    if include_factors:
        doc["factors"] = {
            "s": report.factors.s,
            "L": [[[float(v.real), float(v.imag)] for v in row] for row in report.factors.L],
            "R": [[[float(v.real), float(v.imag)] for v in row] for row in report.factors.R],
        }
    return doc


def save_report(report: SolverReport, config: SolverConfig, path, include_factors=False):
    with open(path, "w") as fh:
        json.dump(report_to_dict(report, config, include_factors), fh, indent=1)
        fh.write("\n")
