"""Blind super-resolution of point sources by projected gradient descent
on the low-rank factors of a vectorized Hankel lift, with MUSIC-based
location extraction and a phase-transition experiment harness."""

from .model import (
    PointSourceModel,
    ProblemInstance,
    SeparationError,
    forward_measure,
    generate_instance,
    generate_model,
    generate_subspace,
    load_instance,
    save_instance,
    steering_vector,
    synthesize_signal,
)
from .operators import (
    HankelShape,
    fast_factor_adjoint,
    fast_lift_adjoint_times_factor,
    fast_lift_times_factor,
    hankel_adjoint,
    hankel_lift,
    hankel_pinv,
    measure,
    measure_adjoint,
    multiplicities,
    weighted_lift_of_adjoint,
)
from .linalg import TruncatedSVD, procrustes_distance, spectral_stats, truncated_svd
from .solver import (
    FactorPair,
    FeasibleSetParams,
    SolverConfig,
    SolverReport,
    feasible_params,
    gradient,
    ground_truth_factors,
    initialize,
    objective,
    project,
    recover_signal,
    solve,
    theory_step_size,
)
from .postprocess import (
    MusicSpectrum,
    WeightRecoveryError,
    match_locations,
    music_locations,
    recover_weights,
    resynthesize,
)
from .harness import (
    ConvergenceTrace,
    PhaseGrid,
    TrialOutcome,
    convergence_study,
    derive_seed,
    phase_transition_n,
    phase_transition_sr,
    run_trial,
)

__version__ = "0.1.0"
