"""Monte-Carlo experiments: phase-transition grids and convergence traces.

Each trial draws a fresh instance from a seed derived counter-style from
(master seed, n, s, r, trial index), solves it, and declares success when
the relative recovery error is at most 1e-3.  Grids run embarrassingly
parallel in a worker pool; outcomes are emitted in deterministic cell order
so repeated runs with one master seed produce identical CSV files (wall
times excepted).
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .model import generate_instance
from .operators import HankelShape
from .solver import SolverConfig, solve

SUCCESS_REL_ERROR = 1e-3
DEFAULT_TRIALS = 20


@dataclass
class TrialOutcome:
    n: int
    s: int
    r: int
    separated: bool
    seed: int
    success: bool
    rel_error: float
    iterations: int
    wall_time: float          # seconds

    def __post_init__(self):
        if self.success != (self.rel_error <= SUCCESS_REL_ERROR):
            raise ValueError("success flag inconsistent with the 1e-3 threshold")


@dataclass
class PhaseGrid:
    """Success probabilities over a 2-d parameter grid.

    ``axes`` is a pair of (name, values); ``rates[i, j]`` is the success
    fraction at (axes[0][1][i], axes[1][1][j]); ``fixed`` holds the frozen
    parameters and ``reference`` describes the overlay curve from the
    phase-transition studies.
    """

    axes: tuple
    fixed: dict
    trials: int
    rates: np.ndarray
    reference: str
    outcomes: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if np.any(self.rates < 0) or np.any(self.rates > 1):
            raise ValueError("success rates must lie in [0, 1]")


@dataclass
class ConvergenceTrace:
    n: int
    s: int
    r: int
    seed: int
    iterations: int
    stop_reason: str
    rel_errors: np.ndarray
    residuals: np.ndarray


def derive_seed(master: int, n: int, s: int, r: int, trial: int) -> int:
    """Counter-based seed split; stable regardless of execution order."""
    ss = np.random.SeedSequence([int(master), int(n), int(s), int(r), int(trial)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_trial(n, s, r, separated, seed, config: Optional[SolverConfig] = None) -> TrialOutcome:
    """Generate one seeded instance, solve it, and score the recovery."""
    if n < 1 or s < 1 or r < 1:
        raise ValueError(f"invalid trial parameters n={n}, s={s}, r={r}")
    config = config or SolverConfig()
    start = time.perf_counter()
    instance = generate_instance(n, s, r, separated=separated, seed=seed)
    shape = HankelShape.default(n, s)
    report = solve(instance, shape, r, replace(config, seed=seed))
    rel_error = float(report.rel_errors[-1])
    wall = time.perf_counter() - start
    return TrialOutcome(n=n, s=s, r=r, separated=bool(separated), seed=int(seed),
                        success=rel_error <= SUCCESS_REL_ERROR, rel_error=rel_error,
                        iterations=report.iterations, wall_time=wall)


def _trial_worker(task):
    n, s, r, separated, seed, config = task
    return run_trial(n, s, r, separated, seed, config)


def _map_trials(tasks, jobs):
    if jobs is not None and jobs > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (jobs * 8))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_trial_worker, tasks, chunksize=chunk))
    return [_trial_worker(task) for task in tasks]


def phase_transition_sr(n, s_range, r_range, trials=DEFAULT_TRIALS, separated=True,
                        config: Optional[SolverConfig] = None, master_seed=0,
                        jobs=None) -> PhaseGrid:
    """Success fraction per (s, r) cell at fixed n, with the r s = 20 hyperbola
    as the reference curve."""
    s_values = list(s_range)
    r_values = list(r_range)
    if not s_values or not r_values:
        raise ValueError("s_range and r_range must be non-empty")
    tasks = [(n, s, r, separated, derive_seed(master_seed, n, s, r, t), config)
             for r in r_values for s in s_values for t in range(trials)]
    outcomes = _map_trials(tasks, jobs)

    rates = np.zeros((len(r_values), len(s_values)))
    for idx, out in enumerate(outcomes):
        cell = idx // trials
        rates[cell // len(s_values), cell % len(s_values)] += out.success
    rates /= trials

    return PhaseGrid(axes=(("r", r_values), ("s", s_values)),
                     fixed={"n": n, "separated": bool(separated)},
                     trials=trials, rates=rates, reference="r*s = 20",
                     outcomes=outcomes)


def phase_transition_n(vary, n_range, vary_range, fixed_value=4, trials=DEFAULT_TRIALS,
                       separated=True, config: Optional[SolverConfig] = None,
                       master_seed=0, jobs=None) -> PhaseGrid:
    """Success fraction per (n, s) or (n, r) cell with the other order parameter
    frozen; the reference is the empirical boundary line n = 2.5 * (varied)."""
    if vary not in ("s", "r"):
        raise ValueError("vary must be 's' or 'r'")
    n_values = list(n_range)
    v_values = list(vary_range)
    if not n_values or not v_values:
        raise ValueError("n_range and vary_range must be non-empty")

    def dims(v):
        return (v, fixed_value) if vary == "s" else (fixed_value, v)

    tasks = []
    for n in n_values:
        for v in v_values:
            s, r = dims(v)
            tasks.extend((n, s, r, separated, derive_seed(master_seed, n, s, r, t), config)
                         for t in range(trials))
    outcomes = _map_trials(tasks, jobs)

    rates = np.zeros((len(n_values), len(v_values)))
    for idx, out in enumerate(outcomes):
        cell = idx // trials
        rates[cell // len(v_values), cell % len(v_values)] += out.success
    rates /= trials

    return PhaseGrid(axes=(("n", n_values), (vary, v_values)),
                     fixed={"s" if vary == "r" else "r": fixed_value,
                            "separated": bool(separated)},
                     trials=trials, rates=rates, reference=f"n = 2.5*{vary}",
                     outcomes=outcomes)


def convergence_study(n_list, s, r, config: Optional[SolverConfig] = None,
                      master_seed=0) -> list:
    """One separated seeded instance per n, solved to tolerance; returns the
    per-iteration relative-error traces."""
    config = config or SolverConfig()
    traces = []
    for n in n_list:
        seed = derive_seed(master_seed, n, s, r, 0)
        instance = generate_instance(n, s, r, separated=True, seed=seed)
        shape = HankelShape.default(n, s)
        report = solve(instance, shape, r, replace(config, seed=seed))
        traces.append(ConvergenceTrace(n=n, s=s, r=r, seed=seed,
                                       iterations=report.iterations,
                                       stop_reason=report.stop_reason,
                                       rel_errors=report.rel_errors,
                                       residuals=report.residuals))
    return traces


def fit_log_decay(values, burn_in=5):
    """Least-squares slope and R^2 of log10(values) against iteration index,
    over the converged segment past the burn-in."""
    vals = np.asarray(values, dtype=float)
    idx = np.arange(len(vals))[burn_in:]
    logs = np.log10(np.maximum(vals[burn_in:], 1e-300))
    if len(idx) < 3:
        raise ValueError("trace too short to fit")
    slope, intercept = np.polyfit(idx, logs, 1)
    fit = slope * idx + intercept
    ss_res = float(((logs - fit) ** 2).sum())
    ss_tot = float(((logs - logs.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def _grid_cells(grid: PhaseGrid):
    """Yield (s, r, n, rate) per cell in deterministic order."""
    (name0, vals0), (name1, vals1) = grid.axes
    for i, v0 in enumerate(vals0):
        for j, v1 in enumerate(vals1):
            cell = {name0: v0, name1: v1, **{k: v for k, v in grid.fixed.items()
                                             if k in ("n", "s", "r")}}
            yield cell["s"], cell["r"], cell["n"], grid.rates[i, j]


def _write_comments(fh, header_lines):
    for line in header_lines:
        fh.write(f"# {line}\n")


def write_phase_csv(grid: PhaseGrid, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        _write_comments(fh, header_lines)
        writer = csv.writer(fh)
        writer.writerow(["s", "r", "n", "trials", "success_rate"])
        for s, r, n, rate in _grid_cells(grid):
            writer.writerow([s, r, n, grid.trials, repr(float(rate))])


def write_convergence_csv(traces, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        _write_comments(fh, header_lines)
        writer = csv.writer(fh)
        writer.writerow(["n", "iteration", "rel_error_log10"])
        for trace in traces:
            for it, rel in enumerate(trace.rel_errors):
                writer.writerow([trace.n, it, repr(float(np.log10(max(rel, 1e-300))))])


def write_trials_csv(outcomes, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        _write_comments(fh, header_lines)
        writer = csv.writer(fh)
        writer.writerow(["n", "s", "r", "separated", "seed", "success",
                         "rel_error", "iterations", "wall_time_ms"])
        for o in outcomes:
            writer.writerow([o.n, o.s, o.r, int(o.separated), o.seed, int(o.success),
                             repr(float(o.rel_error)), o.iterations,
                             f"{o.wall_time * 1000.0:.3f}"])


def write_gnuplot_script(path, kind, csv_name, png_name, reference=None, n_values=()):
    """Companion gnuplot script referencing the emitted CSVs."""
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set terminal pngcairo size 800,600",
        f"set output '{png_name}'",
    ]
    if kind == "phase_sr":
        lines += [
            "set xlabel 's'", "set ylabel 'r'",
            f"plot '{csv_name}' using 1:2:5 with image notitle, \\",
            f"     20.0/x with lines lc rgb 'red' title '{reference}'",
        ]
    elif kind == "phase_n":
        vary_col = 1 if reference and reference.endswith("s") else 2
        lines += [
            f"set xlabel '{'s' if vary_col == 1 else 'r'}'", "set ylabel 'n'",
            f"plot '{csv_name}' using {vary_col}:3:5 with image notitle, \\",
            f"     2.5*x with lines lc rgb 'red' title '{reference}'",
        ]
    elif kind == "convergence":
        lines += ["set xlabel 'iteration'", "set ylabel 'log10 relative error'"]
        plots = [f"'{csv_name}' using ($1=={n} ? $2 : NaN):3 with lines title 'n = {n}'"
                 for n in n_values]
        lines.append("plot " + ", \\\n     ".join(plots))
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
