"""Command-line surface: instance generation, solving, MUSIC, experiments.

Subcommands: gen, solve, music, phase, phase-n, convergence.  Every output
file starts with an echo of the resolved configuration and master seed, so
identical invocations produce identical files.  Exit codes: 0 success /
converged, 2 non-convergence, 64 usage error, 65 data or parse error.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import harness, plots, postprocess, solver
from .model import (
    SeparationError,
    generate_instance,
    load_instance,
    save_instance,
)
from .operators import HankelShape
from .solver import SolverConfig

EXIT_OK = 0
EXIT_NONCONVERGED = 2
EXIT_USAGE = 64
EXIT_DATA = 65


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_int_list(text):
    """Inclusive range syntax ``a..b[:step]``, single values, comma-separated."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            span, _, step_text = part.partition(":")
            lo_text, _, hi_text = span.partition("..")
            lo, hi = int(lo_text), int(hi_text)
            step = int(step_text) if step_text else 1
            if step < 1 or hi < lo:
                raise ValueError(f"bad range {part!r}")
            out.extend(range(lo, hi + 1, step))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("empty range")
    return out


def _master_seed(args):
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("VHL_SEED")
    return int(env) if env else 0


def _echo_lines(args, master_seed):
    skip = {"func", "seed"}
    pairs = {k: v for k, v in vars(args).items() if k not in skip}
    pairs["master_seed"] = master_seed
    return [f"{k} = {v}" for k, v in sorted(pairs.items())]


def _echo_dict(args, master_seed):
    skip = {"func", "seed"}
    doc = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    doc["master_seed"] = master_seed
    return doc


def _prepare_out_dir(path, force):
    out = Path(path)
    if out.exists() and any(out.iterdir()) and not force:
        raise ValueError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solver_config(args, seed):
    return SolverConfig(
        eta=getattr(args, "eta", None),
        eps=getattr(args, "eps", 1.0 / 3.0),
        max_iters=getattr(args, "max_iters", 5000),
        tol_residual=getattr(args, "tol", 1e-5),
        mu=getattr(args, "mu", None),
        seed=seed,
    )


def _load(path):
    try:
        instance = load_instance(path)
    except FileNotFoundError:
        raise DataError(f"instance file not found: {path}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed instance file {path}: {exc}")
    try:
        instance.validate()
    except ValueError as exc:
        raise DataError(f"inconsistent instance file {path}: {exc}")
    return instance


def cmd_gen(args):
    seed = _master_seed(args)
    instance = generate_instance(args.n, args.s, args.r, separated=args.separated,
                                 seed=seed, kind=args.subspace)
    save_instance(instance, args.out, extra=_echo_dict(args, seed))
    print(f"wrote {args.out} (n={args.n}, s={args.s}, r={args.r}, seed={seed})")
    return EXIT_OK


def cmd_solve(args):
    instance = _load(args.instance)
    r = args.r if args.r is not None else instance.r
    seed = _master_seed(args) if args.seed is not None or instance.seed is None else instance.seed
    config = _solver_config(args, seed)
    shape = HankelShape.default(instance.n, instance.s)
    report = solver.solve(instance, shape, r, config)

    doc = solver.report_to_dict(report, config, include_factors=args.save_factors)
    doc["cli"] = _echo_dict(args, seed)
    with open(args.report, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")

    rel = report.rel_errors[-1] if report.rel_errors is not None else None
    rel_text = f", rel_error={rel:.3e}" if rel is not None else ""
    print(f"stop_reason={report.stop_reason}, iterations={report.iterations}, "
          f"residual={report.residuals[-1]:.3e}{rel_text}")
    print(f"wrote {args.report}")
    return EXIT_OK if report.stop_reason == "converged" else EXIT_NONCONVERGED


def cmd_music(args):
    instance = _load(args.instance)
    seed = instance.seed if instance.seed is not None else _master_seed(args)
    shape = HankelShape.default(instance.n, instance.s)
    r = args.r if args.r is not None else instance.r

    code = EXIT_OK
    if args.source == "truth":
        if instance.truth is None:
            raise DataError(f"instance {args.instance} carries no ground truth")
        X = instance.truth[1]
    else:
        config = _solver_config(args, seed)
        report = solver.solve(instance, shape, r, config)
        X = solver.recover_signal(report.factors, shape)
        if report.stop_reason != "converged":
            code = EXIT_NONCONVERGED

    spectrum = postprocess.music_locations(X, r, shape, grid_size=args.grid_size)
    _, d_hat, _ = postprocess.recover_weights(instance.B, instance.y, spectrum.peaks)

    out = _prepare_out_dir(args.out_dir, args.force)
    lines = _echo_lines(args, seed)
    postprocess.write_spectrum_csv(spectrum, out / "spectrum.csv", header_lines=lines)
    postprocess.write_peaks_csv(spectrum, d_hat, out / "peaks.csv", header_lines=lines)
    plots.spectrum_figure(spectrum, out / "spectrum.png")
    print(f"wrote {out}/spectrum.csv, peaks.csv, spectrum.png "
          f"({len(spectrum.peaks)} of {r} peaks)")
    if not spectrum.complete:
        print("warning: fewer separated peaks than requested", file=sys.stderr)
    return code


def cmd_phase(args):
    master = _master_seed(args)
    out = _prepare_out_dir(args.out_dir, args.force)
    config = _solver_config(args, master)
    grid = harness.phase_transition_sr(args.n, args.s, args.r, trials=args.trials,
                                       separated=args.separated, config=config,
                                       master_seed=master, jobs=args.jobs)
    lines = _echo_lines(args, master) + [f"reference: {grid.reference}"]
    harness.write_phase_csv(grid, out / "phase_sr.csv", header_lines=lines)
    harness.write_trials_csv(grid.outcomes, out / "trials.csv", header_lines=lines)
    harness.write_gnuplot_script(out / "plot.gp", "phase_sr", "phase_sr.csv",
                                 "phase_sr.gp.png", reference=grid.reference)
    plots.phase_figure(grid, out / "phase_sr.png")
    print(f"wrote {out}/phase_sr.csv, trials.csv, plot.gp, phase_sr.png")
    return EXIT_OK


def cmd_phase_n(args):
    master = _master_seed(args)
    out = _prepare_out_dir(args.out_dir, args.force)
    config = _solver_config(args, master)
    grid = harness.phase_transition_n(args.vary, args.n, args.range,
                                      fixed_value=args.fixed, trials=args.trials,
                                      separated=args.separated, config=config,
                                      master_seed=master, jobs=args.jobs)
    name = f"phase_n_{args.vary}"
    lines = _echo_lines(args, master) + [f"reference: {grid.reference}"]
    harness.write_phase_csv(grid, out / f"{name}.csv", header_lines=lines)
    harness.write_trials_csv(grid.outcomes, out / "trials.csv", header_lines=lines)
    harness.write_gnuplot_script(out / "plot.gp", "phase_n", f"{name}.csv",
                                 f"{name}.gp.png", reference=grid.reference)
    plots.phase_figure(grid, out / f"{name}.png")
    print(f"wrote {out}/{name}.csv, trials.csv, plot.gp, {name}.png")
    return EXIT_OK


def cmd_convergence(args):
    master = _master_seed(args)
    out = _prepare_out_dir(args.out_dir, args.force)
    config = _solver_config(args, master)
    traces = harness.convergence_study(args.n, args.s, args.r, config=config,
                                       master_seed=master)
    lines = _echo_lines(args, master)
    harness.write_convergence_csv(traces, out / "convergence.csv", header_lines=lines)
    harness.write_gnuplot_script(out / "plot.gp", "convergence", "convergence.csv",
                                 "convergence.gp.png", n_values=[t.n for t in traces])
    plots.convergence_figure(traces, out / "convergence.png")
    print(f"wrote {out}/convergence.csv, plot.gp, convergence.png")
    for trace in traces:
        print(f"n={trace.n}: {trace.stop_reason} after {trace.iterations} iterations, "
              f"final rel_error={trace.rel_errors[-1]:.3e}")
    if all(t.stop_reason == "converged" for t in traces):
        return EXIT_OK
    return EXIT_NONCONVERGED


def _add_solver_flags(p):
    p.add_argument("--eta", type=float, default=None,
                   help="fixed step size (default: backtracking line search)")
    p.add_argument("--eps", type=float, default=1.0 / 3.0,
                   help="feasible-set inflation, sigma = sigma_1/(1-eps)")
    p.add_argument("--max-iters", dest="max_iters", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-5,
                   help="stopping threshold on the measurement residual")
    p.add_argument("--mu", type=float, default=None,
                   help="incoherence bound override (default: data-driven)")


def build_parser():
    parser = _Parser(prog="vhl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[], help="generate a random instance file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--separated", action="store_true",
                   help="enforce cyclic location gap >= 1/n")
    p.add_argument("--subspace", choices=["dft", "iid"], default="dft")
    p.add_argument("--seed", type=int, default=None, help="defaults to $VHL_SEED or 0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="run the projected gradient solver on an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--r", type=int, default=None, help="model order (default: from file)")
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=None,
                   help="sketch seed (default: instance seed)")
    p.add_argument("--save-factors", action="store_true")
    p.add_argument("--report", required=True, help="output report JSON path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("music", help="extract locations and weights from an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--source", choices=["solve", "truth"], default="solve",
                   help="use the solver output or the stored ground truth")
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--grid-size", dest="grid_size", type=int, default=4096)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_music)

    p = sub.add_parser("phase", help="success-probability grid over (s, r) at fixed n")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--s", type=parse_int_list, default=list(range(1, 9)),
                   help="range syntax a..b[:step]")
    p.add_argument("--r", type=parse_int_list, default=list(range(1, 9)))
    p.add_argument("--trials", type=int, default=harness.DEFAULT_TRIALS)
    p.add_argument("--separated", action="store_true")
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count())
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("phase-n", help="success-probability grid over (n, s) or (n, r)")
    p.add_argument("--vary", choices=["s", "r"], required=True)
    p.add_argument("--fixed", type=int, default=4, help="value of the frozen parameter")
    p.add_argument("--n", type=parse_int_list, required=True)
    p.add_argument("--range", type=parse_int_list, required=True,
                   help="values of the varied parameter")
    p.add_argument("--trials", type=int, default=harness.DEFAULT_TRIALS)
    p.add_argument("--separated", action="store_true")
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count())
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_phase_n)

    p = sub.add_parser("convergence", help="per-iteration error traces for several n")
    p.add_argument("--n", type=parse_int_list, required=True)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--r", type=int, default=4)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_convergence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"vhl: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, SeparationError) as exc:
        print(f"vhl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"vhl: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
