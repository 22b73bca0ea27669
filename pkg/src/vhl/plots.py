"""Render experiment figures to files (headless matplotlib backend)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import ConvergenceTrace, PhaseGrid


def phase_figure(grid: PhaseGrid, path):
    """Success-probability heatmap with the reference curve overlaid.

    The second grid axis runs along x, the first along y, so (s, r) grids
    show the r s = 20 hyperbola and (n, *) grids the n = 2.5 * line.
    """
    (name_y, vals_y), (name_x, vals_x) = grid.axes
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    extent = [vals_x[0] - 0.5, vals_x[-1] + 0.5, vals_y[0] - 0.5, vals_y[-1] + 0.5]
    im = ax.imshow(grid.rates, origin="lower", extent=extent, aspect="auto",
                   vmin=0.0, vmax=1.0, cmap="gray")

    xs = np.linspace(max(vals_x[0], 1e-6), vals_x[-1], 256)
    if grid.reference == "r*s = 20":
        ax.plot(xs, 20.0 / xs, "r-", lw=1.5, label=grid.reference)
    else:
        ax.plot(xs, 2.5 * xs, "r-", lw=1.5, label=grid.reference)
    ax.set_xlim(extent[0], extent[1])
    ax.set_ylim(extent[2], extent[3])
    ax.set_xlabel(name_x)
    ax.set_ylabel(name_y)
    fixed = ", ".join(f"{k} = {v}" for k, v in sorted(grid.fixed.items()))
    ax.set_title(f"success probability ({fixed}, {grid.trials} trials)", fontsize=9)
    ax.legend(loc="upper right", fontsize=8)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def convergence_figure(traces, path):
    """Log10 relative error against iteration, one line per problem size."""
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for trace in traces:
        ax.plot(np.arange(len(trace.rel_errors)),
                np.log10(np.maximum(trace.rel_errors, 1e-300)),
                label=f"n = {trace.n}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("log10 relative error")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def spectrum_figure(spectrum, path):
    """MUSIC pseudospectrum on a log scale with the refined peaks marked."""
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    ax.semilogy(spectrum.grid, spectrum.values, lw=0.8)
    for tau in spectrum.peaks:
        ax.axvline(tau, color="r", ls="--", lw=0.8)
    ax.set_xlabel("location")
    ax.set_ylabel("pseudospectrum")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
