"""Figure rendering for run outputs (PNG next to the CSV files)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .performance import aggregate_stats  # noqa: E402


def _label(result):
    if result.axis is None:
        return result.scheme
    return f"{result.scheme} ({result.axis}={result.axis_value:g})"


def plot_cdf(results, path):
    """Empirical SE CDFs, one curve per run point."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for result in results:
        if not result.se_samples.size:
            continue
        values, prob = aggregate_stats(result.se_samples).cdf_points()
        ax.plot(values, prob, lw=1.4, label=_label(result))
    ax.set_xlabel("Spectral efficiency [bit/s/Hz]")
    ax.set_ylabel("Cumulative probability")
    ax.set_ylim(0.0, 1.0)
    ax.grid(alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep(results, path):
    """Mean and 95%-likely SE against the sweep axis."""
    by_scheme = {}
    for result in results:
        by_scheme.setdefault(result.scheme, []).append(result)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for scheme, points in by_scheme.items():
        points = sorted(points, key=lambda r: r.axis_value)
        xs = [r.axis_value for r in points]
        ax.errorbar(xs, [r.mean_se for r in points],
                    yerr=[r.mean_std_err for r in points],
                    marker="o", ms=4, lw=1.4, capsize=3, label=f"{scheme} mean")
        ax.plot(xs, [r.se_p5 for r in points], marker="s", ms=3, lw=1.0,
                ls="--", label=f"{scheme} 95%-likely")
    ax.set_xlabel(results[0].axis)
    ax.set_ylabel("Spectral efficiency [bit/s/Hz]")
    ax.grid(alpha=0.4)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_traces(results, path):
    """Pilot-power solver objective against the outer iteration."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    drawn = False
    for result in results:
        for batch_index, trace in result.traces:
            ax.plot(range(len(trace)), trace, lw=1.2,
                    label=f"{_label(result)} batch {batch_index}")
            drawn = True
    if not drawn:
        plt.close(fig)
        return False
    ax.set_xlabel("Outer iteration")
    ax.set_ylabel("Weighted sum SE [bit/s/Hz]")
    ax.grid(alpha=0.4)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def render_figures(results, outdir):
    """Render the standard figure set for a run or sweep."""
    results = [r for r in results if r.se_samples.size]
    if not results:
        return []
    written = []
    cdf_path = os.path.join(outdir, "fig_cdf.png")
    plot_cdf(results, cdf_path)
    written.append(cdf_path)
    if len(results) > 1 and results[0].axis is not None:
        sweep_path = os.path.join(outdir, "fig_sweep.png")
        plot_sweep(results, sweep_path)
        written.append(sweep_path)
    trace_path = os.path.join(outdir, "fig_trace.png")
    if plot_traces(results, trace_path):
        written.append(trace_path)
    return written
