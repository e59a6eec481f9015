"""Figure rendering for the CLI report paths.

Every function writes one PNG next to the delimited output and returns the
path.  The CSV files stay the canonical record; figures are a convenience
and can be disabled with --no-plots.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "law_figure",
    "paths_figure",
    "cost_figure",
    "residual_figure",
    "sweep_figure",
]

plt.rcParams.update({"figure.dpi": 110, "axes.grid": True, "grid.alpha": 0.3})


def law_figure(nodes, phi, psi, out_path):
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(nodes, phi, label="deterministic profile")
    ax.plot(nodes, psi, label="noise response kernel")
    ax.set_xlabel("t")
    ax.set_title("feedback law components")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def paths_figure(nodes, states, controls, out_path):
    states = np.atleast_2d(states)
    controls = np.atleast_2d(controls)
    fig, axes = plt.subplots(2, 1, figsize=(7.0, 5.6), sharex=True)
    for row in states:
        axes[0].plot(nodes, row, lw=0.9, alpha=0.8)
    for row in controls:
        axes[1].plot(nodes, row, lw=0.9, alpha=0.8)
    axes[0].set_ylabel("state")
    axes[1].set_ylabel("control")
    axes[1].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def cost_figure(path_costs, out_path):
    costs = np.asarray(path_costs)
    running = np.cumsum(costs) / np.arange(1, len(costs) + 1)
    fig, axes = plt.subplots(1, 2, figsize=(8.4, 3.6))
    axes[0].hist(costs, bins=min(60, max(10, len(costs) // 20)))
    axes[0].set_xlabel("path cost")
    axes[1].plot(running)
    axes[1].set_xlabel("paths")
    axes[1].set_ylabel("running mean")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def residual_figure(reports, out_path):
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for rep in reports:
        times = rep.extras.get("probe_times")
        res = rep.extras.get("residuals")
        if times is None or res is None:
            continue
        ax.semilogy(times, np.abs(res) + 1e-20, marker=".", lw=0.8, label=rep.name)
    ax.set_xlabel("t")
    ax.set_ylabel("|residual|")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def sweep_figure(alphas, columns, out_path):
    """columns: mapping name -> values aligned with alphas."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for name, vals in columns.items():
        ax.plot(alphas, vals, marker="o", label=name)
    ax.set_xlabel("alpha")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
