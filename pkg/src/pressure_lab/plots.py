"""Deterministic SVG rendering for report outputs.

Figures are a convenience companion to the delimited files: a fixed
hash salt and stripped date metadata keep the bytes identical across
reruns of the same configuration.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt


def _new_axes():
    matplotlib.rcParams["svg.hashsalt"] = "pressure-lab"
    fig = plt.figure(figsize=(7.0, 4.5), dpi=100)
    return fig, fig.add_subplot(111)


def _save(fig, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def pressure_curve_figure(curve, transition, path: str) -> None:
    """Hidden-pressure and atomic lines with the transition marked."""
    fig, ax = _new_axes()
    ax.plot(curve.t_grid, curve.p_tilde, color="#1f77b4", label="hidden pressure")
    ax.plot(
        curve.t_grid,
        curve.atomic,
        color="#d62728",
        linestyle="--",
        label="atomic line",
    )
    if transition is not None and transition.has_transition:
        tc = transition.t_c
        ax.axvline(tc, color="#555555", linewidth=0.8, linestyle=":")
        level = float(np.interp(tc, curve.t_grid, curve.p))
        ax.plot([tc], [level], marker="o", color="#2ca02c", label=f"kink at t={tc:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("pressure")
    ax.legend(loc="best")
    ax.set_title("pressure curve")
    _save(fig, path)


def decay_figure(series, fitted_rate: float, path: str) -> None:
    """Correlation magnitudes against iteration count, log scale."""
    fig, ax = _new_axes()
    n = np.arange(1, len(series) + 1)
    positive = np.asarray(series) > 0
    if np.any(positive):
        ax.semilogy(n[positive], np.asarray(series)[positive], marker="o",
                    color="#1f77b4", label="|C_n|")
        if fitted_rate > 0:
            anchor = np.asarray(series)[positive][0]
            guide = anchor * fitted_rate ** (n - n[positive][0])
            ax.semilogy(n, guide, color="#d62728", linestyle="--",
                        label=f"rate {fitted_rate:.3f}")
    ax.set_xlabel("n")
    ax.set_ylabel("correlation")
    ax.legend(loc="best")
    ax.set_title("correlation decay")
    _save(fig, path)
