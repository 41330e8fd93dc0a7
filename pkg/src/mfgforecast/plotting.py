"""SVG figures for forecasts and calibration runs.

Figures are built on ``matplotlib.figure.Figure`` directly (no pyplot state)
and saved with a fixed hash salt and no date stamp, so identical inputs give
identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .grid import Grid

SOLUTION_COLOR = "tab:blue"
DATA_COLOR = "tab:red"

STYLE = {
    "svg.hashsalt": "mfgforecast",
    "svg.fonttype": "path",
    "font.size": 8,
    "axes.titlesize": 8,
    "axes.labelsize": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "lines.linewidth": 1.2,
}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


def _new(nrows=1, ncols=1, size=(4.0, 3.0)):
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=size, layout="constrained")
        axes = fig.subplots(nrows, ncols, squeeze=False)
    return fig, axes


def plot_weeks(m_sol: np.ndarray, m_data: np.ndarray, g: Grid, path, week_labels=None) -> Path:
    """One panel per week: computed density in blue, data in red."""
    nt = m_sol.shape[1]
    ncols = 4
    nrows = -(-nt // ncols)
    with matplotlib.rc_context(STYLE):
        fig, axes = _new(nrows, ncols, size=(2.2 * ncols, 1.8 * nrows))
        for j, ax in enumerate(axes.flat):
            if j >= nt:
                ax.set_visible(False)
                continue
            ax.plot(g.x, m_sol[:, j], color=SOLUTION_COLOR, label="solution")
            ax.plot(g.x, m_data[:, j], color=DATA_COLOR, linestyle="--", label="data")
            ax.set_title(week_labels[j] if week_labels else f"week {j + 1}")
            ax.set_xlim(-1, 1)
        axes.flat[0].legend(loc="upper left", frameon=False)
        fig.supxlabel("sentiment x")
        fig.supylabel("density m")
    return _save(fig, path)


def plot_true_cost(tc: np.ndarray, g: Grid, path) -> Path:
    with matplotlib.rc_context(STYLE):
        fig, axes = _new()
        ax = axes[0, 0]
        ax.semilogy(g.t, np.maximum(tc, 1e-300), marker="o", color=SOLUTION_COLOR)
        ax.set_xlabel("t")
        ax.set_ylabel("true cost")
    return _save(fig, path)


def plot_error_heatmap(err: np.ndarray, g: Grid, path, title: str | None = None) -> Path:
    with matplotlib.rc_context(STYLE):
        fig, axes = _new(size=(4.5, 3.2))
        ax = axes[0, 0]
        edges_x = np.concatenate([[g.x[0] - g.hx / 2], g.x + g.hx / 2])
        weeks = np.arange(1, err.shape[1] + 2) - 0.5
        mesh = ax.pcolormesh(weeks, edges_x, err, cmap="viridis", shading="flat")
        fig.colorbar(mesh, ax=ax, label="relative error")
        ax.set_xlabel("week")
        ax.set_ylabel("sentiment x")
        if title:
            ax.set_title(title)
    return _save(fig, path)
