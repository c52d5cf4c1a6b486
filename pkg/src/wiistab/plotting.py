"""Figures for simulation envelopes and table reproductions (PNG, headless)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dde import Trajectory, envelope  # noqa: E402

__all__ = ["STYLE", "plot_trajectory", "plot_table"]

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}

# Plotting every grid point of a 1e6-step run buys nothing visible.
MAX_POINTS = 5000


def _thin(n: int) -> slice:
    return slice(None, None, max(1, n // MAX_POINTS))


def plot_trajectory(traj: Trajectory, path, sigma: float | None = None, title: str = "") -> Path:
    """States on top, ``e^{sigma t} |x(t)|`` below when ``sigma`` is given."""
    path = Path(path)
    sl = _thin(traj.times.size)
    rows = 2 if sigma is not None else 1
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(rows, 1, sharex=True, squeeze=False, figsize=(6.4, 2.4 * rows + 0.6))
        ax = axes[0, 0]
        for i in range(traj.n):
            ax.plot(traj.times[sl], traj.states[sl, i], lw=1.0, label=f"$x_{i + 1}$")
        ax.set_ylabel("state")
        ax.legend(ncol=min(traj.n, 4), loc="upper right")
        if title:
            ax.set_title(title)
        if sigma is not None:
            ax = axes[1, 0]
            ax.plot(traj.times[sl], envelope(traj, sigma)[sl], color="k", lw=1.0)
            ax.set_ylabel(rf"$e^{{{sigma:g}t}}\,\|x(t)\|$")
        axes[-1, 0].set_xlabel("t")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_table(rows: list[dict], path, x_key: str, y_label: str, title: str = "") -> Path:
    """Reference against computed values for one reproduction table."""
    path = Path(path)
    labels = [r[x_key] for r in rows]
    categorical = any(isinstance(v, str) for v in labels)
    x = np.arange(len(rows), dtype=float) if categorical else np.array(labels, dtype=float)
    ref = np.array([r["reference"] for r in rows], dtype=float)
    got = np.array([np.nan if r["computed"] is None else r["computed"] for r in rows], dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, ref, "o--", color="0.5", label="reference")
        ax.plot(x, got, "s-", color="C0", label="computed")
        ax.set_xlabel(x_key)
        if categorical:
            ax.set_xticks(x, labels)
        ax.set_ylabel(y_label)
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
