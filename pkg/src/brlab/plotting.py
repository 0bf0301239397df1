"""
Figures for the report path.

Each function takes plain tables (the same rows written to CSV) and saves
one PNG.  The Agg backend is selected on import so nothing needs a display.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import atomic_write_bytes  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 4.5
params = {
    "axes.labelsize": 9,
    "font.size": 8,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 150,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path: Path) -> Path:
    buf = io.BytesIO()
    fig.tight_layout()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    return atomic_write_bytes(path, buf.getvalue())


def plot_face_traces(path: Path, x: np.ndarray, traces: Sequence[np.ndarray], epsilons: Sequence[float]) -> Path:
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for eps, tr in zip(epsilons, traces):
            ax.plot(x, tr, label=f"eps={eps:g}")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_xlabel("x_1")
        ax.set_ylabel("u(x_1, 0)")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_monotonicity(path: Path, rows: Sequence[Sequence[float]]) -> Path:
    """rows: (epsilon, center_index, r, I, ...)."""
    arr = np.asarray(rows, dtype=float)
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for eps in sorted(set(arr[:, 0]), reverse=True):
            sel = (arr[:, 0] == eps) & (arr[:, 1] == 0)
            ax.semilogx(arr[sel, 2], arr[sel, 3], marker="o", label=f"eps={eps:g}")
        ax.set_xlabel("r")
        ax.set_ylabel("I(r, x)")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_decay(path: Path, epsilons: Sequence[float], values: Sequence[float], slope) -> Path:
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.loglog(epsilons, values, marker="o", label="potential mass off Sigma")
        if slope is not None:
            e = np.asarray(epsilons)
            ref = values[0] * (e / e[0])
            ax.loglog(e, ref, ls="--", color="gray", label="slope 1")
            ax.set_title(f"fitted slope {slope:.3f}")
        ax.set_xlabel("eps")
        ax.set_ylabel("int W(u)/eps")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_stationarity(path: Path, epsilons: Sequence[float], raw: Sequence[float], combined: Sequence[float]) -> Path:
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.loglog(epsilons, raw, marker="o", label="|<dV, X>| (fields off Sigma)")
        ax.loglog(epsilons, np.maximum(combined, 1e-300), marker="s", label="|<dV, X> + boundary term|")
        ax.set_xlabel("eps")
        ax.set_ylabel("max over battery")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_energy(path: Path, epsilons: Sequence[float], dirichlet: Sequence[float], potential: Sequence[float]) -> Path:
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        ax.semilogx(epsilons, dirichlet, marker="o", label="Dirichlet")
        ax.semilogx(epsilons, potential, marker="s", label="potential")
        ax.semilogx(epsilons, np.add(dirichlet, potential), marker="^", label="total")
        ax.set_xlabel("eps")
        ax.set_ylabel("energy")
        ax.legend(loc="best")
        return _save(fig, path)
