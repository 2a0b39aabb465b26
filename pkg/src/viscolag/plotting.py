"""SVG figures (matplotlib, Agg backend).  CSV files remain the data contract."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "viscolag"  # deterministic element ids


def timeseries_svg(path, t, curves: dict, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, v in curves.items():
        v = np.asarray(v, dtype=float)
        ok = np.isfinite(v) & (v > 0)
        if ok.any():
            ax.semilogy(np.asarray(t)[ok], v[ok], label=name)
    ax.set_xlabel("t")
    if title:
        ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def loglog_svg(path, x, curves: dict, xlabel="kappa"):
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, v in curves.items():
        v = np.asarray(v, dtype=float)
        ok = v > 0
        if ok.any():
            ax.loglog(np.asarray(x)[ok], v[ok], "o-", label=name)
    ax.set_xlabel(xlabel)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
