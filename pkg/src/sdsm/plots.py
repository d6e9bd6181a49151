"""Self-contained SVG figures for the CLI outputs."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dataset import atomic_write_text  # noqa: E402

# fixed ids and no timestamp so reruns produce identical files
plt.rcParams["svg.hashsalt"] = "sdsm"
plt.rcParams["svg.fonttype"] = "path"


def _save(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_text(path, buf.getvalue())


def line_plot(path, series: dict, xlabel: str, ylabel: str, title: str = "", logy: bool = False,
              marker: str | None = "o"):
    """``series`` maps a label to ``(x, y)``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, marker=marker, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)


def scatter_vs_truth(path, truth, pred, title: str = ""):
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(truth, pred, s=4, alpha=0.5)
    lo = float(min(np.min(truth), np.min(pred)))
    hi = float(max(np.max(truth), np.max(pred)))
    ax.plot([lo, hi], [lo, hi], color="red", lw=1)
    ax.set_xlabel("truth")
    ax.set_ylabel("prediction")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def density_grid(path, densities: dict, truth: dict | None = None):
    """One panel per parameter; ``densities[name] = (grid, {K: density})``."""
    names = list(densities)
    fig, axes = plt.subplots(len(names), 1, figsize=(6, 2.2 * len(names)), squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        grid, dens = densities[name]
        for k, d in dens.items():
            ax.plot(grid, d, label=f"K={k}")
        if truth and name in truth:
            ax.axvline(truth[name], color="red", ls=":")
        ax.set_ylabel(name)
        ax.legend(fontsize="small")
    fig.tight_layout()
    _save(fig, path)
