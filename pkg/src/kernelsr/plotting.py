"""Matplotlib figures written next to the CSV reports.

Figures are saved with fixed metadata and a fixed SVG hash salt so that the
same inputs always produce the same bytes.
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .corpus import DOMAIN_GROUPS, VoteTable, winners  # noqa: E402

STYLE = {
    "svg.hashsalt": "kernelsr",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _metadata(path: Path) -> dict:
    suffix = path.suffix.lower()
    if suffix == ".svg":
        return {"Date": None, "Creator": None}
    if suffix == ".pdf":
        return {"CreationDate": None, "ModDate": None, "Producer": None, "Creator": None}
    if suffix == ".png":
        return {"Software": None}
    return {}


@contextmanager
def figure(path: str | os.PathLike, **subplot_kw):
    """Create a figure, yield ``(fig, ax)``, then save it reproducibly and close."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(**subplot_kw)
        try:
            yield fig, ax
            fig.tight_layout()
            fig.savefig(path, metadata=_metadata(path), dpi=120)
        finally:
            plt.close(fig)


def plot_kernel_scatter(proj, clustering, labels, path, annotate: bool = True) -> None:
    """2-D PCA view of kernel vectors, one color per cluster."""
    coords = proj.coords
    assign = np.asarray(clustering.assignments)
    cmap = plt.get_cmap("tab10")
    with figure(path, figsize=(6.0, 4.5)) as (fig, ax):
        for c in range(clustering.k):
            m = assign == c
            if m.any():
                ax.scatter(coords[m, 0], coords[m, 1], s=28, color=cmap(c % 10),
                           label=f"cluster {c}", edgecolors="k", linewidths=0.4)
        if annotate and labels:
            for (x, y), lab in zip(coords, labels):
                if lab:
                    ax.annotate(lab, (x, y), fontsize=6, xytext=(3, 3), textcoords="offset points")
        ev = proj.explained_variance
        ax.set_xlabel(f"PC1 (var {ev[0]:.3g})")
        ax.set_ylabel(f"PC2 (var {ev[1]:.3g})")
        ax.set_title("Kernel clusters (PCA projection)")
        ax.legend(fontsize=7, loc="best", frameon=False)


def plot_vote_table(table: VoteTable, path) -> None:
    """Grouped bars of votes per model and domain; winners outlined."""
    models = table.models()
    win = winners(table)
    x = np.arange(len(DOMAIN_GROUPS))
    width = 0.8 / max(len(models), 1)
    with figure(path, figsize=(6.5, 3.8)) as (fig, ax):
        for i, m in enumerate(models):
            vals = [table.get(m, d) for d in DOMAIN_GROUPS]
            bars = ax.bar(x + (i - (len(models) - 1) / 2) * width, vals, width, label=m)
            for bar, d in zip(bars, DOMAIN_GROUPS):
                if win.get(d) == m:
                    bar.set_edgecolor("k")
                    bar.set_linewidth(1.5)
        ax.set_xticks(x, DOMAIN_GROUPS)
        ax.set_yscale("symlog", linthresh=10)
        ax.set_ylabel("votes")
        ax.set_title("Votes per model and domain")
        ax.legend(fontsize=7, frameon=False, ncol=len(models))


def plot_kernels(kernels, titles, path, ncols: int = 7) -> None:
    """Gallery of kernels as images, e.g. the registry representatives."""
    n = len(kernels)
    ncols = max(1, min(ncols, n))
    nrows = max(1, -(-n // ncols))
    with figure(path, nrows=nrows, ncols=ncols, figsize=(1.6 * ncols, 1.8 * nrows),
                squeeze=False) as (fig, axes):
        for ax in axes.ravel():
            ax.axis("off")
        for ax, k, t in zip(axes.ravel(), kernels, titles):
            ax.imshow(k, cmap="viridis", interpolation="nearest")
            ax.set_title(t, fontsize=7)


def plot_metric_bars(reports, path) -> None:
    """PSNR per evaluated pair (finite values only)."""
    ids = [r.id for r in reports if np.isfinite(r.psnr_db)]
    vals = [r.psnr_db for r in reports if np.isfinite(r.psnr_db)]
    with figure(path, figsize=(max(4.0, 0.35 * len(ids) + 1.5), 3.2)) as (fig, ax):
        ax.bar(np.arange(len(ids)), vals, color="tab:blue")
        ax.set_xticks(np.arange(len(ids)), ids, rotation=90, fontsize=6)
        ax.set_ylabel("PSNR (dB)")
        ax.set_title("PSNR per pair")
