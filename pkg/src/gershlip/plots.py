"""Matplotlib figure rendering for the CLI report paths.

Figures are written to files next to the delimited output: Gershgorin
circles in the complex plane, the certificate eigenvalue histogram, the
training loss curve, and the fitted output curve.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle

__all__ = [
    "save_disc_figure",
    "save_eigenvalue_histogram",
    "save_loss_curve",
    "save_output_curve",
]


def save_disc_figure(discs, path, title="Gershgorin circles") -> None:
    fig, ax = plt.subplots(figsize=(7, 5))
    lo = min(d.center - d.radius for d in discs)
    hi = max(d.center + d.radius for d in discs)
    span = max(hi - lo, 1e-12)
    for d in discs:
        ax.add_patch(Circle((d.center, 0.0), d.radius, fill=False,
                            edgecolor="tab:blue", alpha=0.6, linewidth=0.8))
    ax.axvline(0.0, color="tab:red", linewidth=1.0, label="Re = 0")
    ax.scatter([d.center for d in discs], [0.0] * len(discs),
               s=6, color="tab:blue", zorder=3)
    ax.set_xlim(lo - 0.05 * span, max(hi, 0.0) + 0.05 * span)
    rmax = max(max(d.radius for d in discs), 1e-12)
    ax.set_ylim(-1.1 * rmax, 1.1 * rmax)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title(title)
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_eigenvalue_histogram(eigs, path, clip_quantile: float | None = None,
                              title="Certificate eigenvalues") -> None:
    """Histogram of eigenvalues; `clip_quantile` truncates the displayed range
    to that multiple of the interquartile range (display only)."""
    eigs = np.asarray(eigs, dtype=float)
    shown = eigs
    if clip_quantile is not None and eigs.size >= 4:
        q1, q3 = np.percentile(eigs, [25, 75])
        iqr = max(q3 - q1, 1e-300)
        lo, hi = q1 - clip_quantile * iqr, q3 + clip_quantile * iqr
        shown = eigs[(eigs >= lo) & (eigs <= hi)]
        if shown.size == 0:
            shown = eigs
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(shown, bins=min(60, max(10, shown.size // 2)), color="tab:blue", alpha=0.8)
    ax.axvline(0.0, color="tab:red", linewidth=1.0)
    ax.set_xlabel("eigenvalue")
    ax.set_ylabel("count")
    if shown.size != eigs.size:
        title = f"{title} ({eigs.size - shown.size} clipped for display)"
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_loss_curve(losses, path, title="Training loss") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(np.arange(len(losses)), losses, color="tab:blue", linewidth=1.0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_output_curve(xs, y_pred, y_target, path, title="Model output") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(xs, y_target, color="tab:gray", linewidth=1.0, label="target")
    ax.plot(xs, y_pred, color="tab:blue", linewidth=1.2, label="model")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
