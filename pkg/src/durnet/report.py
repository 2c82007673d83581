"""Figure rendering for the CLI report paths.

Figures are written next to the delimited outputs they illustrate: the
training loss curve beside history.csv, and an activation-map grid beside
the per-tap image dumps.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_loss_curve(history: list[tuple[int, float]], path) -> None:
    steps = [s for s, _ in history]
    losses = [v for _, v in history]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, losses, lw=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    if losses and min(losses) > 0:
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_activation_grid(maps: list[np.ndarray], taps: list[int], path) -> None:
    n = len(maps)
    fig, axes = plt.subplots(1, n, figsize=(2.6 * n, 2.8), squeeze=False)
    for ax, tap, plane in zip(axes[0], taps, maps):
        ax.imshow(plane, cmap="gray", vmin=0.0, vmax=1.0)
        ax.set_title(f"l={tap}", fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
