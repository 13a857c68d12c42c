"""Matplotlib figures written next to the tabular outputs.

Figures use the Agg backend and strip the software tag from PNG metadata
so reruns produce identical bytes.
"""
from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write_bytes  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "figure.dpi": 100,
}


def _save(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(Path(path), buf.getvalue())


def plot_training(history, path) -> None:
    """Loss curves and validation balanced accuracy per epoch."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7, 2.8))
        epochs = [m.epoch for m in history]
        ax1.plot(epochs, [m.train_loss for m in history], marker="o", ms=3, label="train")
        ax1.plot(epochs, [m.val_loss for m in history], marker="o", ms=3, label="validation")
        ax1.set_xlabel("epoch")
        ax1.set_ylabel("BCE loss")
        ax1.legend()
        ax2.plot(epochs, [m.val_balanced_accuracy for m in history], marker="o", ms=3, color="C2")
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("val. balanced accuracy")
        ax2.set_ylim(0.4, 1.01)
        fig.tight_layout()
        _save(fig, path)


def plot_viz(result, path, baseline_p95=None) -> None:
    """Synthesized image beside its objective trace."""
    with plt.rc_context(STYLE):
        fig, (ax_img, ax_tr) = plt.subplots(1, 2, figsize=(7, 3), gridspec_kw={"width_ratios": [1, 1.4]})
        ax_img.imshow(result.image[0], cmap="gray", vmin=0, vmax=1)
        ax_img.set_title(f"layer {result.layer}, channel {result.channel}")
        ax_img.axis("off")
        it = np.arange(len(result.trace))
        ax_tr.plot(it, result.trace[:, 0], label="activation f")
        ax_tr.plot(it, result.trace[:, 2], label="f - lambda R")
        if baseline_p95 is not None:
            ax_tr.axhline(baseline_p95, color="0.5", ls="--", lw=0.8, label="noise 95th pct")
        ax_tr.set_xlabel("iteration")
        ax_tr.legend(fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_grid(results_by_layer: dict, path) -> None:
    """One row per layer, one column per visualized channel."""
    layers = sorted(results_by_layer)
    ncols = max(len(v) for v in results_by_layer.values())
    first = results_by_layer[layers[0]][0].image[0]
    aspect = first.shape[1] / first.shape[0]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(len(layers), ncols, squeeze=False,
                                 figsize=(1.6 * ncols * aspect + 0.6, 1.6 * len(layers)))
        for r, layer in enumerate(layers):
            for c in range(ncols):
                ax = axes[r][c]
                ax.axis("off")
                if c < len(results_by_layer[layer]):
                    res = results_by_layer[layer][c]
                    ax.imshow(res.image[0], cmap="gray", vmin=0, vmax=1)
                    ax.set_title(f"L{layer} ch{res.channel}", fontsize=7)
        fig.tight_layout()
        _save(fig, path)
