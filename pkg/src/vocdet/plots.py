"""Figure rendering: mel-residual panels, confusion heatmaps, FAR/FRR
curves, and the loss-weight ablation line."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .audio import MelParams, Waveform, mel_spectrogram
from .evaluation import ConfusionMatrix
from .vocoders import spectrogram_difference


def render_specdiff(original: Waveform, vocoded: Waveform, p: MelParams, out_path) -> Path:
    """Three panels: original mel, vocoded mel, and their residual (the
    reconstruction artifacts)."""
    mel_a = mel_spectrogram(original, p).values
    mel_b = mel_spectrogram(vocoded, p).values
    residual = spectrogram_difference(original, vocoded, p)
    n = residual.shape[0]

    fig, axes = plt.subplots(1, 3, figsize=(13, 3.4), constrained_layout=True)
    for ax, data, title in (
        (axes[0], mel_a[:n], "original"),
        (axes[1], mel_b[:n], "vocoded"),
    ):
        im = ax.imshow(data.T, origin="lower", aspect="auto", cmap="magma")
        ax.set_title(title)
        ax.set_xlabel("frame")
        ax.set_ylabel("mel bin")
        fig.colorbar(im, ax=ax)
    lim = max(float(np.max(np.abs(residual))), 1e-12)
    im = axes[2].imshow(residual.T, origin="lower", aspect="auto", cmap="coolwarm",
                        vmin=-lim, vmax=lim)
    axes[2].set_title("residual (original - vocoded)")
    axes[2].set_xlabel("frame")
    axes[2].set_ylabel("mel bin")
    fig.colorbar(im, ax=axes[2])
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_confusion(cm: ConfusionMatrix, out_path, class_names: list[str] | None = None) -> Path:
    """Row-normalized heatmap with count annotations."""
    rates = cm.rates()
    k = cm.num_classes
    names = class_names or [str(i) for i in range(k)]
    fig, ax = plt.subplots(figsize=(1.1 * k + 2.5, 1.1 * k + 2), constrained_layout=True)
    im = ax.imshow(rates, cmap="Blues", vmin=0.0, vmax=1.0)
    for i in range(k):
        for j in range(k):
            color = "white" if rates[i, j] > 0.5 else "black"
            ax.text(j, i, f"{cm.counts[i, j]}\n{rates[i, j]:.2f}",
                    ha="center", va="center", color=color, fontsize=9)
    ax.set_xticks(range(k), names)
    ax.set_yticks(range(k), names)
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    fig.colorbar(im, ax=ax, label="row rate")
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_det(curve: list[tuple[float, float, float]], out_path) -> Path:
    """FAR and FRR versus threshold (finite thresholds only)."""
    rows = [(t, a, r) for t, a, r in curve if np.isfinite(t)]
    ts = [r[0] for r in rows]
    far = [r[1] for r in rows]
    frr = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    ax.plot(ts, far, label="FAR (real accepted as fake)")
    ax.plot(ts, frr, label="FRR (fake rejected)")
    ax.set_xlabel("threshold")
    ax.set_ylabel("rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    ax.grid(alpha=0.3)
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_ablation(rows: list[tuple[float, float]], out_path) -> Path:
    """Loss weight versus test EER."""
    rows = sorted(rows)
    lams = [r[0] for r in rows]
    eers = [100.0 * r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
    ax.plot(lams, eers, marker="o")
    ax.set_xlabel("binary-loss weight")
    ax.set_ylabel("test EER (%)")
    ax.grid(alpha=0.3)
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
