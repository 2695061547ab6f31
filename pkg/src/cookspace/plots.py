"""Figure rendering for training and evaluation outputs.

Figures are rendered headlessly straight to files, with fixed metadata
so identical inputs produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import DIRECTIONS, RECALL_KS, EvalReport

PNG_METADATA = {"Software": "cookspace"}


def save_loss_curve(history: Sequence[float], path: str | Path) -> Path:
    """Line plot of per-epoch mean loss."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = range(1, len(history) + 1)
    ax.plot(epochs, history, marker="o", markersize=3, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean batch loss")
    ax.set_title("training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def save_eval_figure(reports: dict[str, EvalReport], path: str | Path) -> Path:
    """Bar summary of MedR and R@K per direction, with std whiskers."""
    path = Path(path)
    directions = [d for d in DIRECTIONS if d in reports]
    fig, (ax_medr, ax_recall) = plt.subplots(1, 2, figsize=(9, 4))

    medr_means = []
    medr_stds = []
    for d in directions:
        mean, std = reports[d].summary()["medr"]
        medr_means.append(mean)
        medr_stds.append(std)
    xs = range(len(directions))
    ax_medr.bar(xs, medr_means, yerr=medr_stds, capsize=4, color="#4878a8")
    ax_medr.set_xticks(list(xs))
    ax_medr.set_xticklabels(directions, fontsize=8)
    ax_medr.set_ylabel("median rank")
    ax_medr.set_title("MedR (lower is better)")

    width = 0.8 / max(len(directions), 1)
    for i, d in enumerate(directions):
        summary = reports[d].summary()
        means = [summary[f"r_at_{k}"][0] for k in RECALL_KS]
        stds = [summary[f"r_at_{k}"][1] for k in RECALL_KS]
        offsets = [j + i * width for j in range(len(RECALL_KS))]
        ax_recall.bar(offsets, means, width=width, yerr=stds, capsize=3, label=d)
    ax_recall.set_xticks([j + width * (len(directions) - 1) / 2 for j in range(len(RECALL_KS))])
    ax_recall.set_xticklabels([f"R@{k}" for k in RECALL_KS])
    ax_recall.set_ylabel("recall (%)")
    ax_recall.set_ylim(0, 100)
    ax_recall.set_title("recall at K")
    ax_recall.legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path
