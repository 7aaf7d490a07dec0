"""Figure rendering for comparison reports.

Two figures accompany each comparison: pattern-length histograms per
arm (mined and catalog counts) and an accuracy bar chart per
classifier. Rendering writes PNG files next to the delimited output;
curve data stays in the metrics JSON as point lists.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_length_histograms(comparison: dict, path: str) -> None:
    arms = comparison.get("arms", [])
    if not arms:
        return
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for key, ax, title in (
        ("mined_length_histogram", axes[0], "Frequent patterns by length"),
        ("catalog_length_histogram", axes[1], "Catalog patterns by length"),
    ):
        lengths = sorted({int(k) for arm in arms for k in arm.get(key, {})})
        if not lengths:
            ax.set_title(title + " (empty)")
            continue
        width = 0.8 / len(arms)
        xs = np.arange(len(lengths))
        for i, arm in enumerate(arms):
            hist = arm.get(key, {})
            counts = [hist.get(str(l), 0) for l in lengths]
            ax.bar(xs + i * width, counts, width, label=arm["arm"]["name"])
        ax.set_xticks(xs + width * (len(arms) - 1) / 2)
        ax.set_xticklabels([str(l) for l in lengths])
        ax.set_xlabel("pattern length")
        ax.set_ylabel("count")
        ax.set_title(title)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_accuracy_bars(comparison: dict, path: str) -> None:
    arms = comparison.get("arms", [])
    classifiers = [
        c for c in comparison.get("classifiers", [])
        if any("accuracy" in arm["metrics"].get(c, {}) for arm in arms)
    ]
    if not arms or not classifiers:
        return
    fig, ax = plt.subplots(figsize=(1.8 * max(4, len(classifiers)), 4))
    width = 0.8 / len(arms)
    xs = np.arange(len(classifiers))
    for i, arm in enumerate(arms):
        accs = [arm["metrics"].get(c, {}).get("accuracy", 0.0) for c in classifiers]
        ax.bar(xs + i * width, accs, width, label=arm["arm"]["name"])
    ax.set_xticks(xs + width * (len(arms) - 1) / 2)
    ax.set_xticklabels(classifiers)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("accuracy")
    ax.set_title("Test accuracy by classifier")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_comparison(comparison: dict, out_dir: str) -> list[str]:
    """Render all comparison figures into ``out_dir``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    lengths_path = os.path.join(out_dir, "pattern_lengths.png")
    render_length_histograms(comparison, lengths_path)
    if os.path.exists(lengths_path):
        written.append(lengths_path)
    acc_path = os.path.join(out_dir, "accuracy.png")
    render_accuracy_bars(comparison, acc_path)
    if os.path.exists(acc_path):
        written.append(acc_path)
    return written
