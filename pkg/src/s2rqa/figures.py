"""Metric figures for the eval command (written as PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import CorpusResult, MissingStepOverlap  # noqa: E402

_MEASURES = ("precision", "recall", "f1")


def plot_annotation_scores(results: dict[str, CorpusResult], path: str | Path) -> Path:
    """Grouped P/R/F1 bars per category, one panel per system."""
    names = list(results)
    fig, axes = plt.subplots(1, len(names), figsize=(5.5 * len(names), 3.6), squeeze=False, sharey=True)
    for ax, name in zip(axes[0], names):
        res = results[name]
        cats = list(res.annotations.categories) + ["Overall"]
        metrics = list(res.annotations.categories.values()) + [res.annotations.overall]
        width = 0.26
        for k, measure in enumerate(_MEASURES):
            xs = [i + (k - 1) * width for i in range(len(cats))]
            ax.bar(xs, [getattr(m, measure) for m in metrics], width, label=measure)
        ax.set_xticks(range(len(cats)))
        ax.set_xticklabels(cats)
        ax.set_ylim(0, 1.05)
        ax.set_title(name)
        ax.grid(axis="y", alpha=0.3)
    axes[0][0].set_ylabel("score")
    axes[0][-1].legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_missing_overlap(overlap: MissingStepOverlap, names: tuple[str, str], path: str | Path) -> Path:
    """Ground-truth missing steps found by both, either, or neither system, plus extras."""
    c = overlap.counts()
    a, b = names
    left = {
        "both": c["both_correct"],
        f"only {a}": c["only_a_correct"],
        f"only {b}": c["only_b_correct"],
        "neither": c["both_missed"],
    }
    right = {
        f"{a} only": c["unnecessary_a"],
        "shared": c["unnecessary_both"],
        f"{b} only": c["unnecessary_b"],
    }
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    for ax, data, title in ((ax1, left, "ground-truth missing steps"), (ax2, right, "unnecessary missing steps")):
        bars = ax.bar(list(data), list(data.values()), color="#4c72b0")
        ax.bar_label(bars)
        ax.set_title(title)
        ax.set_ylabel("count")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
