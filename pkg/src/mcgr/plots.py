"""Static plot emission: PR curves, mAP-vs-epoch, class frequencies, and
location/size histograms."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .manifest import DatasetStats  # noqa: E402


def plot_pr_curves(curves: dict[str, list[tuple[float, float]]], out_path: str | Path) -> None:
    if not curves:
        raise ValueError("no PR curves to plot")
    fig, ax = plt.subplots(figsize=(5, 5))
    for label, points in curves.items():
        if points:
            r, p = zip(*points)
        else:
            r, p = (), ()
        ax.plot(r, p, marker=".", label=label)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_map_history(epochs: list[int], maps: list[float], out_path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, maps, marker="o")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("mAP")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_class_frequencies(stats: DatasetStats, class_names: list[str],
                           out_path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    x = range(len(class_names))
    width = 0.25
    for k, split in enumerate(("train", "val", "test")):
        counts = stats.class_counts[split]
        ax.bar([i + (k - 1) * width for i in x], counts, width=width, label=split)
    ax.set_xticks(list(x))
    ax.set_xticklabels(class_names, rotation=30, ha="right")
    ax.set_ylabel("Instances")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_location_size(stats: DatasetStats, out_path: str | Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, hist, title in (
        (axes[0], stats.location_hist, "Object location"),
        (axes[1], stats.size_hist, "Object size"),
    ):
        im = ax.imshow(hist, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
