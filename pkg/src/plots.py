# src/plots.py
"""Report figures. Headless (Agg); every function writes one PNG and returns its path."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

DPI = 150


def _save(fig, path: str | os.PathLike) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-stable
    fig.savefig(p, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return p


def plot_confusion(cm: np.ndarray, class_names: Sequence[str], path: str | os.PathLike, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(len(class_names)), class_names, rotation=45, ha="right")
    ax.set_yticks(range(len(class_names)), class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    top = cm.max() if cm.size else 0
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, int(cm[i, j]), ha="center", va="center",
                    color="white" if cm[i, j] > top / 2 else "black", fontsize=8)
    ax.set_title(title)
    return _save(fig, path)


def plot_ood_histogram(report, path: str | os.PathLike, bins: int = 50, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    lo = min(report.in_dist_log_pseudocounts.min(), report.ood_log_pseudocounts.min())
    hi = max(report.in_dist_log_pseudocounts.max(), report.ood_log_pseudocounts.max())
    edges = np.linspace(lo, hi if hi > lo else lo + 1.0, bins + 1)
    ax.hist(report.in_dist_log_pseudocounts, bins=edges, alpha=0.6, density=True, label="in-distribution")
    ax.hist(report.ood_log_pseudocounts, bins=edges, alpha=0.6, density=True, label="OOD")
    ax.set_xlabel("log α" if report.mode == "alpha" else "log e")
    ax.set_ylabel("density")
    ax.legend()
    ax.set_title(title)
    return _save(fig, path)


def plot_latent_scatter(frame: pd.DataFrame, path: str | os.PathLike, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(5, 5))
    for label, group in frame.groupby("label", sort=True):
        ax.scatter(group["mu0"], group["mu1"], s=6, alpha=0.7, label=label)
    ax.set_xlabel("μ₀")
    ax.set_ylabel("μ₁")
    ax.legend(markerscale=3, fontsize=8)
    ax.set_title(title)
    return _save(fig, path)


def plot_loss_traces(traces: Mapping[str, Sequence[float]], path: str | os.PathLike, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, trace in sorted(traces.items()):
        ax.plot(range(1, len(trace) + 1), trace, label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.set_title(title)
    return _save(fig, path)


def plot_reconstruction(window: np.ndarray, recon: np.ndarray, path: str | os.PathLike,
                        channel: int = 0, title: str = "") -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
    for ax, img, name in zip(axes, (window, np.clip(recon, 0.0, 1.0)), ("input", "reconstruction")):
        ax.imshow(img[..., channel].T, aspect="auto", origin="lower", vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_xlabel("frame")
        ax.set_title(name)
    axes[0].set_ylabel("subcarrier")
    fig.suptitle(title)
    return _save(fig, path)


def plot_surrogate_tree(tree, path: str | os.PathLike, title: Optional[str] = None) -> Path:
    # leaves spread evenly left to right; parents centered over their children
    pos = {}
    next_leaf = [0]

    def place(node_id: int, depth: int) -> float:
        node = tree.nodes[node_id]
        if node.is_leaf:
            x = float(next_leaf[0])
            next_leaf[0] += 1
        else:
            x = (place(node.left, depth + 1) + place(node.right, depth + 1)) / 2.0
        pos[node_id] = (x, -float(depth))
        return x

    place(0, 0)
    fig, ax = plt.subplots(figsize=(max(6.0, 2.2 * tree.n_leaves), 1.8 * (tree.depth + 1)))
    for node in tree.nodes:
        x, y = pos[node.node_id]
        if not node.is_leaf:
            for child in (node.left, node.right):
                cx, cy = pos[child]
                ax.plot([x, cx], [y, cy], color="grey", linewidth=1, zorder=1)
        text = f"{tree.label(node)}\nn={node.n_samples}"
        if node.is_leaf:
            text += "\n" + " ".join(str(c) for c in node.class_counts)
        ax.text(x, y, text, ha="center", va="center", fontsize=8, zorder=2,
                bbox=dict(boxstyle="round", fc="#d8e8f5" if node.is_leaf else "white", ec="grey"))
    ax.set_xlim(-0.7, max(tree.n_leaves - 1, 0) + 0.7)
    ax.set_ylim(-tree.depth - 0.6, 0.6)
    ax.axis("off")
    if title:
        ax.set_title(title)
    return _save(fig, path)
