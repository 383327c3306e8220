"""Figure rendering for the report paths.

Every CLI stage that emits a report also renders a matplotlib figure next
to the delimited output: HI construction curves from the label stage, the
accuracy / wall-clock trade-off from the sweep, per-model comparison bars
from the experiment stage, and a confusion-matrix heatmap from evaluate.
PNGs are written without the Software metadata chunk so byte-identical
reruns stay byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)
    return path


def health_index_figure(curve, labels, path: str | Path) -> Path:
    """Raw / smoothed / fitted HI for one unit with its stage bands."""
    t = np.arange(1, len(curve.hi_raw) + 1)
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2), sharex=True)
    axes[0].plot(t, curve.hi_raw, lw=0.7, color="tab:gray")
    axes[0].set_title("fused HI")
    axes[1].plot(t, curve.hi_smooth, lw=1.0, color="tab:blue", label="smoothed")
    axes[1].plot(t, curve.hi_fit, lw=1.2, color="tab:red", label="fitted")
    axes[1].legend(frameon=False, fontsize=8)
    axes[1].set_title("smoothed + fitted")
    axes[2].step(t, labels, where="post", color="tab:green")
    axes[2].set_title("health stages")
    axes[2].set_yticks(sorted(set(int(v) for v in labels)))
    for ax in axes:
        ax.set_xlabel("cycle")
    fig.suptitle(f"unit {curve.unit_id}", y=1.02)
    return _save(fig, path)


def sweep_figure(summary: list[dict], path: str | Path) -> Path:
    """Accuracy and training time against kernel count (log x)."""
    counts = [row["kernels"] for row in summary]
    acc = [row["mean_accuracy"] for row in summary]
    acc_std = [row["std_accuracy"] for row in summary]
    sec = [row["mean_train_seconds"] for row in summary]
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.errorbar(counts, acc, yerr=acc_std, marker="o", color="tab:blue", label="accuracy")
    ax.set_xscale("log")
    ax.set_xlabel("kernels")
    ax.set_ylabel("accuracy", color="tab:blue")
    twin = ax.twinx()
    twin.plot(counts, sec, marker="s", color="tab:red", label="train seconds")
    twin.set_ylabel("transform + fit seconds", color="tab:red")
    ax.set_title("kernel count sweep")
    return _save(fig, path)


def experiment_figure(reports, path: str | Path) -> Path:
    """Mean accuracy per (dataset, variant/classifier) as grouped bars."""
    def run_key(report):
        m = report.manifest
        if m.get("protocol") == "exp3":
            return m["classifier"]
        return m["variant"]

    datasets = sorted({r.manifest["dataset"] for r in reports})
    keys = sorted({run_key(r) for r in reports})
    means = np.zeros((len(keys), len(datasets)))
    for i, key in enumerate(keys):
        for j, ds in enumerate(datasets):
            acc = [
                r.accuracy for r in reports
                if run_key(r) == key and r.manifest["dataset"] == ds
            ]
            means[i, j] = np.mean(acc) if acc else np.nan
    width = 0.8 / len(keys)
    x = np.arange(len(datasets))
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(datasets), 3.6))
    for i, key in enumerate(keys):
        ax.bar(x + (i - (len(keys) - 1) / 2) * width, means[i], width, label=key)
    ax.set_xticks(x)
    ax.set_xticklabels(datasets)
    ax.set_ylabel("mean accuracy")
    ax.set_ylim(0, 1.0)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def confusion_figure(confusion: np.ndarray, path: str | Path) -> Path:
    confusion = np.asarray(confusion)
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    im = ax.imshow(confusion, cmap="Blues")
    for (i, j), value in np.ndenumerate(confusion):
        color = "white" if value > confusion.max() / 2 else "black"
        ax.text(j, i, str(int(value)), ha="center", va="center", color=color, fontsize=8)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, fraction=0.046)
    return _save(fig, path)
