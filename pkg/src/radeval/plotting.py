"""Figures rendered next to the CSV/JSON report data.

Everything draws on the Agg backend and strips the PNG ``Software`` tag so
that identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from radeval.metrics import PRCurve  # noqa: E402

_RC = {
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_pr_curves(curves: Mapping[str, PRCurve], ap: Mapping[str, float], path, iou_threshold: float):
    """One step curve per class, labelled with its AP."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.5, 4.5))
        for name, curve in curves.items():
            if len(curve):
                r = [0.0, *curve.recall]
                p = [curve.precision[0], *curve.precision]
                ax.step(r, p, where="post", label=f"{name} (AP {ap[name]:.3f})")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_title(f"Precision-recall @ IoU {iou_threshold:g}")
        if any(len(c) for c in curves.values()):
            ax.legend(loc="lower left", frameon=False)
        return _save(fig, path)


def plot_body_parts(hist: Mapping[str, int], path):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        names = list(hist)
        ax.bar(range(len(names)), [hist[n] for n in names], color="#4c72b0")
        ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
        ax.set_ylabel("Images")
        ax.set_title("Body part examined")
        return _save(fig, path)


def plot_comparison(rows: Sequence[tuple[str, float]], path, metric_label: str = "mAP@0.5"):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.5, 0.6 * len(rows) + 1.5))
        names = [n for n, _ in rows][::-1]
        vals = [v for _, v in rows][::-1]
        bars = ax.barh(names, vals, color="#55a868")
        for bar, v in zip(bars, vals):
            ax.text(v + 0.01, bar.get_y() + bar.get_height() / 2, f"{v:.3f}", va="center")
        ax.set_xlim(0, 1.1)
        ax.set_xlabel(metric_label)
        return _save(fig, path)
