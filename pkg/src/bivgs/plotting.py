"""Figures written next to the run-matrix reports."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "bivgs",
}

# no timestamps or version strings, so reruns give identical bytes
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)
    return path


def recall_bars(reports, path, direction: str = "LRL->I", ks=(1, 5, 10)) -> Path:
    """Grouped bars of mean recall@K per variant (error bars: min/max over seeds)."""
    by_variant = defaultdict(list)
    for r in reports:
        if direction in r.recalls:
            by_variant[r.variant].append([r.recalls[direction][k] for k in ks])
    names = list(by_variant)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        width = 0.8 / max(1, len(ks))
        x = np.arange(len(names))
        for j, k in enumerate(ks):
            vals = [np.array(by_variant[n])[:, j] for n in names]
            means = np.array([v.mean() for v in vals])
            lo = means - np.array([v.min() for v in vals])
            hi = np.array([v.max() for v in vals]) - means
            ax.bar(x + (j - (len(ks) - 1) / 2) * width, means, width, yerr=[lo.tolist(), hi.tolist()],
                   capsize=2, label=f"R@{k}")
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=15)
        ax.set_ylim(0, 1)
        ax.set_ylabel("recall")
        ax.set_title(f"{direction} retrieval on the validation split")
        ax.legend(frameon=False, ncol=len(ks))
        return _save(fig, path)


def loss_curves(logs: dict, path, title: str = "") -> Path:
    """Total training loss per step for each variant; ``logs`` maps name -> LogRow list."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        for name, rows in logs.items():
            if rows:
                ax.plot([r.step for r in rows], [r.report.total for r in rows], lw=0.9, label=name)
        ax.set_xlabel("step")
        ax.set_ylabel("total loss")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)
