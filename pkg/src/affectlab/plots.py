"""Standalone SVG figure emitters (no display required).

Figures mirror the study's reporting style: a log-scale label frequency
bar chart, a signed label-dimension correlation heatmap, and a posterior
interval plot with the ROPE band shaded.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .corpus import DIMENSIONS, LABELS  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "affectlab"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}}


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_label_frequencies(freqs: dict, path) -> Path:
    """Grouped log-scale bars: sequences marked by >=1, >=2, >=3 annotators."""
    order = sorted(LABELS, key=lambda lab: -freqs[lab][0])
    x = np.arange(len(order))
    fig, ax = plt.subplots(figsize=(12, 4))
    width = 0.28
    for i, (tag, color) in enumerate((("≥ 1", "#4878d0"),
                                      ("≥ 2", "#ee854a"),
                                      ("≥ 3", "#6acc64"))):
        vals = [max(freqs[lab][i], 0.5) for lab in order]
        ax.bar(x + (i - 1) * width, vals, width, label=f"{tag} annotators",
               color=color)
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(order, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("sequences (log scale)")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _finish(fig, path)


def plot_label_dim_heatmap(corr_map, path) -> Path:
    """Signed heatmap of consistent label-dimension correlations."""
    mat = np.full((len(LABELS), len(DIMENSIONS)), np.nan)
    for i, lab in enumerate(LABELS):
        for j, dim in enumerate(DIMENSIONS):
            v = corr_map.entries.get((lab, dim))
            if v is not None:
                mat[i, j] = v
    fig, ax = plt.subplots(figsize=(4.5, 8))
    masked = np.ma.masked_invalid(mat)
    im = ax.imshow(masked, cmap="coolwarm_r", vmin=-1, vmax=1, aspect="auto")
    ax.set_xticks(range(len(DIMENSIONS)))
    ax.set_xticklabels([d.replace("_", " ") for d in DIMENSIONS], rotation=45,
                       ha="right", fontsize=8)
    ax.set_yticks(range(len(LABELS)))
    ax.set_yticklabels(LABELS, fontsize=8)
    fig.colorbar(im, ax=ax, label="mean consistent PCC")
    fig.tight_layout()
    return _finish(fig, path)


def plot_posterior_intervals(cell_contrasts, rope_z: float, path) -> Path:
    """Medians and 95% credible intervals per condition, ROPE band shaded."""
    names = [c["name"] for c in cell_contrasts]
    med = np.array([c["median"] for c in cell_contrasts])
    lo = np.array([c["cri_low"] for c in cell_contrasts])
    hi = np.array([c["cri_high"] for c in cell_contrasts])
    y = np.arange(len(names))[::-1]
    fig, ax = plt.subplots(figsize=(7, 0.45 * len(names) + 1.2))
    ax.axvspan(-rope_z, rope_z, color="#aac7e8", alpha=0.5, label="ROPE")
    ax.hlines(y, lo, hi, color="#333333", lw=1.6)
    ax.plot(med, y, "o", color="#d62728", ms=4)
    ax.set_yticks(y)
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xlabel("Fisher z of CCC")
    ax.legend(frameon=False, loc="lower right")
    fig.tight_layout()
    return _finish(fig, path)
