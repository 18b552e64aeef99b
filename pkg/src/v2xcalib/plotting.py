"""Figure rendering for reports (files only, no interactive backends)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from v2xcalib.stats import BoxplotSummary  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 7,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def _bxp_stats(label: str, s: BoxplotSummary) -> dict:
    return {
        "label": label,
        "med": s.median,
        "q1": s.q1,
        "q3": s.q3,
        "whislo": s.whisker_low,
        "whishi": s.whisker_high,
        "fliers": list(s.outliers),
    }


def boxplot_figure(
    summaries: Sequence[Tuple[str, BoxplotSummary]],
    path,
    ylabel: str,
    title: str = "",
    scale: float = 1.0,
) -> Path:
    """Draw precomputed boxplot summaries; outliers are marked with asterisks.

    ``scale`` multiplies every value before plotting (e.g. 1e-6 for Mb/s).
    """
    stats = []
    for label, s in summaries:
        st = _bxp_stats(label, s)
        for k in ("med", "q1", "q3", "whislo", "whishi"):
            st[k] *= scale
        st["fliers"] = [v * scale for v in st["fliers"]]
        stats.append(st)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(stats) + 1.5), 3.2))
        ax.bxp(stats, showfliers=True, flierprops={"marker": "*", "markersize": 5})
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        plt.setp(ax.get_xticklabels(), rotation=45, ha="right")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path


def calibration_surface(alphas: Sequence[float], ks: Sequence[float],
                        scores: Mapping[Tuple[float, float], float], path,
                        best: Tuple[float, float] = None) -> Path:
    """Heat map of log10 divergence over the (alpha, K) grid."""
    z = np.full((len(alphas), len(ks)), np.nan)
    for i, a in enumerate(alphas):
        for j, k in enumerate(ks):
            v = scores.get((a, k))
            if v is not None and np.isfinite(v):
                z[i, j] = np.log10(v + 1.0)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        mesh = ax.imshow(z, origin="lower", aspect="auto", cmap="viridis",
                         extent=(ks[0], ks[-1], alphas[0], alphas[-1]) if len(ks) > 1 and len(alphas) > 1 else None)
        fig.colorbar(mesh, ax=ax, label="log10(divergence + 1)")
        if best is not None and len(ks) > 1 and len(alphas) > 1:
            ax.plot(best[1], best[0], "r*", markersize=10)
        ax.set_xlabel("K-factor (dB)")
        ax.set_ylabel("path loss exponent")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path
