"""Boxplot summaries, RFC 1889 jitter and trend-based sim-vs-trial comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Mapping, Sequence, Tuple

import numpy as np
from scipy import stats as sstats

OUTLIER_SIGMAS = 2.7


@dataclass(frozen=True)
class BoxplotSummary:
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: Tuple[float, ...]
    mean: float
    sigma: float
    n: int

    def as_row(self) -> dict:
        return {
            "q1": self.q1, "median": self.median, "q3": self.q3,
            "wlo": self.whisker_low, "whi": self.whisker_high,
            "n_outliers": len(self.outliers), "n": self.n,
        }


def boxplot(samples: Sequence[float]) -> BoxplotSummary:
    """Summarise ``samples`` for a boxplot.

    Quartiles use linear interpolation between closest ranks. A sample is
    an outlier when it lies more than 2.7 standard deviations (sample
    estimate over all points) from the mean; whiskers span the remaining
    points.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("boxplot of an empty sample")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    mean = float(x.mean())
    sigma = float(x.std(ddof=1)) if x.size > 1 else 0.0
    is_out = np.abs(x - mean) > OUTLIER_SIGMAS * sigma
    if sigma == 0.0 or is_out.all():
        # sigma can underflow for tiny spreads; nothing is an outlier then
        is_out[:] = False
    inliers = x[~is_out]
    return BoxplotSummary(
        q1=float(q1), median=float(med), q3=float(q3),
        whisker_low=float(inliers.min()), whisker_high=float(inliers.max()),
        outliers=tuple(float(v) for v in x[is_out]),
        mean=mean, sigma=sigma, n=int(x.size),
    )


def jitter_rfc1889(records: Sequence[Tuple[float, float]]) -> List[float]:
    """Interarrival jitter estimate after each packet.

    ``records`` are ``(send_time, recv_time)`` pairs ordered by receive
    time. The first packet has jitter 0; afterwards
    ``J += (|D| - J) / 16`` with ``D`` the change in transit time.
    """
    if len(records) < 2:
        raise ValueError("jitter needs at least two records")
    out = [0.0]
    j = 0.0
    prev_s, prev_r = records[0]
    for s, r in records[1:]:
        d = (r - prev_r) - (s - prev_s)
        j += (abs(d) - j) / 16.0
        out.append(j)
        prev_s, prev_r = s, r
    return out


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rank correlation; NaN when either vector is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.all(a == a[0]) or np.all(b == b[0]):
        return math.nan
    ra, rb = sstats.rankdata(a), sstats.rankdata(b)
    # exact for identical or mirrored rankings, where float noise would show
    if np.array_equal(ra, rb):
        return 1.0
    if np.array_equal(ra, sstats.rankdata(-b)):
        return -1.0
    rho = float(sstats.spearmanr(a, b).statistic)
    return max(-1.0, min(1.0, rho))


@dataclass(frozen=True)
class TrendReport:
    pairs: List[Tuple[Hashable, float, float]]
    relative_deviation: List[float]
    scaled_relative_deviation: List[float]
    rank_correlation: float
    scale_factor: float
    uncovered: List[Hashable] = field(default_factory=list)


def _rel(a: float, b: float) -> float:
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return abs(a - b) / abs(b)


def trend_compare(sim: Mapping[Hashable, Sequence[float]],
                  trial: Mapping[Hashable, Sequence[float]]) -> TrendReport:
    """Compare per-condition medians of simulated and trial samples.

    Besides the raw relative deviation of each median pair, the report
    carries the pooled scale factor ``median(trial) / median(sim)`` and the
    deviations left after applying it, plus the Spearman correlation of the
    two median vectors. Conditions present on only one side are listed in
    ``uncovered``.
    """
    shared = [k for k in sorted(sim, key=_sort_key) if k in trial]
    if len(shared) < 3:
        raise ValueError(f"trend comparison needs >= 3 shared conditions, got {len(shared)}")
    uncovered = sorted((set(sim) ^ set(trial)), key=_sort_key)

    pairs = []
    for key in shared:
        s, t = np.asarray(sim[key], float), np.asarray(trial[key], float)
        if s.size == 0 or t.size == 0:
            raise ValueError(f"condition {key!r} has no samples")
        pairs.append((key, float(np.median(s)), float(np.median(t))))

    sim_pool = np.concatenate([np.asarray(sim[k], float) for k in shared])
    trial_pool = np.concatenate([np.asarray(trial[k], float) for k in shared])
    sim_med, trial_med = float(np.median(sim_pool)), float(np.median(trial_pool))
    scale = trial_med / sim_med if sim_med != 0 else math.nan

    return TrendReport(
        pairs=pairs,
        relative_deviation=[_rel(s, t) for _, s, t in pairs],
        scaled_relative_deviation=[
            _rel(s * scale, t) if math.isfinite(scale) else math.nan for _, s, t in pairs
        ],
        rank_correlation=spearman([p[1] for p in pairs], [p[2] for p in pairs]),
        scale_factor=scale,
        uncovered=uncovered,
    )


def _sort_key(key):
    items = key if isinstance(key, tuple) else (key,)
    return tuple((0, float(k), "") if isinstance(k, (int, float)) else (1, 0.0, str(k))
                 for k in items)
