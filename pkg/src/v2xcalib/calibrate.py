"""Grid-search calibration of path-loss exponent and Rician K-factor."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from v2xcalib.config import ConfigError, Fading, ScenarioConfig, get_device, get_mcs
from v2xcalib.engine import run, with_interval

log = logging.getLogger(__name__)

Condition = Tuple[str, float, str]  # (device, distance_m, mcs name)

DIVERGENCE_NOTE = "sum over conditions of squared differences of median throughput (bit/s)^2"


@dataclass(frozen=True)
class GridPoint:
    alpha: float
    k_db: Optional[float]  # None means Rayleigh
    divergence: float
    error: Optional[str] = None


@dataclass(frozen=True)
class CalibrationResult:
    best_alpha: float
    best_k_db: Optional[float]
    divergence: float
    grid: List[GridPoint]
    conditions: List[Condition]
    seeds: List[int]


def grid_range(start: float, stop: float, step: float) -> List[float]:
    """Inclusive arithmetic grid, rounded so that e.g. 2.3 is exactly 2.3."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    if stop < start:
        raise ValueError("grid stop must be >= start")
    n = int(round((stop - start) / step))
    digits = max(0, -int(math.floor(math.log10(step)))) + 6
    return [round(start + i * step, digits) for i in range(n + 1)]


def parse_grid(text: str) -> List[float]:
    """Parse ``"a:b:step"`` (or a single value) into a grid."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return [float(parts[0])]
        if len(parts) == 3:
            return grid_range(*(float(p) for p in parts))
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from None
    raise ConfigError(f"bad grid {text!r}; expected start:stop:step")


def normalize_condition(key, base: ScenarioConfig) -> Condition:
    if isinstance(key, tuple) and len(key) == 3:
        dev, dist, mcs = key
    elif isinstance(key, tuple) and len(key) == 2:
        dev, (dist, mcs) = base.tx_device.name, key
    else:
        raise ConfigError(f"condition {key!r} is not (distance, mcs) or (device, distance, mcs)")
    return (str(dev).upper(), float(dist), get_mcs(mcs).name)


def with_channel_params(base: ScenarioConfig, alpha: float, k_db: Optional[float]) -> ScenarioConfig:
    """Replace the (first-segment) path-loss exponent and fading."""
    fading = Fading.rayleigh() if k_db is None else Fading.rician(k_db)
    return replace(base, channel=replace(base.channel, path_loss_exponent=alpha, fading=fading))


def condition_scenarios(base: ScenarioConfig, conditions: Sequence[Condition],
                        seeds: Sequence[int],
                        intervals: Optional[Mapping[str, float]] = None) -> List[List[ScenarioConfig]]:
    out = []
    for dev_name, dist, mcs_name in conditions:
        dev = get_device(dev_name) if dev_name != base.tx_device.name else base.tx_device
        per_seed = []
        for s in seeds:
            sc = replace(base, distance_m=dist, mcs=get_mcs(mcs_name), tx_device=dev,
                         rx_device=dev, seed=int(s))
            if intervals and mcs_name in intervals:
                sc = with_interval(sc, intervals[mcs_name])
            per_seed.append(sc)
        out.append(per_seed)
    return out


def pooled_throughput(scenarios: Sequence[ScenarioConfig]) -> List[float]:
    samples: List[float] = []
    for sc in scenarios:
        samples.extend(run(sc).throughput_samples_bps)
    return samples


def _score_point(args):
    base, alpha, k_db, conditions, seeds, intervals, trial_medians = args
    try:
        base = with_channel_params(base, alpha, k_db)
        total = 0.0
        for cond_scenarios, trial_med in zip(
                condition_scenarios(base, conditions, seeds, intervals), trial_medians):
            sim_med = float(np.median(pooled_throughput(cond_scenarios)))
            total += (sim_med - trial_med) ** 2
        return GridPoint(alpha, k_db, total)
    except Exception as exc:  # scored as +inf and reported
        return GridPoint(alpha, k_db, math.inf, f"{type(exc).__name__}: {exc}")


def calibrate(
    trial: Mapping[Hashable, Sequence[float]],
    base: ScenarioConfig,
    alpha_grid: Sequence[float],
    k_grid: Sequence[Optional[float]],
    seeds: Sequence[int],
    jobs: int = 1,
    intervals: Optional[Mapping[str, float]] = None,
) -> CalibrationResult:
    """Find the (alpha, K) grid point whose simulated medians best match ``trial``.

    ``trial`` maps conditions, ``(distance, mcs)`` or ``(device, distance,
    mcs)``, to throughput samples in bit/s. Each grid point runs every
    condition for every seed, pools the per-bin throughput samples and
    scores the sum of squared median differences. Ties go to the smaller
    exponent, then the smaller K.
    """
    if not alpha_grid or not k_grid:
        raise ValueError("calibration grids must be non-empty")
    if not seeds:
        raise ValueError("need at least one seed")
    conditions = []
    trial_medians = []
    for key, samples in trial.items():
        conditions.append(normalize_condition(key, base))
        if len(samples) == 0:
            raise ValueError(f"no trial samples for condition {key!r}")
        trial_medians.append(float(np.median(samples)))

    points = [(base, float(a), None if k is None else float(k), conditions, list(seeds),
               dict(intervals) if intervals else None, trial_medians)
              for a in alpha_grid for k in k_grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            grid = list(pool.map(_score_point, points))
    else:
        grid = [_score_point(p) for p in points]

    for gp in grid:
        if gp.error:
            log.warning("grid point alpha=%s k=%s failed: %s", gp.alpha, gp.k_db, gp.error)

    def order(gp: GridPoint):
        k = -math.inf if gp.k_db is None else gp.k_db
        return (gp.alpha, k)

    best = None
    for gp in sorted(grid, key=order):
        if best is None or gp.divergence < best.divergence:
            best = gp
    return CalibrationResult(
        best_alpha=best.alpha,
        best_k_db=best.k_db,
        divergence=best.divergence,
        grid=grid,
        conditions=conditions,
        seeds=[int(s) for s in seeds],
    )
