"""Record-stream CSV files, JSON summaries and trial-log parsing.

Run logs and trial logs share one CSV layout::

    # device=HP
    # distance_m=50
    # mcs=QPSK-1/2
    send_time_s,recv_time_s,seq,payload_bytes
    0,0.00301,0,8192
    ...

Metadata comment lines come before the header. Floats are written with 9
significant digits so identical runs give byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from v2xcalib.calibrate import DIVERGENCE_NOTE, CalibrationResult
from v2xcalib.config import ConfigError, ScenarioConfig, dump_scenario, get_mcs
from v2xcalib.engine import RunMetrics, RxRecord, throughput_bins
from v2xcalib.stats import BoxplotSummary, TrendReport, jitter_rfc1889

HEADER = "send_time_s,recv_time_s,seq,payload_bytes"
CSV_FIELDS = HEADER.split(",")


class TrialParseError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".9g")


def _round9(x):
    """Float rounded to 9 significant digits; non-finite values become None."""
    if isinstance(x, float):
        return float(format(x, ".9g")) if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _round9(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round9(v) for v in x]
    return x


def dumps(obj) -> str:
    return json.dumps(_round9(obj), indent=2, allow_nan=False) + "\n"


@dataclass
class TrialLog:
    metadata: Dict[str, str]
    records: List[RxRecord] = field(default_factory=list)
    path: Optional[Path] = None

    def _meta(self, key: str) -> str:
        try:
            return self.metadata[key]
        except KeyError:
            raise TrialParseError(f"{self.path}: missing metadata '{key}'") from None

    @property
    def condition(self) -> Tuple[str, float, str]:
        return (self._meta("device").upper(), float(self._meta("distance_m")),
                get_mcs(self._meta("mcs")).name)

    @property
    def duration_s(self) -> float:
        if "duration_s" in self.metadata:
            return float(self.metadata["duration_s"])
        last = max((r.recv_time_s for r in self.records), default=1.0)
        return float(max(1, math.ceil(last)))

    def throughput_samples(self, bin_width_s: Optional[float] = None) -> List[float]:
        bw = bin_width_s or float(self.metadata.get("bin_width_s", 1.0))
        warmup = float(self.metadata.get("warmup_s", 0.0))
        return throughput_bins(self.records, self.duration_s, bw, warmup)

    def jitter_samples(self) -> List[float]:
        if len(self.records) < 2:
            return []
        return jitter_rfc1889([(r.send_time_s, r.recv_time_s) for r in self.records])


def parse_trial_csv(path) -> TrialLog:
    """Parse and validate a record CSV (trial log or simulator run log)."""
    path = Path(path)
    metadata: Dict[str, str] = {}
    records: List[RxRecord] = []
    seen = set()
    header_seen = False
    last_recv = -math.inf
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if header_seen:
                    continue
                body = line[1:].strip()
                if "=" not in body:
                    continue  # free-form comment
                key, value = body.split("=", 1)
                metadata[key.strip()] = value.strip()
                continue
            if not header_seen:
                if [c.strip() for c in line.split(",")] != CSV_FIELDS:
                    raise TrialParseError(f"{path}: missing header '{HEADER}' (line {lineno})")
                header_seen = True
                continue
            cells = line.split(",")
            if len(cells) != 4:
                raise TrialParseError(f"malformed row at line {lineno}: expected 4 fields")
            try:
                send, recv = float(cells[0]), float(cells[1])
                seq, payload = int(cells[2]), int(cells[3])
            except ValueError:
                raise TrialParseError(f"malformed row at line {lineno}: {line!r}") from None
            if send < 0 or recv < 0 or not (math.isfinite(send) and math.isfinite(recv)):
                raise TrialParseError(f"negative or non-finite time at line {lineno}")
            if payload < 0:
                raise TrialParseError(f"negative payload_bytes at line {lineno}")
            if recv < last_recv:
                raise TrialParseError(f"non-monotone recv_time_s at line {lineno}")
            if seq in seen:
                raise TrialParseError(f"duplicate seq {seq} at line {lineno}")
            seen.add(seq)
            last_recv = recv
            records.append(RxRecord(send, recv, seq, payload))
    if not header_seen:
        raise TrialParseError(f"{path}: missing header '{HEADER}'")
    return TrialLog(metadata, records, path)


def write_records_csv(path, records: Sequence[Tuple], metadata: Mapping[str, object]) -> None:
    lines = [f"# {k}={fmt(v) if not isinstance(v, str) else v}" for k, v in metadata.items()]
    lines.append(HEADER)
    lines.extend(f"{fmt(s)},{fmt(r)},{q},{p}" for s, r, q, p in records)
    Path(path).write_text("\n".join(lines) + "\n")


def run_metadata(scenario: ScenarioConfig) -> Dict[str, object]:
    dev = scenario.tx_device.name
    if scenario.rx_device.name != dev:
        dev = f"{dev}-{scenario.rx_device.name}"
    return {
        "source": "simulation",
        "device": dev,
        "scenario": scenario.name,
        "distance_m": scenario.distance_m,
        "mcs": scenario.mcs.name,
        "run": scenario.seed,
        "duration_s": scenario.duration_s,
        "bin_width_s": scenario.bin_width_s,
        "warmup_s": scenario.warmup_s,
    }


def run_summary(metrics: RunMetrics, scenario: ScenarioConfig) -> dict:
    return {
        "metadata": run_metadata(scenario),
        "counters": {
            "datagrams_generated": metrics.datagrams_generated,
            "datagrams_received": metrics.datagrams_received,
            "datagrams_lost": metrics.datagrams_lost,
            "datagrams_in_flight": metrics.datagrams_in_flight,
            "fragments_generated": metrics.fragments_generated,
            "fragments_delivered": metrics.fragments_delivered,
            "queue_drops": metrics.queue_drops,
            "channel_losses": metrics.channel_losses,
            "mac_discards": metrics.mac_discards,
            "beacons_generated": metrics.beacons_generated,
            "beacons_sent": metrics.beacons_sent,
            "beacons_delivered": metrics.beacons_delivered,
            "max_queue_occupancy": metrics.max_queue_occupancy,
        },
        "send_interval_s": scenario.traffic.send_interval_s,
        "mean_throughput_bps": metrics.mean_throughput_bps,
        "throughput_samples_bps": list(metrics.throughput_samples_bps),
        "final_jitter_s": metrics.final_jitter_s,
    }


def run_stem(scenario: ScenarioConfig) -> str:
    mcs = scenario.mcs.name.replace("/", "")
    return (f"{scenario.name}_{scenario.tx_device.name}_{mcs}_"
            f"{fmt(scenario.distance_m)}m_seed{scenario.seed}")


def write_run(out_dir, metrics: RunMetrics, scenario: ScenarioConfig,
              stem: Optional[str] = None) -> Dict[str, Path]:
    """Write ``<stem>.csv``, ``<stem>.json`` and ``<stem>.scenario.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or run_stem(scenario)
    paths = {
        "records": out / f"{stem}.csv",
        "summary": out / f"{stem}.json",
        "scenario": out / f"{stem}.scenario.json",
    }
    write_records_csv(paths["records"], metrics.rx_records, run_metadata(scenario))
    paths["summary"].write_text(dumps(run_summary(metrics, scenario)))
    dump_scenario(scenario, paths["scenario"])
    return paths


def load_log_dir(directory) -> List[TrialLog]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"{directory}: not a directory")
    logs = [parse_trial_csv(p) for p in sorted(directory.glob("*.csv"))
            if not p.name.startswith("report")]
    if not logs:
        raise ConfigError(f"{directory}: no record CSV files found")
    return logs


def samples_by_condition(logs: Sequence[TrialLog], metric: str = "throughput",
                         bin_width_s: Optional[float] = None) -> Dict[Tuple, List[float]]:
    """Pool per-log samples of ``metric`` for each (device, distance, mcs)."""
    out: Dict[Tuple, List[float]] = {}
    for lg in logs:
        if metric == "throughput":
            samples = lg.throughput_samples(bin_width_s)
        elif metric == "jitter":
            samples = lg.jitter_samples()
        else:
            raise ConfigError(f"unknown metric {metric!r}")
        out.setdefault(lg.condition, []).extend(samples)
    return out


def condition_label(key) -> str:
    if isinstance(key, tuple) and len(key) == 3:
        dev, dist, mcs = key
        return f"{dev}@{fmt(dist)}m/{mcs}"
    return str(key)


def trend_report_dict(report: TrendReport, metric: str) -> dict:
    return {
        "metric": metric,
        "rank_correlation": report.rank_correlation,
        "scale_factor": report.scale_factor,
        "pairs": [
            {
                "condition": condition_label(key),
                "sim_median": s,
                "trial_median": t,
                "relative_deviation": rd,
                "scaled_relative_deviation": srd,
            }
            for (key, s, t), rd, srd in zip(report.pairs, report.relative_deviation,
                                            report.scaled_relative_deviation)
        ],
        "uncovered": [condition_label(k) for k in report.uncovered],
    }


def calibration_dict(result: CalibrationResult) -> dict:
    return {
        "best_alpha": result.best_alpha,
        "best_k_db": result.best_k_db,
        "divergence": result.divergence,
        "divergence_metric": DIVERGENCE_NOTE,
        "conditions": [condition_label(c) for c in result.conditions],
        "seeds": result.seeds,
        "grid": [
            {"alpha": g.alpha, "k_db": g.k_db, "divergence": g.divergence, "error": g.error}
            for g in result.grid
        ],
    }


BOXPLOT_COLUMNS = ["condition", "q1", "median", "q3", "wlo", "whi", "n_outliers", "n"]


def boxplot_rows(summaries: Mapping[Tuple, BoxplotSummary]) -> List[dict]:
    rows = []
    for key, s in summaries.items():
        row = {"condition": condition_label(key)}
        row.update(s.as_row())
        rows.append(row)
    return rows


def boxplot_csv(rows: Sequence[Mapping]) -> str:
    lines = [",".join(BOXPLOT_COLUMNS)]
    for row in rows:
        lines.append(",".join(fmt(row[c]) if c != "condition" else row[c] for c in BOXPLOT_COLUMNS))
    return "\n".join(lines) + "\n"
