"""Command-line interface.

Exit codes: 0 success, 1 runtime/validation failure, 2 usage error.
``V2XCALIB_SEED`` overrides the seed stored in scenario files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from v2xcalib import io, plotting
from v2xcalib.calibrate import calibrate, parse_grid
from v2xcalib.config import ConfigError, get_device, get_mcs, load_scenario, scenario_presets
from v2xcalib.engine import TuningError, run, saturate_interval, sweep_scenarios, run_many, with_interval
from v2xcalib.stats import boxplot, trend_compare

log = logging.getLogger("v2xcalib")

SEED_ENV = "V2XCALIB_SEED"


def _split(values: Sequence[str]) -> List[str]:
    out = []
    for v in values:
        out.extend(x for x in v.split(",") if x)
    return out


def parse_seeds(values: Sequence[str]) -> List[int]:
    """Seeds as a list: ``1,2,3``, ``1 2 3`` or an inclusive range ``1:10``."""
    seeds = []
    for item in _split(values):
        if ":" in item:
            a, b = item.split(":")
            seeds.extend(range(int(a), int(b) + 1))
        else:
            seeds.append(int(item))
    return seeds


def _load(path, seed: Optional[int] = None):
    sc = load_scenario(path)
    env = os.environ.get(SEED_ENV)
    if seed is not None:
        sc = replace(sc, seed=seed)
    elif env:
        sc = replace(sc, seed=int(env))
    return sc


def _anechoic_intervals(base, mcs_names) -> dict:
    """Per-MCS saturation intervals tuned in the anechoic reference setup."""
    ref = replace(base, channel=scenario_presets()["anechoic"], distance_m=6.5)
    out = {}
    for name in mcs_names:
        out[name] = saturate_interval(replace(ref, mcs=get_mcs(name)))
        log.info("tuned %s: %s s", name, io.fmt(out[name]))
    return out


def cmd_simulate(args) -> int:
    sc = _load(args.scenario, args.seed)
    if args.tune:
        sc = with_interval(sc, saturate_interval(sc))
    metrics = run(sc)
    paths = io.write_run(args.out, metrics, sc)
    print(f"{paths['records']}: {metrics.datagrams_received} datagrams, "
          f"{io.fmt(metrics.mean_throughput_bps)} bit/s, final jitter {io.fmt(metrics.final_jitter_s)} s")
    return 0


def cmd_tune(args) -> int:
    sc = _load(args.scenario)
    print(io.fmt(saturate_interval(sc)))
    return 0


def cmd_sweep(args) -> int:
    base = _load(args.scenario)
    distances = [float(d) for d in _split(args.distances)] if args.distances else None
    mcs = _split(args.mcs) if args.mcs else None
    devices = [get_device(d) for d in _split(args.devices)] if args.devices else None
    seeds = parse_seeds(args.seeds) if args.seeds else None
    intervals = _anechoic_intervals(base, mcs or [base.mcs.name]) if args.tune else None
    scenarios = sweep_scenarios(base, distances, mcs, devices, seeds, intervals)
    results = run_many(list(scenarios.values()), args.jobs)
    for sc, metrics in zip(scenarios.values(), results):
        io.write_run(args.out, metrics, sc)
    print(f"{len(results)} runs written to {args.out}")
    return 0


def cmd_compare(args) -> int:
    sim = io.samples_by_condition(io.load_log_dir(args.sim_dir), args.metric, args.bin_width)
    trial = io.samples_by_condition(io.load_log_dir(args.trial_dir), args.metric, args.bin_width)
    report = trend_compare(sim, trial)
    text = io.dumps(io.trend_report_dict(report, args.metric))
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_calibrate(args) -> int:
    base = _load(args.scenario)
    trial = io.samples_by_condition(io.load_log_dir(args.trial_dir), "throughput")
    alphas, ks = parse_grid(args.alpha_grid), parse_grid(args.k_grid)
    seeds = parse_seeds(args.seeds)
    intervals = _anechoic_intervals(base, sorted({k[2] for k in trial})) if args.tune else None
    result = calibrate(trial, base, alphas, ks, seeds, jobs=args.jobs, intervals=intervals)
    text = io.dumps(io.calibration_dict(result))
    if args.out:
        Path(args.out).write_text(text)
        if args.plot:
            scores = {(g.alpha, g.k_db): g.divergence for g in result.grid}
            plotting.calibration_surface(alphas, ks, scores,
                                         Path(args.out).with_suffix(".png"),
                                         best=(result.best_alpha, result.best_k_db))
    sys.stdout.write(text)
    return 0


METRIC_UNITS = {"throughput": ("Throughput (Mb/s)", 1e-6), "jitter": ("Jitter (ms)", 1e3)}


def cmd_report(args) -> int:
    results = Path(args.results_dir)
    logs = io.load_log_dir(results)
    groups = io.samples_by_condition(logs, args.metric)
    order = sorted(groups, key=lambda k: (k[0], k[1], get_mcs(k[2]).phy_bitrate))
    summaries = {key: boxplot(groups[key]) for key in order if groups[key]}
    if not summaries:
        raise ConfigError(f"{results}: no {args.metric} samples to summarise")
    rows = io.boxplot_rows(summaries)
    if args.format == "csv":
        text = io.boxplot_csv(rows)
    else:
        text = io.dumps({"metric": args.metric, "rows": rows})
    (results / f"report_{args.metric}.{args.format}").write_text(text)
    if not args.no_plots:
        ylabel, scale = METRIC_UNITS[args.metric]
        plotting.boxplot_figure(
            [(io.condition_label(k), s) for k, s in summaries.items()],
            results / f"report_{args.metric}.png", ylabel, scale=scale)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="v2xcalib", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one scenario and write its logs")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="results")
    s.add_argument("--tune", action="store_true", help="use the saturating send interval")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("tune", help="print the saturating send interval")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_tune)

    s = sub.add_parser("sweep", help="run a distance x MCS x device x seed grid")
    s.add_argument("scenario")
    s.add_argument("--distances", nargs="+")
    s.add_argument("--mcs", nargs="+")
    s.add_argument("--devices", nargs="+")
    s.add_argument("--seeds", nargs="+")
    s.add_argument("--tune", action="store_true",
                   help="per-MCS saturating intervals tuned in the anechoic setup")
    s.add_argument("--out", default="results")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", help="trend comparison of simulated and trial logs")
    s.add_argument("sim_dir")
    s.add_argument("trial_dir")
    s.add_argument("--metric", choices=("throughput", "jitter"), default="throughput")
    s.add_argument("--bin-width", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("calibrate", help="grid-search alpha and K against trial logs")
    s.add_argument("scenario")
    s.add_argument("trial_dir")
    s.add_argument("--alpha-grid", required=True)
    s.add_argument("--k-grid", required=True)
    s.add_argument("--seeds", nargs="+", default=["1:4"])
    s.add_argument("--tune", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.add_argument("--plot", action="store_true", help="also render the score surface next to --out")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("report", help="boxplot summaries and figures for a results directory")
    s.add_argument("results_dir")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--metric", choices=("throughput", "jitter"), default="throughput")
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TuningError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"v2xcalib: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
