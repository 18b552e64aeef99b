import json
import subprocess
import sys
from pathlib import Path

import pytest

from v2xcalib import io
from v2xcalib.cli import main, parse_seeds
from v2xcalib.config import make_scenario
from v2xcalib.engine import RxRecord, run, with_interval

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"
TRIALS = ROOT / "fixtures" / "trials_urban"


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


GOOD = ["# device=HP", "# distance_m=50", "# mcs=QPSK-1/2", io.HEADER,
        "0,0.003,0,8192", "0.01,0.013,1,8192", "0.02,0.0231,2,8192"]


def test_parse_three_rows(tmp_path):
    log = io.parse_trial_csv(_write(tmp_path / "t.csv", GOOD))
    assert len(log.records) == 3
    assert log.condition == ("HP", 50.0, "QPSK-1/2")
    assert log.records[2] == RxRecord(0.02, 0.0231, 2, 8192)


def test_duplicate_seq_names_line(tmp_path):
    lines = GOOD[:4] + ["0,0.1,40,1", "0,0.2,41,1", "0,0.3,42,1", "0,0.4,42,1"]
    with pytest.raises(io.TrialParseError, match="duplicate seq 42 at line 8"):
        io.parse_trial_csv(_write(tmp_path / "t.csv", lines))
    lines = ["# device=HP", "# mcs=QPSK-1/2", io.HEADER, "0,0.1,40,1", "0,0.2,41,1",
             "0,0.3,42,1", "0,0.4,42,1"]
    with pytest.raises(io.TrialParseError, match="duplicate seq 42 at line 7"):
        io.parse_trial_csv(_write(tmp_path / "t.csv", lines))


@pytest.mark.parametrize(
    "lines, msg",
    [
        (["0,0.1,0,1"], "missing header"),
        ([io.HEADER, "0,0.2,0,1", "0,0.1,1,1"], "non-monotone recv_time_s at line 3"),
        ([io.HEADER, "0,0.2,0"], "malformed row at line 2"),
        ([io.HEADER, "0,x,0,1"], "malformed row at line 2"),
        ([io.HEADER, "-1,0.2,0,1"], "negative"),
    ],
)
def test_parse_errors(tmp_path, lines, msg):
    with pytest.raises(io.TrialParseError, match=msg):
        io.parse_trial_csv(_write(tmp_path / "t.csv", lines))


def test_missing_metadata(tmp_path):
    log = io.parse_trial_csv(_write(tmp_path / "t.csv", [io.HEADER, "0,0.1,0,1"]))
    with pytest.raises(io.TrialParseError, match="device"):
        log.condition


def test_records_round_trip(tmp_path):
    sc = make_scenario("urban", "LP", "QAM16-3/4", distance_m=110, duration_s=2.0)
    m = run(sc)
    paths = io.write_run(tmp_path, m, sc)
    log = io.parse_trial_csv(paths["records"])
    # 9 significant digits keep sub-nanosecond resolution over a 10 s run
    for a, b in zip(m.rx_records, log.records):
        assert (a.seq, a.payload_bytes) == (b.seq, b.payload_bytes)
        assert b.recv_time_s == pytest.approx(a.recv_time_s, abs=1e-8)
    assert len(log.records) == len(m.rx_records)
    assert log.throughput_samples() == pytest.approx(m.throughput_samples_bps)
    assert log.condition == ("LP", 110.0, "QAM16-3/4")


def test_exact_round_trip_for_representable_times(tmp_path):
    recs = [RxRecord(0.5, 0.75, 0, 100), RxRecord(1.0, 1.125, 1, 100)]
    io.write_records_csv(tmp_path / "r.csv", recs, {"device": "LP"})
    assert io.parse_trial_csv(tmp_path / "r.csv").records == recs


def test_parse_seeds():
    assert parse_seeds(["1:3", "7,9"]) == [1, 2, 3, 7, 9]


# --- CLI ----------------------------------------------------------------------

def _cli(*args):
    return main([str(a) for a in args])


def test_simulate_writes_outputs(tmp_path, capsys):
    assert _cli("simulate", SCENARIOS / "anechoic_hp_bpsk12.json", "--seed", 1, "--out", tmp_path) == 0
    stem = "anechoic_HP_BPSK-12_6.5m_seed1"
    assert (tmp_path / f"{stem}.csv").exists()
    summary = json.loads((tmp_path / f"{stem}.json").read_text())
    assert summary["counters"]["queue_drops"] == 0
    assert summary["metadata"]["run"] == 1


def test_outputs_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert _cli("simulate", SCENARIOS / "urban_lp_qam16.json", "--out", tmp_path / d) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_seed_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("V2XCALIB_SEED", "5")
    assert _cli("simulate", SCENARIOS / "urban_lp_qam16.json", "--out", tmp_path) == 0
    assert (tmp_path / "urban_LP_QAM16-12_50m_seed5.csv").exists()
    assert _cli("simulate", SCENARIOS / "urban_lp_qam16.json", "--seed", 6, "--out", tmp_path) == 0
    assert (tmp_path / "urban_LP_QAM16-12_50m_seed6.csv").exists()


@pytest.mark.parametrize("argv", [["frobnicate"], ["simulate"], ["simulate", "x.json", "--bogus"], []])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_bad_scenario_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": {"distance_m": 1, "device": "HP", "mcs": "BPSK-1/2", "x": 1}}))
    assert _cli("simulate", bad, "--out", tmp_path) == 1
    assert "unknown key" in capsys.readouterr().err
    assert _cli("simulate", tmp_path / "missing.json") == 1


def test_compare_needs_three_conditions(tmp_path, capsys):
    sc = make_scenario("urban", "LP", "QAM16-1/2", duration_s=1.0)
    for d in (50, 110):
        io.write_run(tmp_path / "sim", run(sc.with_(distance_m=d)), sc.with_(distance_m=d))
    assert _cli("compare", tmp_path / "sim", tmp_path / "sim") == 1
    assert ">= 3 shared conditions" in capsys.readouterr().err


def test_compare_self(tmp_path, capsys):
    sc = make_scenario("urban", "LP", "QAM16-1/2", duration_s=1.0)
    for d in (50, 110, 300):
        io.write_run(tmp_path / "sim", run(sc.with_(distance_m=d)), sc.with_(distance_m=d))
    assert _cli("compare", tmp_path / "sim", tmp_path / "sim", "--metric", "jitter",
                "--out", tmp_path / "cmp.json") == 0
    rep = json.loads((tmp_path / "cmp.json").read_text())
    assert rep["scale_factor"] == 1.0
    assert all(p["relative_deviation"] == 0 for p in rep["pairs"])


def test_calibrate_grid_cardinality(tmp_path, capsys):
    base = tmp_path / "base.json"
    base.write_text(json.dumps({"scenario": {"distance_m": 300, "device": "LP", "mcs": "QAM16-1/2",
                                             "channel": "urban", "duration_s": 0.05, "bin_width_s": 0.05}}))
    trial = tmp_path / "trial"
    sc = make_scenario("urban", "LP", "QAM16-1/2", distance_m=300, duration_s=0.05, bin_width_s=0.05)
    io.write_run(trial, run(sc), sc)
    out = tmp_path / "cal.json"
    assert _cli("calibrate", base, trial, "--alpha-grid", "2.0:2.6:0.1", "--k-grid", "0:10:0.5",
                "--seeds", "1", "--out", out, "--plot") == 0
    res = json.loads(out.read_text())
    assert len(res["grid"]) == 7 * 21
    assert {g["alpha"] for g in res["grid"]} == {2.0, 2.1, 2.2, 2.3, 2.4, 2.5, 2.6}
    assert "divergence_metric" in res
    assert out.with_suffix(".png").stat().st_size > 0


def test_calibrate_bad_grid(tmp_path, capsys):
    assert _cli("calibrate", SCENARIOS / "calibration_base.json", TRIALS,
                "--alpha-grid", "2.6:2.0:0.1", "--k-grid", "0:1:1") == 1


def test_sweep_and_report(tmp_path, capsys):
    out = tmp_path / "res"
    assert _cli("sweep", SCENARIOS / "urban_lp_qam16.json", "--distances", "50,110",
                "--mcs", "BPSK-1/2", "QAM64-3/4", "--seeds", "1:2", "--out", out) == 0
    assert len(list(out.glob("*.csv"))) == 8
    assert _cli("report", out, "--format", "csv") == 0
    text = (out / "report_throughput.csv").read_text().splitlines()
    assert text[0] == ",".join(io.BOXPLOT_COLUMNS)
    assert len(text) == 5
    assert (out / "report_throughput.png").stat().st_size > 0
    # a report does not count as a run log on the next pass
    assert _cli("report", out, "--format", "json", "--metric", "jitter", "--no-plots") == 0
    rows = json.loads((out / "report_jitter.json").read_text())["rows"]
    assert [r["condition"] for r in rows][:2] == ["LP@50m/BPSK-1/2", "LP@50m/QAM64-3/4"]


def test_tune_prints_interval(tmp_path, capsys):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"scenario": {"distance_m": 6.5, "device": "HP", "mcs": "QAM64-3/4",
                                          "channel": "anechoic", "duration_s": 1}}))
    assert _cli("tune", p) == 0
    interval = float(capsys.readouterr().out)
    sc = with_interval(make_scenario("anechoic", "HP", "QAM64-3/4", duration_s=1.0), interval)
    assert run(sc).queue_drops == 0


def test_trial_fixtures_parse():
    logs = io.load_log_dir(TRIALS)
    groups = io.samples_by_condition(logs)
    assert len(groups) == 5 and all(len(v) == 40 for v in groups.values())


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "v2xcalib", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "simulate" in r.stdout
