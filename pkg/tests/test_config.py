import json

import pytest

from v2xcalib.config import (
    ConfigError,
    Fading,
    FadingKind,
    Modulation,
    ReceptionMode,
    builtin_mcs_table,
    device_profiles,
    dump_scenario,
    get_device,
    get_mcs,
    load_scenario,
    make_scenario,
    scenario_from_dict,
    scenario_presets,
    scenario_to_dict,
)


@pytest.mark.parametrize(
    "name, n_dbps, bitrate",
    [("BPSK-1/2", 24, 3e6), ("QAM64-3/4", 216, 27e6), ("QPSK-1/2", 48, 6e6)],
)
def test_mcs_bitrates(name, n_dbps, bitrate):
    m = get_mcs(name)
    assert m.data_bits_per_symbol == n_dbps
    assert m.phy_bitrate == bitrate


def test_mcs_table_is_ordered_by_bitrate():
    rates = [m.phy_bitrate for m in builtin_mcs_table()]
    assert rates == sorted(rates) and len(set(rates)) == 8


@pytest.mark.parametrize("alias", ["64-QAM 3/4", "qam64-3/4", "64QAM 3/4"])
def test_mcs_aliases(alias):
    assert get_mcs(alias).name == "QAM64-3/4"


def test_unknown_mcs():
    with pytest.raises(ConfigError):
        get_mcs("QAM256-5/6")


@pytest.mark.parametrize(
    "dev, mod, tx, sens",
    [("LP", Modulation.BPSK, 27, -93), ("HP", Modulation.QAM64, 24, -80), ("HP", Modulation.QPSK, 27, -88)],
)
def test_device_table_rows(dev, mod, tx, sens):
    d = get_device(dev)
    assert d.tx_power_dbm[mod] == tx
    assert d.rx_sensitivity_dbm[mod] == sens


def test_tx_power_non_increasing_in_order():
    for d in device_profiles():
        powers = [d.tx_power_dbm[m] for m in Modulation]
        assert powers == sorted(powers, reverse=True)


def test_presets():
    p = scenario_presets()
    assert p["urban"].path_loss_exponent == 2.3
    assert p["urban"].fading == Fading.rician(3.36)
    assert p["suburban"].breakpoint_m == 50.0
    assert p["suburban"].second_segment.path_loss_exponent == 2.5
    assert p["suburban"].second_segment.fading.kind is FadingKind.RAYLEIGH
    assert p["anechoic"].fading.kind is FadingKind.NONE
    assert p["anechoic"].path_loss_exponent == 2.0


def test_segment_switches_past_breakpoint():
    ch = scenario_presets()["suburban"]
    assert ch.segment_at(50.0).path_loss_exponent == 2.3
    assert ch.segment_at(50.1).path_loss_exponent == 2.5


@pytest.mark.parametrize("preset", ["anechoic", "urban", "suburban", "rural"])
def test_scenario_dict_round_trip(preset):
    sc = make_scenario(preset, "LP", "QAM16-3/4", seed=7, reception_mode=ReceptionMode.BER_BASED)
    assert scenario_from_dict(scenario_to_dict(sc)) == sc


def test_scenario_file_round_trip(tmp_path):
    sc = make_scenario("suburban", "HP", "QPSK-3/4", distance_m=200)
    path = tmp_path / "s.json"
    dump_scenario(sc, path)
    assert load_scenario(path) == sc


def test_scenario_from_names():
    sc = scenario_from_dict({"scenario": {"distance_m": 50, "device": "LP", "mcs": "QPSK-1/2",
                                          "channel": "urban"}})
    assert sc.channel == scenario_presets()["urban"]
    assert sc.tx_device == sc.rx_device == get_device("LP")


def test_channel_preset_override():
    sc = scenario_from_dict({"scenario": {
        "distance_m": 50, "device": "LP", "mcs": "QPSK-1/2",
        "channel": {"preset": "urban", "fading": {"kind": "rician", "k_db": 5.0}, "noise_sigma_db": 0},
    }})
    assert sc.channel.fading == Fading.rician(5.0)
    assert sc.channel.noise_sigma_db == 0
    assert sc.channel.path_loss_exponent == 2.3


@pytest.mark.parametrize(
    "doc",
    [
        {"scenario": {"distance_m": 5, "device": "HP", "mcs": "BPSK-1/2", "bogus": 1}},
        {"scenario": {"device": "HP", "mcs": "BPSK-1/2"}},
        {"scenario": {"distance_m": -1, "device": "HP", "mcs": "BPSK-1/2"}},
        {"scenario": {"distance_m": 5, "device": "XX", "mcs": "BPSK-1/2"}},
        {"scenario": {"distance_m": 5, "device": "HP", "mcs": "BPSK-1/2", "channel": "mars"}},
        {"scenario": {"distance_m": 5, "device": "HP", "mcs": "BPSK-1/2", "reception_mode": "psychic"}},
        {"nothing": {}},
    ],
)
def test_invalid_scenarios_rejected(doc):
    with pytest.raises(ConfigError):
        scenario_from_dict(doc)


def test_load_scenario_reports_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises((ConfigError, json.JSONDecodeError)):
        load_scenario(path)


def test_invalid_fading():
    with pytest.raises(ConfigError):
        Fading(FadingKind.RICIAN, None)
