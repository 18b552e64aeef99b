"""Constant tables and configuration types.

Holds the 802.11p MCS table, the LP/HP transceiver profiles derived from the
manufacturer datasheets, the channel presets for the anechoic, urban,
suburban and rural scenarios, and the JSON scenario-file format.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

SPEED_OF_LIGHT = 299_792_458.0

DATA_SUBCARRIERS = 48
OFDM_SYMBOL_S = 8e-6  # 10 MHz channel


class ConfigError(ValueError):
    """Raised for invalid configuration values or malformed scenario files."""


class Modulation(enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    QAM16 = "QAM16"
    QAM64 = "QAM64"

    @property
    def bits_per_subcarrier(self) -> int:
        return _BITS_PER_SUBCARRIER[self]

    @property
    def order(self) -> int:
        """Constellation size M."""
        return 2 ** self.bits_per_subcarrier


_BITS_PER_SUBCARRIER = {
    Modulation.BPSK: 1,
    Modulation.QPSK: 2,
    Modulation.QAM16: 4,
    Modulation.QAM64: 6,
}


class FadingKind(enum.Enum):
    NONE = "none"
    RICIAN = "rician"
    RAYLEIGH = "rayleigh"


class ReceptionMode(enum.Enum):
    THRESHOLD = "threshold"
    BER_BASED = "ber"


@dataclass(frozen=True)
class McsProfile:
    """One modulation-and-coding scheme.

    The coding rate is kept as an integer ratio so the number of data bits
    per OFDM symbol stays exact.
    """

    modulation: Modulation
    rate_num: int
    rate_den: int
    sinr_threshold_db: float

    @property
    def coding_rate(self) -> Fraction:
        return Fraction(self.rate_num, self.rate_den)

    @property
    def data_bits_per_symbol(self) -> int:
        n = DATA_SUBCARRIERS * self.modulation.bits_per_subcarrier * self.coding_rate
        if n.denominator != 1:
            raise ConfigError(f"non-integer N_DBPS for {self.name}")
        return int(n)

    @property
    def phy_bitrate(self) -> float:
        """PHY bitrate in bit/s."""
        return self.data_bits_per_symbol / OFDM_SYMBOL_S

    @property
    def name(self) -> str:
        return f"{self.modulation.value}-{self.rate_num}/{self.rate_den}"

    def __str__(self) -> str:
        return self.name


# (modulation, coding rate, SINR threshold in dB)
_MCS_ROWS = [
    (Modulation.BPSK, 1, 2, 10.0),
    (Modulation.BPSK, 3, 4, 15.0),
    (Modulation.QPSK, 1, 2, 10.0),
    (Modulation.QPSK, 3, 4, 15.0),
    (Modulation.QAM16, 1, 2, 17.0),
    (Modulation.QAM16, 3, 4, 17.0),
    (Modulation.QAM64, 2, 3, 20.0),
    (Modulation.QAM64, 3, 4, 25.0),
]


def builtin_mcs_table() -> list[McsProfile]:
    """Return the eight 802.11p MCS profiles ordered by PHY bitrate."""
    return [McsProfile(m, num, den, thr) for m, num, den, thr in _MCS_ROWS]


_MOD_ALIASES = {
    "BPSK": Modulation.BPSK,
    "QPSK": Modulation.QPSK,
    "QAM16": Modulation.QAM16,
    "16QAM": Modulation.QAM16,
    "QAM64": Modulation.QAM64,
    "64QAM": Modulation.QAM64,
}


def get_mcs(name: str | McsProfile) -> McsProfile:
    """Resolve an MCS name such as ``"QPSK-3/4"`` or ``"16-QAM 1/2"``."""
    if isinstance(name, McsProfile):
        name = name.name
    text = name.upper().replace(" ", "").replace("-", "").replace("_", "")
    for key, mod in _MOD_ALIASES.items():
        if text.startswith(key):
            rate = text[len(key):]
            break
    else:
        raise ConfigError(f"unknown MCS {name!r}")
    for mcs in builtin_mcs_table():
        if mcs.modulation is mod and rate == f"{mcs.rate_num}/{mcs.rate_den}":
            return mcs
    raise ConfigError(f"unknown MCS {name!r}")


@dataclass(frozen=True)
class DeviceProfile:
    """Transceiver link budget and MAC parameters (LP or HP NIC)."""

    name: str
    antenna_gain_dbi: float
    tx_power_dbm: Mapping[Modulation, float]
    rx_sensitivity_dbm: Mapping[Modulation, float]
    system_loss_db: float = 3.0
    queue_capacity: int = 50
    cw_min: int = 15
    cw_max: int = 1023
    retry_limit: int = 4

    def __post_init__(self):
        if not 0 < self.cw_min < self.cw_max:
            raise ConfigError("need 0 < cw_min < cw_max")
        for cw in (self.cw_min, self.cw_max):
            if (cw + 1) & cw:
                raise ConfigError(f"cw {cw}: cw+1 must be a power of two")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")
        if self.retry_limit < 0:
            raise ConfigError("retry_limit must be >= 0")
        for table in (self.tx_power_dbm, self.rx_sensitivity_dbm):
            missing = set(Modulation) - set(table)
            if missing:
                raise ConfigError(f"device {self.name}: missing entries for {sorted(m.value for m in missing)}")

    def tx_power_for(self, mcs: McsProfile) -> float:
        return self.tx_power_dbm[mcs.modulation]

    def sensitivity_for(self, mcs: McsProfile) -> float:
        return self.rx_sensitivity_dbm[mcs.modulation]


def device_profiles() -> Tuple[DeviceProfile, DeviceProfile]:
    """Return the (LP, HP) device profiles."""
    lp = DeviceProfile(
        name="LP",
        antenna_gain_dbi=7.0,
        tx_power_dbm={Modulation.BPSK: 27.0, Modulation.QPSK: 26.0,
                      Modulation.QAM16: 25.0, Modulation.QAM64: 24.0},
        rx_sensitivity_dbm={Modulation.BPSK: -93.0, Modulation.QPSK: -85.0,
                            Modulation.QAM16: -80.0, Modulation.QAM64: -73.0},
    )
    hp = DeviceProfile(
        name="HP",
        antenna_gain_dbi=9.0,
        tx_power_dbm={Modulation.BPSK: 28.0, Modulation.QPSK: 27.0,
                      Modulation.QAM16: 26.0, Modulation.QAM64: 24.0},
        rx_sensitivity_dbm={Modulation.BPSK: -93.0, Modulation.QPSK: -88.0,
                            Modulation.QAM16: -84.0, Modulation.QAM64: -80.0},
    )
    return lp, hp


def get_device(name: str) -> DeviceProfile:
    for dev in device_profiles():
        if dev.name == name.upper():
            return dev
    raise ConfigError(f"unknown device {name!r} (expected LP or HP)")


@dataclass(frozen=True)
class Fading:
    kind: FadingKind = FadingKind.NONE
    k_db: Optional[float] = None

    def __post_init__(self):
        if self.kind is FadingKind.RICIAN:
            if self.k_db is None or not math.isfinite(self.k_db):
                raise ConfigError("Rician fading needs a finite k_db")
        elif self.k_db is not None:
            raise ConfigError(f"k_db given for {self.kind.value} fading")

    @classmethod
    def none(cls) -> "Fading":
        return cls(FadingKind.NONE)

    @classmethod
    def rician(cls, k_db: float) -> "Fading":
        return cls(FadingKind.RICIAN, float(k_db))

    @classmethod
    def rayleigh(cls) -> "Fading":
        return cls(FadingKind.RAYLEIGH)

    def __str__(self) -> str:
        if self.kind is FadingKind.RICIAN:
            return f"rician(k={self.k_db:g} dB)"
        return self.kind.value


@dataclass(frozen=True)
class Segment:
    """Path-loss exponent and fading for the far side of a breakpoint."""

    path_loss_exponent: float
    fading: Fading = field(default_factory=Fading.none)


@dataclass(frozen=True)
class ChannelConfig:
    path_loss_exponent: float = 2.0
    fading: Fading = field(default_factory=Fading.none)
    breakpoint_m: Optional[float] = None
    second_segment: Optional[Segment] = None
    noise_mean_dbm: float = -110.0
    noise_sigma_db: float = 3.0
    carrier_frequency_hz: float = 5.9e9
    bandwidth_hz: float = 10e6
    propagation_speed: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.path_loss_exponent <= 0:
            raise ConfigError("path_loss_exponent must be positive")
        if (self.breakpoint_m is None) != (self.second_segment is None):
            raise ConfigError("breakpoint_m and second_segment must be given together")
        if self.breakpoint_m is not None and self.breakpoint_m <= 0:
            raise ConfigError("breakpoint_m must be positive")
        if self.noise_sigma_db < 0:
            raise ConfigError("noise_sigma_db must be >= 0")
        for name in ("carrier_frequency_hz", "bandwidth_hz", "propagation_speed"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def segment_at(self, distance_m: float) -> Segment:
        """(exponent, fading) pair in force at ``distance_m``."""
        if self.breakpoint_m is not None and distance_m > self.breakpoint_m:
            return self.second_segment
        return Segment(self.path_loss_exponent, self.fading)


def scenario_presets() -> Dict[str, ChannelConfig]:
    """Channel presets keyed by scenario name."""
    return {
        # free space: no reflections, no fading
        "anechoic": ChannelConfig(path_loss_exponent=2.0, fading=Fading.none()),
        "urban": ChannelConfig(path_loss_exponent=2.3, fading=Fading.rician(3.36)),
        "suburban": ChannelConfig(
            path_loss_exponent=2.3,
            fading=Fading.rician(2.45),
            breakpoint_m=50.0,
            second_segment=Segment(2.5, Fading.rayleigh()),
        ),
        "rural": ChannelConfig(path_loss_exponent=2.2, fading=Fading.rician(8.0)),
    }


# distances (m) at which each scenario was measured
PRESET_DISTANCES = {
    "anechoic": (6.5,),
    "urban": (50.0, 110.0),
    "suburban": (30.0, 60.0, 200.0),
    "rural": (550.0, 700.0),
}


@dataclass(frozen=True)
class TrafficConfig:
    udp_payload_bytes: int = 8192
    mtu_bytes: int = 1500
    send_interval_s: float = 0.01
    beacon_bytes: int = 500
    beacon_interval_s: float = 0.1
    overhead_bytes: int = 64

    def __post_init__(self):
        if self.send_interval_s <= 0:
            raise ConfigError("send_interval_s must be positive")
        if self.beacon_interval_s <= 0:
            raise ConfigError("beacon_interval_s must be positive")
        if self.mtu_bytes < 576:
            raise ConfigError("mtu_bytes must be >= 576")
        if self.udp_payload_bytes < 0 or self.beacon_bytes < 0:
            raise ConfigError("payload sizes must be >= 0")
        if self.overhead_bytes < 28:
            raise ConfigError("overhead_bytes must cover the 20-byte IP and 8-byte UDP headers")


@dataclass(frozen=True)
class ScenarioConfig:
    distance_m: float
    tx_device: DeviceProfile
    rx_device: DeviceProfile
    mcs: McsProfile
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    duration_s: float = 10.0
    seed: int = 1
    reception_mode: ReceptionMode = ReceptionMode.THRESHOLD
    name: str = "custom"
    warmup_s: float = 0.0
    bin_width_s: float = 1.0
    unicast_ack: bool = True

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ConfigError("distance_m must be positive")
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be positive")
        if not 0 <= self.warmup_s < self.duration_s:
            raise ConfigError("warmup_s must lie in [0, duration_s)")
        if not self.bin_width_s > 0:
            raise ConfigError("bin_width_s must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def make_scenario(
    preset: str = "anechoic",
    device: str = "HP",
    mcs: str = "BPSK-1/2",
    distance_m: Optional[float] = None,
    **kwargs,
) -> ScenarioConfig:
    """Convenience constructor from preset/device/MCS names."""
    presets = scenario_presets()
    if preset not in presets:
        raise ConfigError(f"unknown channel preset {preset!r}")
    dev = get_device(device)
    if distance_m is None:
        distance_m = PRESET_DISTANCES[preset][0]
    return ScenarioConfig(
        distance_m=float(distance_m),
        tx_device=dev,
        rx_device=dev,
        mcs=get_mcs(mcs),
        channel=presets[preset],
        name=preset,
        **kwargs,
    )


# --- JSON scenario files -------------------------------------------------

_SCENARIO_KEYS = {
    "name", "distance_m", "device", "mcs", "channel", "traffic", "duration_s",
    "seed", "reception_mode", "warmup_s", "bin_width_s", "unicast_ack",
}
_REQUIRED_KEYS = {"distance_m", "device", "mcs"}


def _check_keys(obj: Mapping, allowed, where: str):
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")


def _fading_from(obj) -> Fading:
    if isinstance(obj, str):
        kind = obj.lower()
        if kind == "rician":
            raise ConfigError("rician fading needs an object with k_db")
        try:
            return Fading(FadingKind(kind))
        except ValueError:
            raise ConfigError(f"unknown fading {obj!r}") from None
    _check_keys(obj, {"kind", "k_db"}, "fading")
    try:
        kind = FadingKind(str(obj.get("kind", "none")).lower())
    except ValueError:
        raise ConfigError(f"unknown fading kind {obj.get('kind')!r}") from None
    return Fading(kind, obj.get("k_db"))


def _fading_to(f: Fading):
    if f.kind is FadingKind.RICIAN:
        return {"kind": "rician", "k_db": f.k_db}
    return f.kind.value


_CHANNEL_FIELDS = {f.name for f in fields(ChannelConfig)}


def _channel_from(obj) -> ChannelConfig:
    presets = scenario_presets()
    if isinstance(obj, str):
        if obj not in presets:
            raise ConfigError(f"unknown channel preset {obj!r}")
        return presets[obj]
    _check_keys(obj, _CHANNEL_FIELDS | {"preset"}, "channel")
    base = ChannelConfig()
    if "preset" in obj:
        if obj["preset"] not in presets:
            raise ConfigError(f"unknown channel preset {obj['preset']!r}")
        base = presets[obj["preset"]]
    changes: Dict[str, Any] = {}
    for key, value in obj.items():
        if key == "preset":
            continue
        if key == "fading":
            value = _fading_from(value)
        elif key == "second_segment" and value is not None:
            _check_keys(value, {"path_loss_exponent", "fading"}, "second_segment")
            value = Segment(float(value["path_loss_exponent"]),
                            _fading_from(value.get("fading", "none")))
        elif value is not None:
            value = float(value)
        changes[key] = value
    return replace(base, **changes)


def _channel_to(ch: ChannelConfig) -> dict:
    out = {}
    for f in fields(ChannelConfig):
        value = getattr(ch, f.name)
        if f.name == "fading":
            value = _fading_to(value)
        elif f.name == "second_segment" and value is not None:
            value = {"path_loss_exponent": value.path_loss_exponent,
                     "fading": _fading_to(value.fading)}
        out[f.name] = value
    return out


_DEVICE_FIELDS = {f.name for f in fields(DeviceProfile)}


def _device_from(obj) -> DeviceProfile:
    if isinstance(obj, str):
        return get_device(obj)
    _check_keys(obj, _DEVICE_FIELDS, "device")
    if "name" not in obj:
        raise ConfigError("device: 'name' (LP or HP) is required")
    base = get_device(obj["name"])
    changes: Dict[str, Any] = {}
    for key, value in obj.items():
        if key == "name":
            continue
        if key in ("tx_power_dbm", "rx_sensitivity_dbm"):
            table = dict(getattr(base, key))
            for mod, dbm in value.items():
                try:
                    table[_MOD_ALIASES[mod.upper().replace("-", "")]] = float(dbm)
                except KeyError:
                    raise ConfigError(f"device: unknown modulation {mod!r}") from None
            value = table
        elif key in ("queue_capacity", "cw_min", "cw_max", "retry_limit"):
            value = int(value)
        else:
            value = float(value)
        changes[key] = value
    return replace(base, **changes)


def _device_to(dev: DeviceProfile) -> dict:
    out = {}
    for f in fields(DeviceProfile):
        value = getattr(dev, f.name)
        if f.name in ("tx_power_dbm", "rx_sensitivity_dbm"):
            value = {m.value: value[m] for m in Modulation}
        out[f.name] = value
    return out


_TRAFFIC_FIELDS = {f.name for f in fields(TrafficConfig)}


def scenario_from_dict(data: Mapping) -> ScenarioConfig:
    """Build a ScenarioConfig from the ``{"scenario": {...}}`` document."""
    _check_keys(data, {"scenario"}, "top level")
    if "scenario" not in data:
        raise ConfigError("top level: missing 'scenario'")
    sc = data["scenario"]
    _check_keys(sc, _SCENARIO_KEYS, "scenario")
    missing = _REQUIRED_KEYS - set(sc)
    if missing:
        raise ConfigError(f"scenario: missing key(s) {', '.join(sorted(missing))}")

    dev = sc["device"]
    if isinstance(dev, Mapping) and ("tx" in dev or "rx" in dev):
        _check_keys(dev, {"tx", "rx"}, "device")
        tx_device, rx_device = _device_from(dev["tx"]), _device_from(dev["rx"])
    else:
        tx_device = rx_device = _device_from(dev)

    channel = _channel_from(sc.get("channel", "anechoic"))
    traffic_obj = sc.get("traffic", {})
    _check_keys(traffic_obj, _TRAFFIC_FIELDS, "traffic")
    traffic = TrafficConfig(**{
        k: (float(v) if k.endswith("_s") else int(v)) for k, v in traffic_obj.items()
    })
    try:
        mode = ReceptionMode(str(sc.get("reception_mode", "threshold")).lower())
    except ValueError:
        raise ConfigError(f"unknown reception_mode {sc['reception_mode']!r}") from None

    name = sc.get("name")
    if name is None:
        name = sc["channel"] if isinstance(sc.get("channel"), str) else "custom"
    return ScenarioConfig(
        distance_m=float(sc["distance_m"]),
        tx_device=tx_device,
        rx_device=rx_device,
        mcs=get_mcs(sc["mcs"]),
        channel=channel,
        traffic=traffic,
        duration_s=float(sc.get("duration_s", 10.0)),
        seed=int(sc.get("seed", 1)),
        reception_mode=mode,
        name=str(name),
        warmup_s=float(sc.get("warmup_s", 0.0)),
        bin_width_s=float(sc.get("bin_width_s", 1.0)),
        unicast_ack=bool(sc.get("unicast_ack", True)),
    )


def scenario_to_dict(s: ScenarioConfig) -> dict:
    if s.tx_device == s.rx_device:
        device: Any = _device_to(s.tx_device)
    else:
        device = {"tx": _device_to(s.tx_device), "rx": _device_to(s.rx_device)}
    return {
        "scenario": {
            "name": s.name,
            "distance_m": s.distance_m,
            "device": device,
            "mcs": s.mcs.name,
            "channel": _channel_to(s.channel),
            "traffic": {f.name: getattr(s.traffic, f.name) for f in fields(TrafficConfig)},
            "duration_s": s.duration_s,
            "seed": s.seed,
            "reception_mode": s.reception_mode.value,
            "warmup_s": s.warmup_s,
            "bin_width_s": s.bin_width_s,
            "unicast_ack": s.unicast_ack,
        }
    }


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(data)


def dump_scenario(s: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
