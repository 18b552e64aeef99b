"""Link-level IEEE 802.11p/DSRC simulator with a sim-vs-trial calibration harness."""

from v2xcalib.config import (
    ChannelConfig,
    ConfigError,
    DeviceProfile,
    Fading,
    FadingKind,
    McsProfile,
    Modulation,
    ReceptionMode,
    ScenarioConfig,
    Segment,
    TrafficConfig,
    builtin_mcs_table,
    device_profiles,
    get_mcs,
    load_scenario,
    scenario_presets,
)
from v2xcalib.engine import RunMetrics, run, saturate_interval, sweep
from v2xcalib.stats import boxplot, jitter_rfc1889, trend_compare
from v2xcalib.calibrate import calibrate

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig",
    "ConfigError",
    "DeviceProfile",
    "Fading",
    "FadingKind",
    "McsProfile",
    "Modulation",
    "ReceptionMode",
    "RunMetrics",
    "ScenarioConfig",
    "Segment",
    "TrafficConfig",
    "boxplot",
    "builtin_mcs_table",
    "calibrate",
    "device_profiles",
    "get_mcs",
    "jitter_rfc1889",
    "load_scenario",
    "run",
    "saturate_interval",
    "scenario_presets",
    "sweep",
    "trend_compare",
]
