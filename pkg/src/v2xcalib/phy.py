"""PHY layer: frame airtime, link budget, fading, noise and reception."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

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
    SPEED_OF_LIGHT,
)

BOLTZMANN = 1.380649e-23  # J/K
REFERENCE_DISTANCE_M = 1.0


@dataclass(frozen=True)
class PhyTimingConstants:
    preamble_s: float = 32e-6
    sig_s: float = 8e-6
    symbol_s: float = 8e-6
    service_bits: int = 16
    tail_bits: int = 6

    @property
    def header_s(self) -> float:
        return self.preamble_s + self.sig_s


PHY_TIMING = PhyTimingConstants()


def frame_symbols(psdu_bytes: int, mcs: McsProfile, timing: PhyTimingConstants = PHY_TIMING) -> int:
    """Number of OFDM symbols in the Data field (service + PSDU + tail, padded)."""
    if psdu_bytes < 0:
        raise ValueError("psdu_bytes must be >= 0")
    bits = timing.service_bits + 8 * psdu_bytes + timing.tail_bits
    return -(-bits // mcs.data_bits_per_symbol)


def frame_airtime(psdu_bytes: int, mcs: McsProfile, timing: PhyTimingConstants = PHY_TIMING) -> float:
    """Airtime in seconds of a PPDU carrying ``psdu_bytes``."""
    return timing.header_s + timing.symbol_s * frame_symbols(psdu_bytes, mcs, timing)


# --- large-scale propagation ---------------------------------------------

def free_space_loss_db(freq_hz: float, distance_m: float = REFERENCE_DISTANCE_M,
                       speed: float = SPEED_OF_LIGHT) -> float:
    return 20.0 * math.log10(4.0 * math.pi * distance_m * freq_hz / speed)


def path_loss_db(distance_m: float, alpha: float, freq_hz: float,
                 speed: float = SPEED_OF_LIGHT) -> float:
    """Log-distance path loss anchored to free space at 1 m."""
    if not distance_m > 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    return free_space_loss_db(freq_hz, REFERENCE_DISTANCE_M, speed) + \
        10.0 * alpha * math.log10(distance_m / REFERENCE_DISTANCE_M)


def channel_path_loss_db(channel: ChannelConfig, distance_m: float) -> float:
    """Path loss for a (possibly dual-slope) channel.

    Beyond the breakpoint the second exponent applies to the distance past
    the breakpoint, so the loss stays continuous at the breakpoint.
    """
    bp = channel.breakpoint_m
    f, c = channel.carrier_frequency_hz, channel.propagation_speed
    if bp is None or distance_m <= bp:
        return path_loss_db(distance_m, channel.path_loss_exponent, f, c)
    return (path_loss_db(bp, channel.path_loss_exponent, f, c)
            + 10.0 * channel.second_segment.path_loss_exponent * math.log10(distance_m / bp))


# --- small-scale fading and noise ----------------------------------------

def rician_k_linear(fading: Fading) -> float:
    if fading.kind is FadingKind.RAYLEIGH:
        return 0.0
    return 10.0 ** (fading.k_db / 10.0)


def fading_gain_db(fading: Fading, rng) -> float:
    """Draw one block-fading power gain in dB, normalised so E[|h|^2] = 1.

    ``h = sqrt(K/(K+1)) + sqrt(1/(K+1)) * g`` with ``g`` circular complex
    Gaussian of unit power. Rayleigh is the K = 0 case. Always consumes
    two standard normals for faded channels, so streams stay aligned
    across different K values for the same seed.
    """
    if fading.kind is FadingKind.NONE:
        return 0.0
    k = rician_k_linear(fading)
    los = math.sqrt(k / (k + 1.0))
    scale = math.sqrt(0.5 / (k + 1.0))
    x = los + scale * rng.standard_normal()
    y = scale * rng.standard_normal()
    return 10.0 * math.log10(x * x + y * y)


def noise_sample_dbm(channel: ChannelConfig, rng) -> float:
    """One background-noise draw in dBm."""
    return channel.noise_mean_dbm + channel.noise_sigma_db * rng.standard_normal()


def rx_power_dbm(tx_dbm: float, tx_gain_dbi: float, rx_gain_dbi: float,
                 system_loss_db: float, path_loss_db: float, fading_db: float) -> float:
    return tx_dbm + tx_gain_dbi + rx_gain_dbi - system_loss_db - path_loss_db + fading_db


# --- bandwidth scaling and sensitivity -----------------------------------

@dataclass(frozen=True)
class LinkBudget:
    """Quantities of the Es/N0 and minimum-operational-sensitivity relations.

    All values are linear. ``noise_figure`` and ``noise_temp_k`` are not
    known for the NICs; defaults are 6 dB and 290 K.
    """

    es_over_n0: float
    carrier_to_noise: float
    bandwidth_hz: float
    symbol_rate_hz: float
    boltzmann: float = BOLTZMANN
    noise_temp_k: float = 290.0
    noise_figure: float = 10 ** 0.6
    rx_gain: float = 1.0
    sinr_threshold: float = 10.0

    def __post_init__(self):
        for name in ("es_over_n0", "carrier_to_noise", "bandwidth_hz", "symbol_rate_hz",
                     "boltzmann", "noise_temp_k", "noise_figure", "rx_gain", "sinr_threshold"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"LinkBudget.{name} must be positive")

    @classmethod
    def from_carrier_to_noise(cls, carrier_to_noise: float, bandwidth_hz: float,
                              symbol_rate_hz: float, **kwargs) -> "LinkBudget":
        es_n0 = carrier_to_noise * bandwidth_hz / symbol_rate_hz
        return cls(es_n0, carrier_to_noise, bandwidth_hz, symbol_rate_hz, **kwargs)

    def mos_dbm(self) -> float:
        return _mos_linear_dbm(self.sinr_threshold, self.bandwidth_hz, self.noise_figure,
                               self.noise_temp_k, self.rx_gain, self.boltzmann)


def scale_tx_energy_for_bandwidth(es_n0_at_b1: float, b1: float, b2: float) -> float:
    """Convert an Es/N0 figure quoted at bandwidth ``b1`` to bandwidth ``b2``.

    The OFDM symbol rate tracks the channel bandwidth, so at fixed carrier
    power the symbol energy grows as the bandwidth shrinks: going from
    20 MHz to 10 MHz doubles Es against the same per-Hz noise density.
    """
    if not (b1 > 0 and b2 > 0):
        raise ValueError("bandwidths must be positive")
    return es_n0_at_b1 * (b1 / b2)


def _mos_linear_dbm(sinr_thr, bandwidth_hz, noise_figure, noise_temp_k, rx_gain, k=BOLTZMANN):
    watts = sinr_thr * k * noise_temp_k * bandwidth_hz * noise_figure / rx_gain
    return 10.0 * math.log10(watts) + 30.0


def mos_dbm(sinr_thr_db: float, bandwidth_hz: float, noise_figure_db: float = 6.0,
            noise_temp_k: float = 290.0, rx_gain_dbi: float = 0.0) -> float:
    """Minimum operational sensitivity in dBm.

    ``MOS = SINR_thr * k * T * B * NF / G_rx``, evaluated in linear units.
    """
    if not (bandwidth_hz > 0 and noise_temp_k > 0):
        raise ValueError("bandwidth and noise temperature must be positive")
    return _mos_linear_dbm(
        10 ** (sinr_thr_db / 10), bandwidth_hz, 10 ** (noise_figure_db / 10),
        noise_temp_k, 10 ** (rx_gain_dbi / 10),
    )


# --- bit errors -----------------------------------------------------------

def qfunc(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ber(snr_per_bit: float, modulation: Modulation) -> float:
    """Uncoded bit error rate for ``Eb/N0 = snr_per_bit`` (linear)."""
    if snr_per_bit < 0:
        raise ValueError("snr_per_bit must be >= 0")
    if modulation in (Modulation.BPSK, Modulation.QPSK):
        return qfunc(math.sqrt(2.0 * snr_per_bit))
    m = modulation.order
    bits = modulation.bits_per_subcarrier
    p = (4.0 / bits) * (1.0 - 1.0 / math.sqrt(m)) * qfunc(math.sqrt(3.0 * bits * snr_per_bit / (m - 1)))
    return min(p, 0.5)


def delivery_probability(bit_error_rate: float, n_bits: int) -> float:
    """Probability that ``n_bits`` independent bits all arrive intact."""
    if bit_error_rate >= 1.0:
        return 0.0 if n_bits > 0 else 1.0
    return math.exp(n_bits * math.log1p(-bit_error_rate))


# --- reception ------------------------------------------------------------

class FailureCause(enum.Enum):
    NONE = "none"
    BELOW_SENSITIVITY = "below_sensitivity"
    BELOW_SINR_THRESHOLD = "below_sinr_threshold"
    BIT_ERRORS = "bit_errors"


@dataclass(frozen=True)
class RxOutcome:
    rx_power_dbm: float
    noise_dbm: float
    sinr_db: float
    delivered: bool
    failure_cause: FailureCause

    def __post_init__(self):
        if self.delivered != (self.failure_cause is FailureCause.NONE):
            raise ValueError("delivered must hold exactly when failure_cause is NONE")


def frame_success(
    scenario: ScenarioConfig,
    mcs: McsProfile,
    psdu_bits: int,
    rx_power: float,
    noise: float,
    rng=None,
    receiver: Optional[DeviceProfile] = None,
) -> RxOutcome:
    """Decide whether one frame is received.

    The sensitivity gate is checked first, then the SINR threshold. In
    BER-based mode a surviving frame is additionally dropped with
    probability ``1 - (1 - ber)^psdu_bits`` (one uniform draw from ``rng``).
    With a single link and no interferer, SINR equals SNR.
    """
    receiver = receiver or scenario.rx_device
    sinr_db = rx_power - noise
    if rx_power < receiver.sensitivity_for(mcs):
        return RxOutcome(rx_power, noise, sinr_db, False, FailureCause.BELOW_SENSITIVITY)
    if sinr_db < mcs.sinr_threshold_db:
        return RxOutcome(rx_power, noise, sinr_db, False, FailureCause.BELOW_SINR_THRESHOLD)
    if scenario.reception_mode is ReceptionMode.BER_BASED:
        gamma_b = 10 ** (sinr_db / 10) * scenario.channel.bandwidth_hz / mcs.phy_bitrate
        p_ok = delivery_probability(ber(gamma_b, mcs.modulation), psdu_bits)
        if rng.random() >= p_ok:
            return RxOutcome(rx_power, noise, sinr_db, False, FailureCause.BIT_ERRORS)
    return RxOutcome(rx_power, noise, sinr_db, True, FailureCause.NONE)
