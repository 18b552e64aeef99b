"""Discrete-event simulation of one OBU -> RSU 802.11p link.

A UDP stream (IP-fragmented to the MTU) and periodic broadcast beacons
share the OBU's MAC queue; frames go through DCF access, the PHY link
budget and the reception decision, and the RSU side logs every fully
reassembled datagram.
"""

from __future__ import annotations

import enum
import heapq
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from v2xcalib import mac, phy
from v2xcalib.config import (
    ConfigError,
    DeviceProfile,
    McsProfile,
    ReceptionMode,
    ScenarioConfig,
    get_mcs,
)
from v2xcalib.stats import jitter_rfc1889

log = logging.getLogger(__name__)

IP_HEADER_BYTES = 20
UDP_HEADER_BYTES = 8
ACK_MCS = get_mcs("BPSK-1/2")


class TuningError(RuntimeError):
    """The saturation tuner could not find a drop-free send interval."""


class EventKind(enum.IntEnum):
    GENERATE_DATAGRAM = 0
    GENERATE_BEACON = 1
    TX_START = 2
    TX_END = 3
    ACK_TIMEOUT = 4
    RUN_END = 5


class Event(NamedTuple):
    """Scheduled event; heap order is (time, insertion sequence)."""

    time_s: float
    seq: int
    kind: EventKind
    payload: object = None


class RxRecord(NamedTuple):
    send_time_s: float
    recv_time_s: float
    seq: int
    payload_bytes: int


@dataclass
class RunMetrics:
    rx_records: List[RxRecord]
    throughput_samples_bps: List[float]
    jitter_series_s: List[float]
    queue_drops: int
    channel_losses: int
    mac_discards: int
    duration_s: float
    datagrams_generated: int = 0
    datagrams_lost: int = 0
    datagrams_in_flight: int = 0
    fragments_generated: int = 0
    fragments_delivered: int = 0
    beacons_generated: int = 0
    beacons_sent: int = 0
    beacons_delivered: int = 0
    max_queue_occupancy: int = 0
    trace: Optional[List[tuple]] = field(default=None, repr=False, compare=False)

    @property
    def datagrams_received(self) -> int:
        return len(self.rx_records)

    @property
    def mean_throughput_bps(self) -> float:
        bits = sum(r.payload_bytes for r in self.rx_records) * 8
        return bits / self.duration_s

    @property
    def final_jitter_s(self) -> float:
        return self.jitter_series_s[-1] if self.jitter_series_s else 0.0


def ip_fragments(udp_payload_bytes: int, mtu_bytes: int) -> List[int]:
    """IP payload size of each fragment of one UDP datagram.

    All but the last fragment carry the largest multiple of 8 bytes that
    fits the MTU after the IP header.
    """
    total = udp_payload_bytes + UDP_HEADER_BYTES
    per_frag = (mtu_bytes - IP_HEADER_BYTES) // 8 * 8
    sizes = [per_frag] * (total // per_frag)
    if total % per_frag or not sizes:
        sizes.append(total % per_frag)
    return sizes


def mac_framing_bytes(scenario: ScenarioConfig) -> int:
    """Per-frame MAC header + FCS + LLC/SNAP bytes."""
    return scenario.traffic.overhead_bytes - IP_HEADER_BYTES - UDP_HEADER_BYTES


def data_psdu_sizes(scenario: ScenarioConfig) -> List[int]:
    framing = mac_framing_bytes(scenario)
    return [size + IP_HEADER_BYTES + framing
            for size in ip_fragments(scenario.traffic.udp_payload_bytes, scenario.traffic.mtu_bytes)]


def beacon_psdu_bytes(scenario: ScenarioConfig) -> int:
    return scenario.traffic.beacon_bytes + mac_framing_bytes(scenario)


def throughput_bins(records: Iterable[Tuple[float, float, int, int]], duration_s: float,
                    bin_width_s: float = 1.0, warmup_s: float = 0.0) -> List[float]:
    """Received payload rate (bit/s) in consecutive bins over ``[warmup, duration]``.

    A record counts toward the bin containing its receive time; the last bin
    may be shorter than ``bin_width_s``.
    """
    span = duration_s - warmup_s
    n = max(1, math.ceil(span / bin_width_s - 1e-9))
    bits = [0] * n
    for _, recv, _, payload in records:
        if recv < warmup_s or recv > duration_s:
            continue
        bits[min(int((recv - warmup_s) / bin_width_s), n - 1)] += payload * 8
    widths = [bin_width_s] * (n - 1) + [span - (n - 1) * bin_width_s]
    return [b / w for b, w in zip(bits, widths)]


class _BufferedRng:
    """Hands out scalar draws from a numpy generator in blocks."""

    __slots__ = ("_gen", "_normals", "_uniforms", "_block")

    def __init__(self, seed_seq: np.random.SeedSequence, block: int = 2048):
        self._gen = np.random.Generator(np.random.PCG64(seed_seq))
        self._normals: List[float] = []
        self._uniforms: List[float] = []
        self._block = block

    def standard_normal(self) -> float:
        if not self._normals:
            self._normals = self._gen.standard_normal(self._block).tolist()[::-1]
        return self._normals.pop()

    def random(self) -> float:
        if not self._uniforms:
            self._uniforms = self._gen.random(self._block).tolist()[::-1]
        return self._uniforms.pop()


class _Frame:
    __slots__ = ("beacon", "psdu_bytes", "airtime", "dgram", "index")

    def __init__(self, beacon, psdu_bytes, airtime, dgram=-1, index=0):
        self.beacon = beacon
        self.psdu_bytes = psdu_bytes
        self.airtime = airtime
        self.dgram = dgram
        self.index = index


class _Datagram:
    __slots__ = ("send_time", "remaining", "delivered", "lost")

    def __init__(self, send_time, n_frags):
        self.send_time = send_time
        self.remaining = n_frags
        self.delivered = 0
        self.lost = False


class _Simulation:
    def __init__(self, scenario: ScenarioConfig, trace: bool = False):
        self.sc = sc = scenario
        self.trace: Optional[list] = [] if trace else None
        tx, rx = sc.tx_device, sc.rx_device
        self.mcs = sc.mcs
        self.timing = mac.MAC_TIMING

        psdus = data_psdu_sizes(sc)
        self.data_frames = [(p, phy.frame_airtime(p, sc.mcs)) for p in psdus]
        bpsdu = beacon_psdu_bytes(sc)
        self.beacon_frame = (bpsdu, phy.frame_airtime(bpsdu, sc.mcs))
        self.ack_airtime = phy.frame_airtime(self.timing.ack_psdu_bytes, ACK_MCS)

        ch = sc.channel
        self.fading = ch.segment_at(sc.distance_m).fading
        pl = phy.channel_path_loss_db(ch, sc.distance_m)
        self.data_rx_dbm = phy.rx_power_dbm(tx.tx_power_for(sc.mcs), tx.antenna_gain_dbi,
                                            rx.antenna_gain_dbi, tx.system_loss_db, pl, 0.0)
        self.ack_rx_dbm = phy.rx_power_dbm(rx.tx_power_for(ACK_MCS), rx.antenna_gain_dbi,
                                           tx.antenna_gain_dbi, rx.system_loss_db, pl, 0.0)
        self.prop_delay = sc.distance_m / ch.propagation_speed
        self.ber_mode = sc.reception_mode is ReceptionMode.BER_BASED

        streams = np.random.SeedSequence(sc.seed).spawn(4)
        self.rng_backoff, self.rng_fading, self.rng_noise, self.rng_bits = (
            _BufferedRng(s) for s in streams)

        self.queue = mac.MacQueue(tx.queue_capacity)
        self.backoff = mac.BackoffState.initial(tx)
        self.current: Optional[_Frame] = None
        self.busy = False

        self.heap: list = []
        self.seq = 0
        self.datagrams: Dict[int, _Datagram] = {}
        self.records: List[RxRecord] = []
        self.n_datagrams = 0
        self.n_beacons = 0
        self.beacons_sent = 0
        self.beacons_delivered = 0
        self.channel_losses = 0
        self.mac_discards = 0
        self.fragments_delivered = 0
        self.datagrams_lost = 0
        self.max_queue = 0

    # -- scheduling --------------------------------------------------------

    def schedule(self, time_s: float, kind: EventKind, payload=None):
        heapq.heappush(self.heap, (time_s, self.seq, kind, payload))
        self.seq += 1

    def log(self, t, what, detail=None):
        if self.trace is not None:
            self.trace.append((t, what, detail, len(self.queue)))

    def execute(self) -> RunMetrics:
        sc = self.sc
        self.schedule(0.0, EventKind.GENERATE_DATAGRAM, 0)
        self.schedule(0.0, EventKind.GENERATE_BEACON, 0)
        self.schedule(sc.duration_s, EventKind.RUN_END)
        handlers = {
            EventKind.GENERATE_DATAGRAM: self.on_generate_datagram,
            EventKind.GENERATE_BEACON: self.on_generate_beacon,
            EventKind.TX_START: self.on_tx_start,
            EventKind.TX_END: self.on_tx_end,
            EventKind.ACK_TIMEOUT: self.on_ack_timeout,
        }
        pop = heapq.heappop
        heap = self.heap
        while heap:
            t, _, kind, payload = pop(heap)
            if kind is EventKind.RUN_END:
                self.log(t, "RUN_END")
                break
            handlers[kind](t, payload)
        return self.metrics()

    # -- traffic -----------------------------------------------------------

    def push(self, t, frame: _Frame) -> bool:
        ok = mac.enqueue(self.queue, frame) is mac.EnqueueResult.ACCEPTED
        if ok:
            self.max_queue = max(self.max_queue, len(self.queue))
        self.log(t, "ENQUEUE" if ok else "QUEUE_DROP", "BEACON" if frame.beacon else "DATA")
        return ok

    def on_generate_datagram(self, t, k):
        seq = self.n_datagrams
        self.n_datagrams += 1
        dg = _Datagram(t, len(self.data_frames))
        self.datagrams[seq] = dg
        self.log(t, "GENERATE_DATAGRAM", seq)
        for i, (psdu, airtime) in enumerate(self.data_frames):
            if not self.push(t, _Frame(False, psdu, airtime, seq, i)):
                self.mark_lost(dg)
        nxt = (k + 1) * self.sc.traffic.send_interval_s
        if nxt < self.sc.duration_s:
            self.schedule(nxt, EventKind.GENERATE_DATAGRAM, k + 1)
        if not self.busy:
            self.start_access(t)

    def on_generate_beacon(self, t, k):
        self.n_beacons += 1
        self.log(t, "GENERATE_BEACON", k)
        self.push(t, _Frame(True, *self.beacon_frame))
        nxt = (k + 1) * self.sc.traffic.beacon_interval_s
        if nxt < self.sc.duration_s:
            self.schedule(nxt, EventKind.GENERATE_BEACON, k + 1)
        if not self.busy:
            self.start_access(t)

    def mark_lost(self, dg: _Datagram):
        if not dg.lost:
            dg.lost = True
            self.datagrams_lost += 1

    # -- MAC ---------------------------------------------------------------

    def start_access(self, now):
        if self.current is None:
            if not self.queue.entries:
                self.busy = False
                return
            self.current = self.queue.pop()
        self.busy = True
        frame = self.current
        cw = self.tx_cw_min if frame.beacon else self.backoff.cw_current
        slots = mac.draw_backoff(cw, self.rng_backoff)
        state = mac.BackoffState(cw, self.backoff.retry_count, slots)
        # single contender: the medium is idle whenever the OBU contends
        start = mac.medium_access_delay(state, (), now, self.timing)
        self.schedule(start, EventKind.TX_START, frame)

    @property
    def tx_cw_min(self) -> int:
        return self.sc.tx_device.cw_min

    def on_tx_start(self, t, frame: _Frame):
        fading_db = phy.fading_gain_db(self.fading, self.rng_fading)
        noise = phy.noise_sample_dbm(self.sc.channel, self.rng_noise)
        outcome = phy.frame_success(self.sc, self.mcs, 8 * frame.psdu_bytes,
                                    self.data_rx_dbm + fading_db, noise, self.rng_bits)
        self.log(t, "TX_START", "BEACON" if frame.beacon else "DATA")
        self.schedule(t + frame.airtime, EventKind.TX_END, (frame, outcome, fading_db))

    def on_tx_end(self, t, payload):
        frame, outcome, fading_db = payload
        self.log(t, "TX_END", outcome.failure_cause.value)
        if not outcome.delivered:
            self.channel_losses += 1
        if frame.beacon:
            self.beacons_sent += 1
            self.beacons_delivered += outcome.delivered
            self.current = None
            self.start_access(t)
            return
        if outcome.delivered:
            self.deliver(frame, t + self.prop_delay)
        if not self.sc.unicast_ack:
            if not outcome.delivered:
                self.fragment_failed(frame)
            self.current = None
            self.start_access(t)
            return
        acked = outcome.delivered
        if acked and self.ber_mode:
            noise = phy.noise_sample_dbm(self.sc.channel, self.rng_noise)
            ack = phy.frame_success(self.sc, ACK_MCS, 8 * self.timing.ack_psdu_bytes,
                                    self.ack_rx_dbm + fading_db, noise, self.rng_bits,
                                    receiver=self.sc.tx_device)
            acked = ack.delivered
        wait = self.timing.sifs_s + self.ack_airtime + 2 * self.prop_delay
        self.schedule(t + wait, EventKind.ACK_TIMEOUT, (frame, acked))

    def on_ack_timeout(self, t, payload):
        frame, acked = payload
        tx = self.sc.tx_device
        if acked:
            self.log(t, "ACK")
            self.backoff = mac.BackoffState.initial(tx)
            self.current = None
        else:
            self.log(t, "ACK_TIMEOUT")
            nxt = mac.on_tx_failure(self.backoff, tx)
            if isinstance(nxt, mac.Discard):
                self.mac_discards += 1
                self.backoff = nxt.reset
                self.fragment_failed(frame)
                self.current = None
            else:
                self.backoff = nxt
        self.start_access(t)

    # -- receiver ----------------------------------------------------------

    def fragment_failed(self, frame: _Frame):
        dg = self.datagrams[frame.dgram]
        if not dg.delivered & (1 << frame.index):
            self.mark_lost(dg)

    def deliver(self, frame: _Frame, recv_time: float):
        dg = self.datagrams[frame.dgram]
        bit = 1 << frame.index
        if dg.delivered & bit:
            return  # duplicate after a lost ACK
        dg.delivered |= bit
        dg.remaining -= 1
        self.fragments_delivered += 1
        if dg.remaining == 0 and not dg.lost:
            self.records.append(RxRecord(dg.send_time, recv_time, frame.dgram,
                                         self.sc.traffic.udp_payload_bytes))
            self.log(recv_time, "DATAGRAM_RECEIVED", frame.dgram)

    def metrics(self) -> RunMetrics:
        sc = self.sc
        recs = self.records
        jitter = jitter_rfc1889([(r.send_time_s, r.recv_time_s) for r in recs]) if len(recs) >= 2 else []
        return RunMetrics(
            rx_records=recs,
            throughput_samples_bps=throughput_bins(recs, sc.duration_s, sc.bin_width_s, sc.warmup_s),
            jitter_series_s=jitter,
            queue_drops=self.queue.drop_count,
            channel_losses=self.channel_losses,
            mac_discards=self.mac_discards,
            duration_s=sc.duration_s,
            datagrams_generated=self.n_datagrams,
            datagrams_lost=self.datagrams_lost,
            datagrams_in_flight=self.n_datagrams - len(recs) - self.datagrams_lost,
            fragments_generated=self.n_datagrams * len(self.data_frames),
            fragments_delivered=self.fragments_delivered,
            beacons_generated=self.n_beacons,
            beacons_sent=self.beacons_sent,
            beacons_delivered=self.beacons_delivered,
            max_queue_occupancy=self.max_queue,
            trace=self.trace,
        )


def validate(scenario: ScenarioConfig) -> None:
    """Cross-field checks that the dataclass constructors cannot make alone."""
    if not isinstance(scenario, ScenarioConfig):
        raise ConfigError("expected a ScenarioConfig")
    if mac_framing_bytes(scenario) < 0:
        raise ConfigError("overhead_bytes too small")


def run(scenario: ScenarioConfig, trace: bool = False) -> RunMetrics:
    """Simulate one scenario; deterministic for a fixed ``scenario.seed``."""
    validate(scenario)
    return _Simulation(scenario, trace).execute()


# --- saturation tuning ------------------------------------------------------

def _airtime_per_datagram(scenario: ScenarioConfig) -> float:
    return sum(phy.frame_airtime(p, scenario.mcs) for p in data_psdu_sizes(scenario))


def saturate_interval(scenario: ScenarioConfig, resolution_s: float = 1e-6) -> float:
    """Smallest send interval (to ``resolution_s``) whose run has no queue drops.

    Bisection over whole runs of ``scenario``; queue drops are assumed to be
    non-increasing in the interval.
    """
    def drops(interval_s: float) -> int:
        sc = replace(scenario, traffic=replace(scenario.traffic, send_interval_s=interval_s))
        return run(sc).queue_drops

    floor_s = _airtime_per_datagram(scenario)
    lo = 0.5 * floor_s
    for _ in range(12):
        if drops(lo) > 0:
            break
        lo *= 0.5
    else:
        log.warning("no queue drops even at %.3g s; returning it", lo)
        return lo
    hi = 4.0 * floor_s
    while drops(hi) > 0:
        hi *= 2.0
        if hi > 2 * scenario.duration_s:
            raise TuningError("queue drops persist even at very large send intervals")

    lo_q = int(math.floor(lo / resolution_s))
    hi_q = int(math.ceil(hi / resolution_s))
    while hi_q - lo_q > 1:
        mid = (lo_q + hi_q) // 2
        if drops(mid * resolution_s) > 0:
            lo_q = mid
        else:
            hi_q = mid
    return round(hi_q * resolution_s, 12)


def with_interval(scenario: ScenarioConfig, interval_s: float) -> ScenarioConfig:
    return replace(scenario, traffic=replace(scenario.traffic, send_interval_s=interval_s))


# --- sweeps -------------------------------------------------------------------

SweepKey = Tuple[float, str, str, int]


def sweep_scenarios(
    base: ScenarioConfig,
    distances: Optional[Sequence[float]] = None,
    mcs: Optional[Sequence] = None,
    devices: Optional[Sequence[DeviceProfile]] = None,
    seeds: Optional[Sequence[int]] = None,
    intervals: Optional[Dict[str, float]] = None,
) -> Dict[SweepKey, ScenarioConfig]:
    """Expand the Cartesian product of the sweep axes into scenarios.

    ``intervals`` optionally maps an MCS name to the send interval to use
    for it (e.g. per-MCS saturation intervals).
    """
    distances = list(distances) if distances is not None else [base.distance_m]
    mcs_list = [get_mcs(m) for m in mcs] if mcs is not None else [base.mcs]
    devices = list(devices) if devices is not None else [base.tx_device]
    seeds = list(seeds) if seeds is not None else [base.seed]
    if not (distances and mcs_list and devices and seeds):
        raise ValueError("sweep axes must be non-empty")
    out = {}
    for d in distances:
        for m in mcs_list:
            for dev in devices:
                for s in seeds:
                    sc = replace(base, distance_m=float(d), mcs=m, tx_device=dev,
                                 rx_device=dev, seed=int(s))
                    if intervals and m.name in intervals:
                        sc = with_interval(sc, intervals[m.name])
                    out[(float(d), m.name, dev.name, int(s))] = sc
    return out


def run_many(scenarios: Sequence[ScenarioConfig], jobs: int = 1) -> List[RunMetrics]:
    if jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, scenarios, chunksize=max(1, len(scenarios) // (4 * jobs))))
    return [run(sc) for sc in scenarios]


def sweep(
    base: ScenarioConfig,
    distances: Optional[Sequence[float]] = None,
    mcs: Optional[Sequence] = None,
    devices: Optional[Sequence[DeviceProfile]] = None,
    seeds: Optional[Sequence[int]] = None,
    intervals: Optional[Dict[str, float]] = None,
    jobs: int = 1,
) -> Dict[SweepKey, RunMetrics]:
    """Run every combination of the axes; keys are (distance, mcs, device, seed)."""
    scenarios = sweep_scenarios(base, distances, mcs, devices, seeds, intervals)
    results = run_many(list(scenarios.values()), jobs)
    return dict(zip(scenarios.keys(), results))
