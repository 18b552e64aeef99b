"""802.11p MAC: bounded TX queue and DCF backoff (RTS/CTS disabled)."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, NamedTuple, Sequence, Tuple, Union

from v2xcalib.config import DeviceProfile


@dataclass(frozen=True)
class MacTimingConstants:
    """10 MHz 802.11p timing."""

    slot_s: float = 13e-6
    sifs_s: float = 32e-6
    difs_s: float = 58e-6
    ack_psdu_bytes: int = 14

    def __post_init__(self):
        if abs(self.difs_s - (self.sifs_s + 2 * self.slot_s)) > 1e-12:
            raise ValueError("DIFS must equal SIFS + 2 slots")


MAC_TIMING = MacTimingConstants()


class EnqueueResult(enum.Enum):
    ACCEPTED = "accepted"
    DROPPED = "dropped"


@dataclass
class MacQueue:
    capacity: int = 50
    entries: Deque[Any] = field(default_factory=deque)
    drop_count: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def pop(self):
        return self.entries.popleft()


def enqueue(queue: MacQueue, frame) -> EnqueueResult:
    if len(queue.entries) < queue.capacity:
        queue.entries.append(frame)
        return EnqueueResult.ACCEPTED
    queue.drop_count += 1
    return EnqueueResult.DROPPED


def draw_backoff(cw_current: int, rng) -> int:
    """Uniform slot count in ``[0, cw_current]``."""
    return int(rng.random() * (cw_current + 1))


@dataclass(frozen=True)
class BackoffState:
    cw_current: int
    retry_count: int = 0
    slots_remaining: int = 0

    @classmethod
    def initial(cls, device: DeviceProfile) -> "BackoffState":
        return cls(device.cw_min)


class Discard(NamedTuple):
    """Returned by :func:`on_tx_failure` once the retry limit is exceeded."""

    reset: BackoffState


def on_tx_failure(state: BackoffState, device: DeviceProfile) -> Union[BackoffState, Discard]:
    retries = state.retry_count + 1
    if retries > device.retry_limit:
        return Discard(BackoffState.initial(device))
    cw = min((state.cw_current + 1) * 2 - 1, device.cw_max)
    return BackoffState(cw, retries, 0)


def medium_access_delay(
    state: BackoffState,
    medium_busy_intervals: Sequence[Tuple[float, float]],
    now: float,
    timing: MacTimingConstants = MAC_TIMING,
) -> float:
    """Time at which a queued frame starts transmitting.

    The medium must first be sensed idle for DIFS, then the backoff counter
    counts down ``state.slots_remaining`` idle slots. A busy period freezes
    the counter; countdown resumes after a fresh DIFS. Busy intervals are
    ``(start, end)`` pairs.
    """
    busy = sorted((s, e) for s, e in medium_busy_intervals if e > now)
    slots = state.slots_remaining
    t = now
    i = 0
    while True:
        # skip any busy period covering t
        while i < len(busy) and busy[i][0] <= t:
            t = max(t, busy[i][1])
            i += 1
        next_busy = busy[i][0] if i < len(busy) else float("inf")
        idle_from = t + timing.difs_s
        if idle_from > next_busy:
            t = next_busy
            continue
        available = int((next_busy - idle_from) / timing.slot_s + 1e-9) if next_busy != float("inf") else slots
        if available >= slots:
            return idle_from + slots * timing.slot_s
        slots -= available
        t = next_busy
