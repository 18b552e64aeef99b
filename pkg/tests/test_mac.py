import numpy as np
import pytest
from hypothesis import given, strategies as st

from v2xcalib import mac
from v2xcalib.config import get_device
from v2xcalib.mac import MAC_TIMING, BackoffState, Discard, EnqueueResult, MacQueue

HP = get_device("HP")


def _filled(n):
    q = MacQueue(50)
    for i in range(n):
        mac.enqueue(q, i)
    return q


def test_enqueue_boundaries():
    q = _filled(49)
    assert mac.enqueue(q, "x") is EnqueueResult.ACCEPTED and len(q) == 50
    assert mac.enqueue(q, "y") is EnqueueResult.DROPPED
    assert q.drop_count == 1 and len(q) == 50
    assert mac.enqueue(MacQueue(50), "z") is EnqueueResult.ACCEPTED


@given(st.lists(st.booleans(), max_size=200))
def test_queue_never_exceeds_capacity(ops):
    q = MacQueue(50)
    for push in ops:
        if push:
            mac.enqueue(q, 0)
        elif len(q):
            q.pop()
        assert len(q) <= 50


def test_queue_is_fifo():
    q = _filled(3)
    assert [q.pop() for _ in range(3)] == [0, 1, 2]


def test_backoff_uniform():
    rng = np.random.default_rng(0)
    draws = np.array([mac.draw_backoff(15, rng) for _ in range(10**5)])
    freq = np.bincount(draws, minlength=16) / draws.size
    assert draws.min() == 0 and draws.max() == 15
    assert np.all(np.abs(freq - 1 / 16) < 0.005)


def test_backoff_degenerate_and_max():
    rng = np.random.default_rng(1)
    assert all(mac.draw_backoff(0, rng) == 0 for _ in range(100))
    d = [mac.draw_backoff(1023, rng) for _ in range(10**4)]
    assert 0 <= min(d) and max(d) <= 1023


def test_failure_doubles_window():
    nxt = mac.on_tx_failure(BackoffState(15), HP)
    assert nxt == BackoffState(31, 1, 0)


def test_failure_caps_window():
    assert mac.on_tx_failure(BackoffState(1023, 2), HP).cw_current == 1023


def test_retry_limit_discards():
    out = mac.on_tx_failure(BackoffState(255, HP.retry_limit), HP)
    assert isinstance(out, Discard)
    assert out.reset == BackoffState(15, 0, 0)


def test_retry_sequence():
    state, cws = BackoffState.initial(HP), []
    while True:
        state = mac.on_tx_failure(state, HP)
        if isinstance(state, Discard):
            break
        cws.append(state.cw_current)
    assert cws == [31, 63, 127, 255]


def test_timing_constants():
    assert (MAC_TIMING.slot_s, MAC_TIMING.sifs_s, MAC_TIMING.difs_s) == (13e-6, 32e-6, 58e-6)
    with pytest.raises(ValueError):
        mac.MacTimingConstants(difs_s=50e-6)


@pytest.mark.parametrize("slots, micros", [(0, 58), (4, 110)])
def test_access_delay_idle(slots, micros):
    t = mac.medium_access_delay(BackoffState(15, 0, slots), (), 1.0)
    assert t == pytest.approx(1.0 + micros * 1e-6, abs=1e-12)


def test_access_delay_busy_at_start():
    t = mac.medium_access_delay(BackoffState(15, 0, 0), [(0.0, 200e-6)], 0.0)
    assert t >= 258e-6 - 1e-12


def test_access_delay_freezes_countdown():
    # 2 slots elapse before the medium turns busy; the rest resume after a fresh DIFS
    busy_start = 58e-6 + 2 * 13e-6 + 1e-6
    t = mac.medium_access_delay(BackoffState(15, 0, 5), [(busy_start, busy_start + 100e-6)], 0.0)
    assert t == pytest.approx(busy_start + 100e-6 + 58e-6 + 3 * 13e-6, abs=1e-12)


@given(st.integers(0, 1023),
       st.lists(st.tuples(st.floats(0, 0.02), st.floats(1e-6, 2e-3)), max_size=5))
def test_access_never_inside_busy_interval(slots, raw):
    busy = [(s, s + d) for s, d in raw]
    t = mac.medium_access_delay(BackoffState(1023, 0, slots), busy, 0.0)
    assert t >= MAC_TIMING.difs_s + slots * MAC_TIMING.slot_s - 1e-12
    for s, e in busy:
        assert not (s < t < e)
