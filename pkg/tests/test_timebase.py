import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wsnsync.timebase import (
    COARSE_MODULUS,
    PS_PER_MS,
    PS_PER_S,
    PS_PER_US,
    DriftWalk,
    DualTimerState,
    NodeClock,
    OscillatorModel,
    SyncedTimer,
    TimerCapture,
    advance_dual_timer,
    decode_dual_timer,
    local_elapsed,
    overflow_days,
    signed_tick_difference,
    theoretical_max_drift,
)


def per_us_oracle(osc, t0_us, t1_us, walk=None, chunk=10_000_000):
    """Rectangle-rule accumulation of the instantaneous tick rate, one microsecond at a time."""
    total = 0.0
    start = t0_us
    while start < t1_us:
        end = min(t1_us, start + chunk)
        if walk is None:
            total += float(np.sum(np.full(end - start, osc.nominal_hz * 1e-6 * (1 + osc.ppm_offset * 1e-6))))
            start = end
            continue
        us = np.arange(start, end, dtype=np.int64)
        seg = us * PS_PER_US // walk.step_ps
        ppm = np.array([walk.ppm(int(k)) for k in range(seg[0], seg[-1] + 1)])[seg - seg[0]]
        total += math.fsum(osc.nominal_hz * 1e-6 * (1 + ppm * 1e-6))
        start = end
    return total


def test_perfect_clock_one_second():
    assert local_elapsed(OscillatorModel(16e6), 0, PS_PER_S) == 16_000_000


def test_plus_ten_ppm_one_second():
    assert local_elapsed(OscillatorModel(16e6, 10.0), 0, PS_PER_S) == pytest.approx(16_000_160, abs=1e-6)


def test_minus_ten_ppm_thirty_minutes_against_brute_force():
    osc = OscillatorModel(16e6, -10.0)
    expected = 28_799_712_000  # 15 999 840 * 1800
    oracle = per_us_oracle(osc, 0, 1800 * 10**6)
    assert oracle == pytest.approx(expected, abs=1.0)
    assert local_elapsed(osc, 0, 1800 * PS_PER_S) == pytest.approx(expected, abs=1.0)


def test_walk_elapsed_matches_brute_force():
    osc = OscillatorModel(16e6, 3.0, instability=0.5, walk_bound_ppm=2.0)
    walk = DriftWalk(osc, np.random.default_rng(7))
    t1 = 12_345_678  # us
    assert local_elapsed(osc, 0, t1 * PS_PER_US, walk) == pytest.approx(per_us_oracle(osc, 0, t1, walk), abs=1.0)


def test_walk_is_clamped():
    osc = OscillatorModel(16e6, 0.0, instability=5.0, walk_bound_ppm=0.3)
    walk = DriftWalk(osc, np.random.default_rng(1))
    assert max(abs(walk.walk_ppm(k)) for k in range(2000)) <= 0.3


def test_ppm_beyond_tolerance_rejected():
    with pytest.raises(ValueError):
        OscillatorModel(16e6, 10.5)


def test_elapsed_rejects_reversed_interval():
    with pytest.raises(ValueError):
        local_elapsed(OscillatorModel(), 5, 4)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 3600 * PS_PER_S), st.integers(0, 3600 * PS_PER_S), st.integers(0, 3600 * PS_PER_S),
       st.floats(-10, 10), st.integers(0, 2**32 - 1))
def test_elapsed_additive(a, b, c, ppm, seed):
    t0, t1, t2 = sorted((a, b, c))
    osc = OscillatorModel(16e6, ppm, instability=0.05, walk_bound_ppm=0.5)
    walk = DriftWalk(osc, np.random.default_rng(seed))
    whole = local_elapsed(osc, t0, t2, walk)
    parts = local_elapsed(osc, t0, t1, walk) + local_elapsed(osc, t1, t2, walk)
    assert abs(whole - parts) <= 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 7200 * PS_PER_S), st.floats(-10, 10), st.integers(0, 1000))
def test_node_clock_inverse(t, ppm, seed):
    clk = NodeClock(OscillatorModel(16e6, ppm, 0.05, 0.5), np.random.default_rng(seed))
    ticks = clk.ticks_at(t)
    back = clk.time_at(ticks)
    assert clk.ticks_at(back) >= ticks
    assert back <= t


@pytest.mark.parametrize("start, n, expected", [
    ((15_999, 7), 1, (0, 8)),
    ((0, 0), 16_000_000, (0, 1000)),
    ((0, 2**32 - 1), 16_000, (0, 0)),
])
def test_advance_examples(start, n, expected):
    s = advance_dual_timer(DualTimerState(*start), n)
    assert (s.fine_ticks, s.coarse_ms) == expected


def test_overflow_period_is_49_71_days():
    assert round(2**32 / 86_400_000, 2) == 49.71
    assert advance_dual_timer(DualTimerState(0, COARSE_MODULUS - 1), 16_000).coarse_ms == 0
    assert round(overflow_days(), 2) == 49.71


@pytest.mark.parametrize("fine, coarse, ps", [
    (1600, 3, 3_100_000_000),
    (0, 0, 0),
    (8000, 100, 100_500_000_000),
])
def test_decode_examples(fine, coarse, ps):
    assert decode_dual_timer(TimerCapture(fine, coarse)) == ps


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 15_999), st.integers(0, 40_000))
def test_advance_composes(coarse, fine, n):
    s = DualTimerState(fine, coarse)
    step = s
    for _ in range(n % 300):
        step = advance_dual_timer(step, 1)
    assert step == advance_dual_timer(s, n % 300)
    assert 0 <= advance_dual_timer(s, n).fine_ticks < 16_000


def test_dual_timer_range_enforced():
    with pytest.raises(ValueError):
        DualTimerState(16_000, 0)
    with pytest.raises(ValueError):
        DualTimerState(0, 2**32)
    with pytest.raises(ValueError):
        advance_dual_timer(DualTimerState(), -1)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 49 * 86_400 * PS_PER_S // 62_500))
def test_perfect_clock_decodes_true_time(ticks):
    t = ticks * 62_500
    timer = SyncedTimer(NodeClock(OscillatorModel(16e6)))
    assert decode_dual_timer(timer.state_at(t)) == t


@pytest.mark.parametrize("interval_s, expected_us, marker_us", [
    (1.0, 20.0, 20.023148),
    (1 / 30, 0.6667, 0.667438),
    (300.0, 6000.0, 6006.944),
])
def test_theoretical_max_drift(interval_s, expected_us, marker_us):
    got = theoretical_max_drift(round(interval_s * PS_PER_S), 10, 10) / PS_PER_US
    assert got == pytest.approx(expected_us, rel=1e-3)
    # the reference markers sit ~0.12 % above the linear formula
    assert got == pytest.approx(marker_us, rel=2e-3)


@given(st.floats(0.001, 1e4), st.floats(0, 20), st.floats(0, 20), st.integers(1, 100))
def test_theoretical_max_linear_and_symmetric(interval_s, a, b, k):
    t = round(interval_s * PS_PER_S)
    assert theoretical_max_drift(t, a, b) == pytest.approx(theoretical_max_drift(t, b, a))
    assert theoretical_max_drift(t * k, a, b) == pytest.approx(k * theoretical_max_drift(t, a, b), rel=1e-12)


def test_signed_difference_wraps():
    r = COARSE_MODULUS * 16_000
    assert signed_tick_difference(5, r - 5, r) == 10
    assert signed_tick_difference(r - 5, 5, r) == -10
