import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wsnsync.imu import (
    ImuConfig,
    ImuModel,
    NoSampleYet,
    derived_trigger_ticks,
    imu_tick,
    interrupt_triggered_errors,
    oversampled_ages,
    triggered_read,
)
from wsnsync.timebase import PS_PER_MS, PS_PER_S, PS_PER_US


def mean_gap(cfg, n=2000, rng=None):
    model = ImuModel(cfg, rng)
    t, times = 0, []
    for _ in range(n):
        times.append(t)
        t = imu_tick(model, t)
    return float(np.mean(np.diff(times)))


def test_perfect_225_hz_period():
    cfg = ImuConfig(mismatch=0.0, jitter_hz=0.0)
    assert mean_gap(cfg) / PS_PER_MS == pytest.approx(4.444, abs=0.001)


def test_fast_clock_shortens_period():
    cfg = ImuConfig(mismatch=0.04, jitter_hz=0.0)
    assert mean_gap(cfg) / PS_PER_MS == pytest.approx(4.2735, abs=0.0005)


def test_hundred_hz_setting_runs_at_103_5():
    cfg = ImuConfig(rate_hz=100.0)
    gap = mean_gap(cfg, 20_000, np.random.default_rng(0))
    assert PS_PER_S / gap == pytest.approx(103.5, abs=0.05)


def test_jitter_is_clamped():
    cfg = ImuConfig(rate_hz=100.0)
    model = ImuModel(cfg, np.random.default_rng(1))
    rates = PS_PER_S / np.array([model.period() for _ in range(20_000)])
    assert rates.min() >= 103.5 * (1 - cfg.jitter_bound) - 1e-6
    assert rates.max() <= 103.5 * (1 + cfg.jitter_bound) + 1e-6


def test_read_returns_latest_buffered_sample():
    model = ImuModel(ImuConfig(jitter_hz=0.0))
    imu_tick(model, 10 * PS_PER_MS)
    read = triggered_read(model, 10 * PS_PER_MS + PS_PER_US)
    assert read.age == PS_PER_US


def test_read_before_first_sample_raises():
    with pytest.raises(NoSampleYet):
        triggered_read(ImuModel(), 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-0.1, 0.1))
def test_age_bounded_by_actual_period(seed, mismatch):
    cfg = ImuConfig(mismatch=mismatch)
    triggers = np.arange(1, 500) * (PS_PER_S // 100)
    ages = oversampled_ages(cfg, triggers, np.random.default_rng(seed))
    longest = PS_PER_S / (cfg.rate_hz * (1 + mismatch) * (1 - cfg.jitter_bound))
    assert ages.min() >= 0
    assert ages.max() <= longest + 1


def test_interrupt_triggered_error_grows():
    err = interrupt_triggered_errors(ImuConfig(rate_hz=100.0), 180_000, np.random.default_rng(2))
    assert abs(err[-1]) >= 30 * PS_PER_MS
    assert abs(err[-1]) > abs(err[1000])


@pytest.mark.parametrize("hz, ticks", [(2000.0, 8000), (100.0, 160_000), (1000.0, 16_000)])
def test_derived_trigger_ticks(hz, ticks):
    assert derived_trigger_ticks(hz) == ticks


def test_derived_trigger_rejects_fractional():
    with pytest.raises(ValueError):
        derived_trigger_ticks(3.0)
