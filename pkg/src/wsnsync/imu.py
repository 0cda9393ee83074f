"""Oversampled IMU with its own drifting sample clock and a depth-1 buffer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .timebase import PS_PER_S, OscillatorModel, SimTime


@dataclass(frozen=True)
class ImuConfig:
    rate_hz: float = 225.0
    # fractional sample-clock mismatch; 0.035 reproduces 103.5 Hz at a 100 Hz setting
    mismatch: float = 0.035
    # short-term rate spread in Hz, quoted at the 100 Hz setting and scaled with rate
    jitter_hz: float = 2.0
    trigger_hz: float = 100.0
    oversampling: bool = True

    def __post_init__(self):
        if self.rate_hz <= 0 or self.trigger_hz <= 0:
            raise ValueError("IMU rates must be positive")
        if not -0.5 < self.mismatch < 0.5:
            raise ValueError("mismatch must be a fraction in (-0.5, 0.5)")
        if self.jitter_hz < 0:
            raise ValueError("jitter_hz must be non-negative")

    @property
    def clock(self) -> OscillatorModel:
        ppm = self.mismatch * 1e6
        return OscillatorModel(self.rate_hz, ppm, tolerance_ppm=max(10.0, abs(ppm)))

    @property
    def jitter_bound(self) -> float:
        """Clamp on the relative per-sample rate perturbation."""
        return self.jitter_hz / (100.0 * (1.0 + self.mismatch))


@dataclass(frozen=True)
class SampleRead:
    trigger_time: SimTime
    sample_time: SimTime

    @property
    def age(self) -> SimTime:
        return self.trigger_time - self.sample_time


class NoSampleYet(RuntimeError):
    pass


@dataclass
class ImuModel:
    config: ImuConfig = field(default_factory=ImuConfig)
    rng: Optional[np.random.Generator] = None
    buffer: Optional[SimTime] = None
    samples: int = 0

    def period(self) -> SimTime:
        """Next actual sample period: drifted nominal rate with clamped Gaussian jitter."""
        clk = self.config.clock
        rate = clk.nominal_hz * (1.0 + clk.ppm_offset * 1e-6)
        bound = self.config.jitter_bound
        if bound > 0 and self.rng is not None:
            rel = float(np.clip(self.rng.normal(0.0, bound / 2), -bound, bound))
            rate *= 1.0 + rel
        return round(PS_PER_S / rate)


def imu_tick(model: ImuModel, now: SimTime) -> SimTime:
    """Store a sample taken at ``now``; return when the next one is taken."""
    if model.buffer is not None and now < model.buffer:
        raise ValueError("IMU samples must be monotonic")
    model.buffer = now
    model.samples += 1
    return now + model.period()


def triggered_read(model: ImuModel, trigger_time: SimTime) -> SampleRead:
    if model.buffer is None:
        raise NoSampleYet("read before the first IMU sample")
    if trigger_time < model.buffer:
        raise ValueError("trigger precedes the buffered sample")
    return SampleRead(trigger_time, model.buffer)


def oversampled_ages(config: ImuConfig, trigger_times: np.ndarray, rng: np.random.Generator,
                     first_sample: SimTime = 0) -> np.ndarray:
    """Ages of the buffered sample at each (sorted) trigger time, without an event engine."""
    model = ImuModel(config, rng)
    t_next = first_sample
    ages = np.empty(len(trigger_times), dtype=np.int64)
    for i, trig in enumerate(trigger_times):
        while t_next <= trig:
            t_next = imu_tick(model, t_next)
        ages[i] = triggered_read(model, int(trig)).age
    return ages


def interrupt_triggered_errors(config: ImuConfig, n_packets: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Timestamp error (ps) when every IMU interrupt triggers a packet directly.

    Packet ``n`` is stamped ``n / rate_hz`` while the sample was actually taken
    on the drifting IMU clock, so the error accumulates without bound.
    """
    model = ImuModel(config, rng)
    true = np.empty(n_packets, dtype=np.int64)
    t = 0
    for i in range(n_packets):
        true[i] = t
        t += model.period()
    stamped = (np.arange(n_packets, dtype=np.int64) * round(PS_PER_S / config.rate_hz))
    return stamped - true


def derived_trigger_ticks(trigger_hz: float, tick_ps: int = 62_500) -> int:
    """Synchronized-timer ticks between derived triggers (e.g. 8000 for a 2 kHz EMG)."""
    ticks = PS_PER_S / tick_ps / trigger_hz
    if abs(ticks - round(ticks)) > 1e-9:
        raise ValueError(f"{trigger_hz} Hz is not an integer number of timer ticks")
    return round(ticks)
