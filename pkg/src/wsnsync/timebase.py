"""Oscillator drift and the dual-timer timekeeping structure.

All true time is integer picoseconds (``SimTime`` is a plain ``int``). A node's
oscillator converts true time into real-valued local ticks; the synchronized
timer of a node is that tick count plus an integer adjustment, split into a
fine counter (``wrap`` ticks per cycle) and a 32-bit coarse counter.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

PS_PER_S = 10**12
PS_PER_MS = 10**9
PS_PER_US = 10**6
PS_PER_NS = 10**3

DEFAULT_WRAP = 16_000
DEFAULT_TICK_PS = 62_500  # 62.5 ns, one cycle of a 16 MHz timer
COARSE_MODULUS = 2**32
MS_PER_DAY = 86_400_000

SimTime = int


def seconds(s: float) -> SimTime:
    return int(round(s * PS_PER_S))


def to_us(ps: float) -> float:
    return ps / PS_PER_US


@dataclass(frozen=True)
class OscillatorModel:
    """An imperfect clock source.

    ``instability`` is the std-dev of the ppm random walk per square-root
    second; the accumulated walk is clamped to ``walk_bound_ppm``.
    """

    nominal_hz: float = 16e6
    ppm_offset: float = 0.0
    instability: float = 0.0
    walk_bound_ppm: float = 0.0
    tolerance_ppm: float = 10.0

    def __post_init__(self):
        if self.nominal_hz <= 0:
            raise ValueError(f"nominal_hz must be positive, got {self.nominal_hz}")
        if abs(self.ppm_offset) > self.tolerance_ppm:
            raise ValueError(
                f"ppm_offset {self.ppm_offset} exceeds crystal tolerance ±{self.tolerance_ppm} ppm"
            )
        if self.instability < 0 or self.walk_bound_ppm < 0:
            raise ValueError("instability and walk_bound_ppm must be non-negative")

    @property
    def has_walk(self) -> bool:
        return self.instability > 0 and self.walk_bound_ppm > 0


# The 32.768 kHz low-power source: ~30.5 us ticks, 33 ticks per coarse increment.
LFCLK_PRESET = dict(nominal_hz=32_768.0, tolerance_ppm=20.0)
LFCLK_TICK_PS = 30_517_578


class DriftWalk:
    """Seeded, clamped Gaussian random walk on ppm.

    The walk is piecewise constant on a fixed true-time grid of ``step_ps`` so
    that a realization does not depend on when it is queried. Segment ``k``
    covers ``[k*step_ps, (k+1)*step_ps)``.
    """

    def __init__(self, osc: OscillatorModel, rng: np.random.Generator | None = None,
                 step_ps: int = PS_PER_S):
        self.osc = osc
        self.step_ps = step_ps
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._walk = [0.0]
        self._sigma = osc.instability * math.sqrt(step_ps / PS_PER_S)

    def _extend(self, k: int) -> None:
        while len(self._walk) <= k:
            n = max(64, k + 1 - len(self._walk))
            steps = self._rng.normal(0.0, self._sigma, n)
            w = self._walk[-1]
            bound = self.osc.walk_bound_ppm
            for s in steps:
                w = min(bound, max(-bound, w + s))
                self._walk.append(w)

    def walk_ppm(self, k: int) -> float:
        """Accumulated walk (ppm) during segment ``k``."""
        if not self.osc.has_walk:
            return 0.0
        self._extend(k)
        return self._walk[k]

    def ppm(self, k: int) -> float:
        return self.osc.ppm_offset + self.walk_ppm(k)


def _rate_per_ps(osc: OscillatorModel, ppm: float) -> float:
    return osc.nominal_hz * (1.0 + ppm * 1e-6) / PS_PER_S


def _scaled(dt: int, nominal, ppm: float) -> float:
    # int * int / int is correctly rounded, so a 0 ppm clock is exact
    base = dt * nominal / PS_PER_S
    return base + base * ppm * 1e-6


def local_elapsed(osc: OscillatorModel, t0: SimTime, t1: SimTime, walk: DriftWalk | None = None) -> float:
    """Local ticks counted by ``osc`` over true interval ``[t0, t1]``."""
    if t1 < t0:
        raise ValueError(f"t1 ({t1}) precedes t0 ({t0})")
    if walk is None or not osc.has_walk:
        nominal = int(osc.nominal_hz) if float(osc.nominal_hz).is_integer() else osc.nominal_hz
        return _scaled(t1 - t0, nominal, osc.ppm_offset)
    step = walk.step_ps
    total = 0.0
    t = t0
    while t < t1:
        k = t // step
        seg_end = min(t1, (k + 1) * step)
        total += (seg_end - t) * _rate_per_ps(osc, walk.ppm(k))
        t = seg_end
    return total


class NodeClock:
    """Cumulative tick count of one oscillator since true time 0, with inverse.

    Cumulative ticks at every walk-grid point are cached so ``ticks_at`` and
    ``time_at`` are O(log n).
    """

    def __init__(self, osc: OscillatorModel, rng: np.random.Generator | None = None,
                 step_ps: int = PS_PER_S):
        self.osc = osc
        self.walk = DriftWalk(osc, rng, step_ps) if osc.has_walk else None
        self.step_ps = step_ps
        self._cum = [0.0]  # ticks at k*step_ps
        self._rates: list[float] = []  # ticks per ps during segment k
        self._rate0 = _rate_per_ps(osc, osc.ppm_offset)
        self._nominal = int(osc.nominal_hz) if float(osc.nominal_hz).is_integer() else osc.nominal_hz

    def _grow(self, k: int) -> None:
        cum, rates = self._cum, self._rates
        while len(cum) <= k + 1:
            j = len(rates)
            rates.append(_rate_per_ps(self.osc, self.walk.ppm(j)))
            cum.append(cum[j] + self.step_ps * rates[j])

    def _rate(self, k: int) -> float:
        if self.walk is None:
            return self._rate0
        if k >= len(self._rates):
            self._grow(k)
        return self._rates[k]

    def ppm_at(self, t: SimTime) -> float:
        if self.walk is None:
            return self.osc.ppm_offset
        return self.walk.ppm(t // self.step_ps)

    def ticks_at(self, t: SimTime) -> float:
        if self.walk is None:
            return _scaled(t, self._nominal, self.osc.ppm_offset)
        k = t // self.step_ps
        if k >= len(self._rates):
            self._grow(k)
        return self._cum[k] + (t - k * self.step_ps) * self._rates[k]

    def time_at(self, ticks: float) -> SimTime:
        """Earliest integer true time at which the clock has counted ``ticks``."""
        if ticks <= 0:
            return 0
        if self.walk is None:
            t = math.ceil(ticks / self._rate0)
        else:
            while self._cum[-1] < ticks:
                self._grow(len(self._cum) + 63)
            k = bisect.bisect_right(self._cum, ticks) - 1
            t = k * self.step_ps + math.ceil((ticks - self._cum[k]) / self._rates[k])
        while self.ticks_at(t) < ticks:
            t += 1
        while t > 0 and self.ticks_at(t - 1) >= ticks:
            t -= 1
        return t


@dataclass(frozen=True)
class DualTimerState:
    """Fine tick counter that wraps every ``wrap`` ticks into a 32-bit coarse counter."""

    fine_ticks: int = 0
    coarse_ms: int = 0
    wrap: int = DEFAULT_WRAP
    tick_ps: int = DEFAULT_TICK_PS

    def __post_init__(self):
        if not 0 <= self.fine_ticks < self.wrap:
            raise ValueError(f"fine_ticks {self.fine_ticks} outside [0, {self.wrap})")
        if not 0 <= self.coarse_ms < COARSE_MODULUS:
            raise ValueError(f"coarse_ms {self.coarse_ms} outside 32-bit range")

    @property
    def total_ticks(self) -> int:
        return self.coarse_ms * self.wrap + self.fine_ticks

    @property
    def range_ticks(self) -> int:
        return COARSE_MODULUS * self.wrap

    @classmethod
    def from_total(cls, total: int, wrap: int = DEFAULT_WRAP, tick_ps: int = DEFAULT_TICK_PS) -> "DualTimerState":
        total %= COARSE_MODULUS * wrap
        coarse, fine = divmod(total, wrap)
        return cls(fine, coarse, wrap, tick_ps)


@dataclass(frozen=True)
class TimerCapture:
    fine_ticks: int
    coarse_ms: int
    captured_at: SimTime = field(default=-1, compare=False)  # oracle use only
    wrap: int = DEFAULT_WRAP
    tick_ps: int = DEFAULT_TICK_PS

    @property
    def total_ticks(self) -> int:
        return self.coarse_ms * self.wrap + self.fine_ticks

    @classmethod
    def of(cls, state: DualTimerState, at: SimTime = -1) -> "TimerCapture":
        return cls(state.fine_ticks, state.coarse_ms, at, state.wrap, state.tick_ps)


def advance_dual_timer(state: DualTimerState, elapsed_ticks: int) -> DualTimerState:
    if elapsed_ticks < 0:
        raise ValueError("elapsed_ticks must be non-negative")
    return DualTimerState.from_total(state.total_ticks + elapsed_ticks, state.wrap, state.tick_ps)


def decode_dual_timer(c: TimerCapture | DualTimerState) -> SimTime:
    """Duration since the node epoch in picoseconds."""
    return c.coarse_ms * c.wrap * c.tick_ps + c.fine_ticks * c.tick_ps


def signed_tick_difference(a: int, b: int, range_ticks: int = COARSE_MODULUS * DEFAULT_WRAP) -> int:
    """``a - b`` reduced into ``[-range/2, range/2)``."""
    half = range_ticks // 2
    return (a - b + half) % range_ticks - half


def theoretical_max_drift(interval_ps: SimTime, ppm_a: float, ppm_b: float) -> float:
    """Worst-case accumulated error (ps) between two free-running clocks."""
    return (ppm_a + ppm_b) * 1e-6 * interval_ps


def overflow_days(wrap: int = DEFAULT_WRAP, tick_ps: int = DEFAULT_TICK_PS) -> float:
    return COARSE_MODULUS * wrap * tick_ps / PS_PER_MS / MS_PER_DAY


class SyncedTimer:
    """A node's synchronized dual timer: oscillator ticks plus an integer adjustment.

    ``adjust`` is changed only by compensation; between compensations the
    timer runs freely with its oscillator.
    """

    def __init__(self, clock: NodeClock, adjust: int = 0, wrap: int = DEFAULT_WRAP,
                 tick_ps: int = DEFAULT_TICK_PS):
        self.clock = clock
        self.adjust = adjust
        self.wrap = wrap
        self.tick_ps = tick_ps

    def value(self, t: SimTime) -> float:
        """Continuous (unfloored) timer value in ticks, unwrapped."""
        return self.clock.ticks_at(t) + self.adjust

    def total_at(self, t: SimTime) -> int:
        return math.floor(self.value(t))

    def state_at(self, t: SimTime) -> DualTimerState:
        return DualTimerState.from_total(self.total_at(t), self.wrap, self.tick_ps)

    def capture(self, t: SimTime) -> TimerCapture:
        return TimerCapture.of(self.state_at(t), t)

    def time_of_value(self, value: float) -> SimTime:
        """Earliest true time at which the unwrapped timer reaches ``value``."""
        return self.clock.time_at(value - self.adjust)

    def next_boundary(self, t: SimTime, period_ticks: int | None = None) -> tuple[int, SimTime]:
        """Next multiple of ``period_ticks`` strictly after the value at ``t``."""
        p = period_ticks or self.wrap
        target = (math.floor(self.value(t)) // p + 1) * p
        return target, self.time_of_value(target)
