"""Master timestamping, peripheral MAC-layer capture and offset compensation.

Simplified FTSP without skew estimation: a peripheral only corrects its phase
when a sync packet arrives, and runs freely in between.
"""

from __future__ import annotations

import enum
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Optional

from .radio import RadioConfig, SyncPacket, address_match_time, transmission_time
from .timebase import (
    COARSE_MODULUS,
    DEFAULT_TICK_PS,
    PS_PER_MS,
    PS_PER_S,
    PS_PER_US,
    DualTimerState,
    SimTime,
    SyncedTimer,
    TimerCapture,
    signed_tick_difference,
)


class RxMode(enum.Enum):
    RX_OFF = "rx_off"
    RX_LISTENING = "rx_listening"
    COMPENSATING = "compensating"


_ALLOWED = {
    (RxMode.RX_OFF, RxMode.RX_LISTENING),
    (RxMode.RX_LISTENING, RxMode.COMPENSATING),
    (RxMode.RX_LISTENING, RxMode.RX_OFF),
    (RxMode.COMPENSATING, RxMode.RX_OFF),
}


class ProtocolError(RuntimeError):
    pass


@dataclass
class MasterSyncState:
    timer: SyncedTimer
    sync_rate_hz: float = 30.0
    copy_delay: SimTime = 29 * PS_PER_US
    capture_pipeline_delay: SimTime = DEFAULT_TICK_PS
    utc_epoch_s: int = 0
    radio: RadioConfig = field(default_factory=RadioConfig)
    seq: int = 0

    @property
    def fixed_delay_correction(self) -> SimTime:
        # Both captures pass through the same one-cycle pipeline, so it cancels.
        return self.copy_delay + address_match_time(self.radio)

    def request_value(self, k: int) -> int:
        """Timer value (ticks) at which the ``k``-th sync slot is requested."""
        ticks_per_s = Fraction(PS_PER_S, self.timer.tick_ps)
        return int(k * ticks_per_s / Fraction(self.sync_rate_hz).limit_denominator(10**6))


@dataclass(frozen=True)
class Emission:
    packet: SyncPacket
    capture_at: SimTime
    broadcast_at: SimTime


def master_emit_sync(state: MasterSyncState, slot_start: SimTime) -> Emission:
    """Capture the master timer at the radio-ready instant and build the packet.

    The radio starts transmitting ``copy_delay`` after the slot start, once the
    CPU has copied the captured registers into the packet.
    """
    capture_at = slot_start + state.capture_pipeline_delay
    capture = state.timer.capture(capture_at)
    pkt = SyncPacket(state.seq, capture, state.fixed_delay_correction, state.radio.network_id)
    state.seq = (state.seq + 1) & 0xFFFFFFFF
    return Emission(pkt, capture_at, slot_start + state.copy_delay)


@dataclass
class PeripheralSyncState:
    timer: SyncedTimer
    rx_window_interval: SimTime = 0
    rx_timeout: SimTime = 100 * PS_PER_MS
    capture_pipeline_delay: SimTime = DEFAULT_TICK_PS
    network_id: int = RadioConfig.network_id
    mode: RxMode = RxMode.RX_LISTENING
    last_offset_ticks: int = 0
    pending_offset: Optional[int] = None
    last_seq: Optional[int] = None
    synced: bool = False
    cold_joins: int = 0

    def transition(self, new: RxMode) -> None:
        if (self.mode, new) not in _ALLOWED:
            raise ProtocolError(f"illegal transition {self.mode.name} -> {new.name}")
        self.mode = new

    @property
    def continuous(self) -> bool:
        return self.rx_window_interval == 0


def expected_master_ticks(pkt: SyncPacket) -> float:
    """Master timer value (ticks) at the peripheral capture, as the packet implies."""
    c = pkt.master_capture
    return c.total_ticks + pkt.fixed_delay_correction / c.tick_ps


def peripheral_on_address_match(state: PeripheralSyncState, pkt: SyncPacket,
                                match_true_time: SimTime) -> Optional[int]:
    """Capture the local timer at address match and compute the offset in ticks.

    Positive offset means the peripheral is ahead of the master. Returns
    ``None`` (and stays listening) for a packet of another network or a stale
    sequence number.
    """
    if state.mode is not RxMode.RX_LISTENING:
        raise ProtocolError(f"address match while {state.mode.name}")
    if pkt.network_id != state.network_id:
        return None
    if state.last_seq is not None and pkt.seq <= state.last_seq:
        return None
    local = state.timer.capture(match_true_time + state.capture_pipeline_delay)
    master = round(expected_master_ticks(pkt))
    range_ticks = 2**32 * local.wrap
    raw = local.total_ticks - master
    offset = signed_tick_difference(local.total_ticks, master, range_ticks)
    if abs(raw) > range_ticks // 2:
        # cold join: more than half the coarse range apart, take the packet value
        state.cold_joins += 1
    state.last_seq = pkt.seq
    state.pending_offset = offset
    state.transition(RxMode.COMPENSATING)
    return offset


def apply_compensation(state: PeripheralSyncState, offset_ticks: int, at: SimTime) -> DualTimerState:
    """Apply ``offset_ticks`` at the fine-cycle boundary reached at true time ``at``.

    Net effect on the unwrapped timer value is ``-offset`` (see ``cut_cycle_plan``
    for the split into fine and coarse parts). Returns the timer just after.
    """
    if state.mode is not RxMode.COMPENSATING:
        raise ProtocolError(f"compensation while {state.mode.name}")
    timer = state.timer
    timer.adjust -= offset_ticks
    # keep the unwrapped value inside one timer range, as the hardware register is
    range_ticks = COARSE_MODULUS * timer.wrap
    timer.adjust -= (math.floor(timer.value(at)) // range_ticks) * range_ticks
    state.last_offset_ticks = offset_ticks
    state.pending_offset = None
    state.synced = True
    state.transition(RxMode.RX_OFF)
    return DualTimerState.from_total(round(timer.value(at)), timer.wrap, timer.tick_ps)


def cut_cycle_plan(offset_ticks: int, wrap: int = 16_000) -> tuple[int, int]:
    """(ticks removed from the current fine cycle, coarse increments) realizing ``-offset``.

    Behind the master (negative offset) the coarse counter gains the whole
    milliseconds; ahead, the cut cycle skips the increment.
    """
    coarse, fine = divmod(-offset_ticks, wrap)
    return fine, coarse


@dataclass(frozen=True)
class WindowStep:
    mode: RxMode
    next_kind: Optional[str]  # "rx_window_open" | "rx_timeout" | None
    at: Optional[SimTime]


def rx_window_step(state: PeripheralSyncState, now: SimTime,
                   next_open: Optional[SimTime] = None) -> WindowStep:
    """Advance the receive-window state machine from ``now``.

    ``next_open`` is the next periodic window instant (true time) computed by
    the caller from the local interval timer; continuous mode ignores it.
    """
    if state.mode is RxMode.COMPENSATING:
        return WindowStep(state.mode, None, None)
    if state.continuous:
        if state.mode is RxMode.RX_OFF:
            state.transition(RxMode.RX_LISTENING)
        return WindowStep(state.mode, None, None)
    if state.mode is RxMode.RX_OFF:
        at = next_open if next_open is not None else now + state.rx_window_interval
        return WindowStep(state.mode, "rx_window_open", at)
    return WindowStep(state.mode, "rx_timeout", now + state.rx_timeout)


@dataclass(frozen=True)
class ErrorBudget:
    t_s: SimTime
    t_a: SimTime
    t_tx: SimTime
    t_p: SimTime
    t_r: SimTime
    t_imu: SimTime
    tau: SimTime


@dataclass
class TransactionTrace:
    """True-time landmarks of one sync transaction at one peripheral."""

    request: Optional[SimTime] = None
    slot_start: Optional[SimTime] = None
    tx_start: Optional[SimTime] = None
    tx_end: Optional[SimTime] = None
    arrival: Optional[SimTime] = None
    processed: Optional[SimTime] = None
    imu_age: SimTime = 0


def budget_breakdown(trace: TransactionTrace) -> ErrorBudget:
    points = (trace.request, trace.slot_start, trace.tx_start, trace.tx_end, trace.arrival, trace.processed)
    if any(p is None for p in points):
        raise ValueError("incomplete transaction trace")
    r, s, b, e, a, p = points
    if not r <= s <= b <= e <= a <= p:
        raise ValueError("transaction landmarks out of order")
    t_a, t_s, t_tx, t_p, t_r = s - r, b - s, e - b, a - e, p - a
    t_imu = trace.imu_age
    return ErrorBudget(t_s, t_a, t_tx, t_p, t_r, t_imu, t_s + t_a + t_tx + t_p + t_r + t_imu)


def make_trace(request: SimTime, slot_start: SimTime, emission: Emission, cfg: RadioConfig,
               propagation: SimTime, reception_delay: SimTime, imu_age: SimTime = 0) -> TransactionTrace:
    tx_end = emission.broadcast_at + transmission_time(cfg)
    arrival = tx_end + propagation
    return TransactionTrace(request, slot_start, emission.broadcast_at, tx_end, arrival,
                            arrival + reception_delay, imu_age)
