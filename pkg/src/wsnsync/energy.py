"""Peripheral-side energy spent on synchronization.

Totals are kept as integer attojoules so the ledger sum is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .timebase import PS_PER_S, SimTime

AJ_PER_MJ = 10**15  # attojoules per millijoule

# Measured extra energy per hour of operation, by receive-window interval in seconds.
TABLE_I_MJ = {0: 74_844, 1: 12_016, 5: 2_401, 10: 1_202, 20: 597, 60: 198, 300: 40}

EVENT_KINDS = ("sync_rx", "rx_listen", "window_extension", "loss", "window_open")


@dataclass(frozen=True)
class EnergyEvent:
    kind: str
    duration: SimTime = 0  # ps, for time-proportional kinds


@dataclass
class EnergyLedger:
    rx_packet_mj: float = 3.34
    # 74 844 mJ over one hour of continuous reception
    continuous_rx_mw: float = 20.79
    accumulated_aj: int = 0
    packets_received: int = 0
    packets_lost: int = 0
    windows_opened: int = 0
    window_open_time: SimTime = 0
    extension_time: SimTime = 0
    listen_time: SimTime = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def packet_aj(self) -> int:
        return round(self.rx_packet_mj * AJ_PER_MJ)

    @property
    def power_nw(self) -> int:
        return round(self.continuous_rx_mw * 10**6)

    def time_cost_aj(self, duration: SimTime) -> int:
        # nW * ps = 1e-21 J; scale to aJ (1e-18 J) with exact integer rounding
        return (self.power_nw * duration + 500) // 1000

    @property
    def accumulated_mj(self) -> float:
        return self.accumulated_aj / AJ_PER_MJ


def event_cost_aj(ledger: EnergyLedger, event: EnergyEvent) -> int:
    if event.kind == "sync_rx":
        return ledger.packet_aj
    if event.kind in ("rx_listen", "window_extension"):
        if event.duration < 0:
            raise ValueError("negative duration")
        return ledger.time_cost_aj(event.duration)
    if event.kind in ("loss", "window_open"):
        return 0
    raise ValueError(f"unknown energy event kind {event.kind!r}; expected one of {EVENT_KINDS}")


def record(ledger: EnergyLedger, event: EnergyEvent) -> EnergyLedger:
    cost = event_cost_aj(ledger, event)
    ledger.accumulated_aj += cost
    if event.kind == "sync_rx":
        ledger.packets_received += 1
    elif event.kind == "rx_listen":
        ledger.listen_time += event.duration
    elif event.kind == "window_extension":
        ledger.extension_time += event.duration
    elif event.kind == "loss":
        ledger.packets_lost += 1
    elif event.kind == "window_open":
        ledger.windows_opened += 1
    ledger.history.append(cost)
    return ledger


def per_hour(window_interval_s: float, rx_packet_mj: float = 3.34, continuous_rx_mw: float = 20.79,
             extension_s_per_window: float = 0.0) -> float:
    """Closed-form extra energy per hour (mJ); interval 0 means continuous reception."""
    if window_interval_s < 0 or window_interval_s > 3600:
        raise ValueError("window interval must be 0 or in (0, 3600] s")
    if window_interval_s == 0:
        return continuous_rx_mw * 3600.0
    windows = 3600.0 / window_interval_s
    return windows * (rx_packet_mj + extension_s_per_window * continuous_rx_mw)


def ledger_per_hour(ledger: EnergyLedger, horizon: SimTime) -> float:
    return ledger.accumulated_mj * 3600 * PS_PER_S / horizon if horizon else 0.0
