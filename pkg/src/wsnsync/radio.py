"""Broadcast channel between the master and its peripherals."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .timebase import PS_PER_MS, PS_PER_NS, PS_PER_S, PS_PER_US, SimTime, TimerCapture

SPEED_OF_LIGHT = 2.998e8  # m/s

ADVERTISING = "advertising"
CONNECTION = "connection"


@dataclass(frozen=True)
class RadioConfig:
    phy_rate: float = 2e6
    tx_power_dbm: float = 4.0
    sync_payload_bytes: int = 12
    overhead_bytes: int = 10
    # address match fires at the end of the access-address field
    addr_match_bytes: int = 5
    distance_m: float = 10.0
    busy_loss_prob: float = 0.05
    access_mode: str = ADVERTISING
    access_base_us: float = 2.0
    access_jitter: bool = True
    access_min_us: float = 1.0
    access_max_us: float = 5.0
    network_id: int = 0x8E89BED6

    def __post_init__(self):
        if self.phy_rate <= 0:
            raise ValueError("phy_rate must be positive")
        if not 0 <= self.busy_loss_prob < 1:
            raise ValueError("busy_loss_prob must be in [0, 1)")
        if self.sync_payload_bytes < 0 or self.overhead_bytes < 0:
            raise ValueError("packet sizes must be non-negative")
        if not 0 <= self.addr_match_bytes <= self.overhead_bytes:
            raise ValueError("addr_match_bytes must lie within the overhead")
        if self.distance_m < 0:
            raise ValueError("distance_m must be non-negative")
        if self.access_mode not in (ADVERTISING, CONNECTION):
            raise ValueError(f"unknown access_mode {self.access_mode!r}")
        if not 0 <= self.access_min_us <= self.access_max_us:
            raise ValueError("access jitter range is empty")


@dataclass(frozen=True)
class SyncPacket:
    """Sync broadcast. Only ``seq``, the capture and the correction go on air as payload;
    ``network_id`` is the access address carried in the packet overhead."""

    seq: int
    master_capture: TimerCapture
    fixed_delay_correction: SimTime  # ps
    network_id: int = RadioConfig.network_id

    _LAYOUT = struct.Struct("<IIHH")

    def __post_init__(self):
        if self.fixed_delay_correction < 0:
            raise ValueError("fixed_delay_correction must be non-negative")

    def to_bytes(self) -> bytes:
        return self._LAYOUT.pack(
            self.seq & 0xFFFFFFFF,
            self.master_capture.coarse_ms,
            self.master_capture.fine_ticks,
            round(self.fixed_delay_correction / PS_PER_NS),
        )

    @classmethod
    def from_bytes(cls, raw: bytes, network_id: int = RadioConfig.network_id) -> "SyncPacket":
        seq, coarse, fine, corr_ns = cls._LAYOUT.unpack(raw)
        return cls(seq, TimerCapture(fine, coarse), corr_ns * PS_PER_NS, network_id)


@dataclass(frozen=True)
class Delivery:
    node: int
    at: SimTime


def _bits_time(nbytes: int, cfg: RadioConfig) -> SimTime:
    return round(8 * nbytes * PS_PER_S / cfg.phy_rate)


def transmission_time(cfg: RadioConfig) -> SimTime:
    return _bits_time(cfg.sync_payload_bytes + cfg.overhead_bytes, cfg)


def address_match_time(cfg: RadioConfig) -> SimTime:
    """Air time from the first transmitted bit until the receiver's address match."""
    return _bits_time(cfg.addr_match_bytes, cfg)


def propagation_delay(distance_m: float) -> SimTime:
    if distance_m < 0:
        raise ValueError("distance must be non-negative")
    return round(distance_m / SPEED_OF_LIGHT * PS_PER_S)


def advertising_access_time(rng: np.random.Generator | None, cfg: RadioConfig = RadioConfig()) -> SimTime:
    """Delay between the granted slot and the radio being ready."""
    if cfg.access_mode == CONNECTION:
        # connection events: 7.5 ms up to 4 s
        return round(rng.uniform(7.5 * PS_PER_MS, 4 * PS_PER_S))
    if not cfg.access_jitter or rng is None:
        return round(cfg.access_base_us * PS_PER_US)
    return round(rng.uniform(cfg.access_min_us, cfg.access_max_us) * PS_PER_US)


def broadcast_sync(pkt: SyncPacket, at: SimTime, listeners: Iterable[int], cfg: RadioConfig,
                   loss_rngs: Mapping[int, np.random.Generator] | None = None,
                   distances: Mapping[int, float] | None = None) -> list[Delivery]:
    """Address-match deliveries of a broadcast that starts on air at ``at``.

    Each listening peripheral is dropped independently with ``busy_loss_prob``
    using its own RNG stream; non-listeners receive nothing.
    """
    out = []
    air = address_match_time(cfg)
    for node in sorted(listeners):
        if cfg.busy_loss_prob > 0:
            if loss_rngs is None:
                raise ValueError("loss RNG streams required when busy_loss_prob > 0")
            if loss_rngs[node].random() < cfg.busy_loss_prob:
                continue
        d = cfg.distance_m if distances is None else distances.get(node, cfg.distance_m)
        out.append(Delivery(node, at + air + propagation_delay(d)))
    return out
