import numpy as np
import pytest

from wsnsync.radio import (
    CONNECTION,
    RadioConfig,
    SyncPacket,
    address_match_time,
    advertising_access_time,
    broadcast_sync,
    propagation_delay,
    transmission_time,
)
from wsnsync.timebase import PS_PER_MS, PS_PER_S, PS_PER_US, TimerCapture


@pytest.mark.parametrize("payload, overhead, rate, us", [
    (0, 10, 2e6, 40.0),
    (12, 10, 2e6, 88.0),
    (12, 10, 1e6, 176.0),
])
def test_transmission_time(payload, overhead, rate, us):
    cfg = RadioConfig(phy_rate=rate, sync_payload_bytes=payload, overhead_bytes=overhead)
    assert transmission_time(cfg) == us * PS_PER_US


def test_default_packet_is_88_us():
    assert transmission_time(RadioConfig()) == 88 * PS_PER_US
    assert address_match_time(RadioConfig()) == 20 * PS_PER_US


def test_propagation_delay():
    ten = propagation_delay(10.0)
    assert ten / 1000 == pytest.approx(33.4, abs=0.1)
    assert ten / 1000 == pytest.approx(30.0, rel=0.15)  # the commonly quoted round value
    assert propagation_delay(0.0) == 0
    assert propagation_delay(1.0) / 1000 == pytest.approx(3.34, abs=0.01)
    with pytest.raises(ValueError):
        propagation_delay(-1)


def test_packet_wire_layout_roundtrip():
    pkt = SyncPacket(7, TimerCapture(1234, 99_999), 49 * PS_PER_US)
    raw = pkt.to_bytes()
    assert len(raw) == 12
    assert raw[:4] == (7).to_bytes(4, "little")
    back = SyncPacket.from_bytes(raw)
    assert (back.seq, back.master_capture.fine_ticks, back.master_capture.coarse_ms) == (7, 1234, 99_999)
    assert back.fixed_delay_correction == 49 * PS_PER_US


def _rngs(nodes, seed=0):
    return {n: np.random.default_rng([seed, n]) for n in nodes}


def test_broadcast_to_all_listeners():
    cfg = RadioConfig(busy_loss_prob=0.0)
    out = broadcast_sync(None, 1000, [1, 2], cfg)
    assert [d.node for d in out] == [1, 2]
    assert all(d.at > 1000 for d in out)


def test_broadcast_skips_non_listeners():
    cfg = RadioConfig(busy_loss_prob=0.0)
    out = broadcast_sync(None, 0, [2], cfg)
    assert [d.node for d in out] == [2]


def test_broadcast_loss_rate_binomial_band():
    cfg = RadioConfig(busy_loss_prob=0.1)
    rngs = _rngs([1], seed=42)
    got = sum(len(broadcast_sync(None, i, [1], cfg, rngs)) for i in range(10_000))
    assert 9000 - 90 <= got <= 9000 + 90


def test_access_time_contracts():
    rng = np.random.default_rng(3)
    assert advertising_access_time(rng, RadioConfig(access_jitter=False)) == 2 * PS_PER_US
    draws = np.array([advertising_access_time(rng, RadioConfig()) for _ in range(100_000)])
    assert draws.min() >= 1 * PS_PER_US and draws.max() <= 5 * PS_PER_US
    conn = [advertising_access_time(rng, RadioConfig(access_mode=CONNECTION)) for _ in range(2000)]
    assert min(conn) >= 7.5 * PS_PER_MS and max(conn) <= 4 * PS_PER_S


@pytest.mark.parametrize("kwargs", [
    dict(phy_rate=0), dict(busy_loss_prob=1.0), dict(busy_loss_prob=-0.1), dict(distance_m=-1),
    dict(access_mode="bogus"), dict(addr_match_bytes=11),
])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        RadioConfig(**kwargs)
