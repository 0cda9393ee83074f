"""Deterministic discrete-event core and the GPIO-probe measurement harness."""

from __future__ import annotations

import heapq
import json
import math
from fractions import Fraction
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from . import energy as en
from .imu import ImuModel, imu_tick, triggered_read
from .radio import RadioConfig, advertising_access_time, broadcast_sync, propagation_delay
from .scenario import NodeConfig, Scenario
from .stats import BoxStats, box_stats
from .sync import (
    ErrorBudget,
    MasterSyncState,
    PeripheralSyncState,
    RxMode,
    budget_breakdown,
    make_trace,
    master_emit_sync,
    peripheral_on_address_match,
    apply_compensation,
    rx_window_step,
)
from .timebase import (
    DEFAULT_TICK_PS,
    DEFAULT_WRAP,
    PS_PER_MS,
    PS_PER_S,
    COARSE_MODULUS,
    NodeClock,
    OscillatorModel,
    SimTime,
    SyncedTimer,
)

EVENT_KINDS = (
    "imu_sample",
    "sync_slot",
    "rx_window_open",
    "rx_timeout",
    "address_match",
    "compensation_boundary",
    "probe_edge",
    "report_tick",
)
_KIND_INDEX = {k: i for i, k in enumerate(EVENT_KINDS)}

_PURPOSES = {"walk": 1, "init": 2, "loss": 3, "access": 4, "traffic": 5, "imu": 6}

MASTER = 0


def rng_stream(seed: int, node: int, purpose: str) -> np.random.Generator:
    """Independent counter-based stream per (node, purpose)."""
    ss = np.random.SeedSequence(seed, spawn_key=(node, _PURPOSES[purpose]))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(order=True)
class Event:
    at: SimTime
    node: int
    kind_order: int
    seq: int
    kind: str = field(compare=False)
    payload: Any = field(compare=False, default=None)


class EventQueue:
    """Min-heap ordered by (time, node id, kind, insertion order)."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self.last_dispatched: SimTime = 0

    def push(self, at: SimTime, node: int, kind: str, payload: Any = None) -> None:
        if at < self.last_dispatched:
            raise ValueError(f"event {kind} at {at} scheduled in the past ({self.last_dispatched})")
        heapq.heappush(self._heap, (at, node, _KIND_INDEX[kind], self._seq, kind, payload))
        self._seq += 1

    def pop(self) -> Event:
        at, node, ko, seq, kind, payload = heapq.heappop(self._heap)
        self.last_dispatched = at
        return Event(at, node, ko, seq, kind, payload)

    def peek_time(self) -> Optional[SimTime]:
        return self._heap[0][0] if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)


class DataTraffic:
    """Seeded schedule of slots occupied by ordinary BLE data traffic.

    Busy flags are drawn in slot-index order, so the schedule is independent of
    the order in which it is queried.
    """

    def __init__(self, busy_fraction: float, slot_ps: SimTime, rng: np.random.Generator):
        self.busy_fraction = busy_fraction
        self.slot_ps = slot_ps
        self._rng = rng
        self._flags = np.zeros(0, dtype=bool)

    def busy(self, t: SimTime) -> bool:
        if self.busy_fraction <= 0:
            return False
        i = t // self.slot_ps
        if i >= len(self._flags):
            n = max(4096, i + 1 - len(self._flags))
            self._flags = np.concatenate([self._flags, self._rng.random(n) < self.busy_fraction])
        return bool(self._flags[i])


def timeslot_arbitrate(requests, traffic: DataTraffic) -> list[bool]:
    """Grant each requested slot start only if the data channel is free then."""
    return [not traffic.busy(t) for t in requests]


# --- probe harness -----------------------------------------------------------

@dataclass
class ProbeResult:
    master_edges: np.ndarray  # analyzer sample indices
    peripheral_edges: np.ndarray
    errors_ps: np.ndarray  # peripheral edge minus master edge
    dropouts: int
    sample_ps: float


def quantize(edges_ps, sample_rate_hz: float = 24e6) -> np.ndarray:
    """Index of the first analyzer sample at or after each edge."""
    e = np.asarray(edges_ps, dtype=np.int64)
    r = Fraction(sample_rate_hz).limit_denominator(10**6) / PS_PER_S
    # exact ceil(e * rate) in integers
    return -((-e * r.numerator) // r.denominator)


def probe_collect(master_edges_ps, peripheral_edges_ps, period_ps: SimTime = 10 * PS_PER_MS,
                  sample_rate_hz: float = 24e6) -> ProbeResult:
    """Pair quantized edges nearest-neighbour within half a probe period."""
    sample_ps = PS_PER_S / sample_rate_hz
    m = quantize(master_edges_ps, sample_rate_hz)
    p = quantize(peripheral_edges_ps, sample_rate_hz)
    if len(m) == 0 or len(p) == 0:
        return ProbeResult(m, p, np.zeros(0), len(m) + len(p), sample_ps)
    half = period_ps / 2 / sample_ps
    idx = np.searchsorted(m, p)
    left = np.clip(idx - 1, 0, len(m) - 1)
    right = np.clip(idx, 0, len(m) - 1)
    dl = np.abs(p - m[left])
    dr = np.abs(p - m[right])
    nearest = np.where(dr < dl, right, left)
    d = p - m[nearest]
    ok = np.abs(d) <= half
    # one peripheral edge per master edge: keep the closest
    order = np.lexsort((np.abs(d), nearest))
    first = np.ones(len(order), dtype=bool)
    first[1:] = nearest[order][1:] != nearest[order][:-1]
    keep = np.zeros(len(p), dtype=bool)
    keep[order[first]] = True
    keep &= ok
    paired = int(keep.sum())
    errors = d[keep].astype(np.float64) * sample_ps
    dropouts = (len(m) - paired) + (len(p) - paired)
    return ProbeResult(m, p, errors, dropouts, sample_ps)


def probe_edges(timer: SyncedTimer, start: SimTime, end: SimTime, period_ticks: int) -> np.ndarray:
    """True times of every probe toggle of a free-running timer in ``[start, end]``."""
    first = math.floor(timer.value(start)) // period_ticks + 1
    last = math.floor(timer.value(end)) // period_ticks
    return np.array([timer.time_of_value(k * period_ticks) for k in range(first, last + 1)], dtype=np.int64)


# --- report -------------------------------------------------------------------

@dataclass
class PeripheralReport:
    node: int
    errors_us: np.ndarray
    box: Optional[BoxStats]
    dropouts: int = 0
    syncs_received: int = 0
    packets_lost: int = 0
    not_listening: int = 0
    ignored: int = 0
    timeouts: int = 0
    windows_opened: int = 0
    windows_skipped: int = 0
    compensations: int = 0
    cold_joins: int = 0
    first_sync_ps: Optional[SimTime] = None
    max_residual_ticks: float = 0.0
    residuals_ticks: list = field(default_factory=list)
    offsets_ticks: list = field(default_factory=list)
    seqs: list = field(default_factory=list)
    sync_times_ps: list = field(default_factory=list)
    energy_mj: float = 0.0
    energy_mj_per_h: float = 0.0
    energy_consistent: bool = True
    imu_ages_us: np.ndarray = field(default_factory=lambda: np.zeros(0))
    imu_box: Optional[BoxStats] = None
    budgets: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "node": self.node,
            "box_us": self.box.as_dict() if self.box else None,
            "dropouts": self.dropouts,
            "syncs_received": self.syncs_received,
            "packets_lost": self.packets_lost,
            "not_listening": self.not_listening,
            "ignored": self.ignored,
            "timeouts": self.timeouts,
            "windows_opened": self.windows_opened,
            "windows_skipped": self.windows_skipped,
            "compensations": self.compensations,
            "cold_joins": self.cold_joins,
            "first_sync_ps": self.first_sync_ps,
            "max_residual_ticks": round(float(self.max_residual_ticks), 6),
            "energy_mJ": round(self.energy_mj, 9),
            "energy_mJ_per_h": round(self.energy_mj_per_h, 9),
            "imu_box_us": self.imu_box.as_dict() if self.imu_box else None,
            "budgets": len(self.budgets),
        }


@dataclass
class RunReport:
    seed: int
    duration_ps: SimTime
    window_interval_s: float
    utc_epoch_s: int
    emitted: int
    denied: int
    skipped: int
    peripherals: list
    trace: Optional[list] = None

    @property
    def errors_us(self) -> np.ndarray:
        if not self.peripherals:
            return np.zeros(0)
        return np.concatenate([p.errors_us for p in self.peripherals])

    @property
    def box(self) -> Optional[BoxStats]:
        e = self.errors_us
        return box_stats(e) if e.size else None

    @property
    def energy_mj(self) -> float:
        return sum(p.energy_mj for p in self.peripherals)

    def to_json(self) -> str:
        doc = {
            "seed": self.seed,
            "duration_ps": self.duration_ps,
            "window_interval_s": self.window_interval_s,
            "utc_epoch_s": self.utc_epoch_s,
            "emitted": self.emitted,
            "denied": self.denied,
            "skipped": self.skipped,
            "n_samples": int(self.errors_us.size),
            "box_us": self.box.as_dict() if self.box else None,
            "energy_mJ": round(self.energy_mj, 9),
            "peripherals": [p.summary() for p in self.peripherals],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in (self.trace or []))


# --- simulator ------------------------------------------------------------------

def _osc(cfg: NodeConfig) -> OscillatorModel:
    return OscillatorModel(cfg.nominal_hz, cfg.ppm_offset, cfg.instability, cfg.walk_bound_ppm, cfg.tolerance_ppm)


@dataclass
class _Peripheral:
    index: int
    state: PeripheralSyncState
    ledger: en.EnergyLedger
    report: PeripheralReport
    distance: float
    loss_rng: np.random.Generator
    imu: Optional[ImuModel] = None
    probe_gen: int = 0
    last_probe_value: int = -1
    probe_edges: list = field(default_factory=list)
    trig_gen: int = 0
    last_trig_value: int = -1
    timeout_gen: int = 0
    window_k: int = 0
    window_opened_at: Optional[SimTime] = None
    first_miss: Optional[SimTime] = None
    last_imu_age: SimTime = 0
    imu_ages: list = field(default_factory=list)
    pending: Any = None  # (emission, request, slot_start) of the packet being compensated


class Simulator:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None):
        scenario.validate(allow_empty=True)
        self.sc = scenario
        self.seed = scenario.seed if seed is None else seed
        self.horizon = round(scenario.duration_s * PS_PER_S)
        self.q = EventQueue()
        self.trace: Optional[list] = [] if scenario.trace else None
        s = scenario.sync
        self.radio: RadioConfig = scenario.radio
        self.pipeline = round(s.pipeline_delay_ns * 1000)
        self.interval = round(s.window_interval_s * PS_PER_S)
        self.probe_period_ticks = round(scenario.probe.period_ms * PS_PER_MS / DEFAULT_TICK_PS)

        mclock = NodeClock(_osc(scenario.master), rng_stream(self.seed, MASTER, "walk"))
        self.master = MasterSyncState(
            SyncedTimer(mclock), s.rate_hz, round(s.copy_delay_us * 10**6), self.pipeline,
            s.utc_epoch_s, self.radio,
        )
        self.access_rng = rng_stream(self.seed, MASTER, "access")
        self.traffic = DataTraffic(scenario.traffic.busy_fraction, round(scenario.traffic.slot_us * 10**6),
                                   rng_stream(self.seed, MASTER, "traffic"))
        self.emitted = 0
        self.denied = 0
        self.skipped = 0
        self.tx_pending = False
        self.master_probe_edges: list = []

        self.periph: dict[int, _Peripheral] = {}
        for i in range(1, scenario.n_peripherals + 1):
            cfg = scenario.peripheral_config(i)
            clock = NodeClock(_osc(cfg), rng_stream(self.seed, i, "walk"))
            range_ticks = COARSE_MODULUS * DEFAULT_WRAP
            if cfg.initial_offset_ms is None:
                init = int(rng_stream(self.seed, i, "init").integers(0, range_ticks))
            else:
                init = round(cfg.initial_offset_ms * DEFAULT_WRAP)
            state = PeripheralSyncState(
                SyncedTimer(clock, init), self.interval, round(s.rx_timeout_ms * PS_PER_MS),
                self.pipeline, self.radio.network_id,
            )
            ledger = en.EnergyLedger(scenario.energy.rx_packet_mj, scenario.energy.continuous_rx_mw)
            imu = None
            if scenario.imu.enabled:
                imu = ImuModel(scenario.imu, rng_stream(self.seed, i, "imu"))
            self.periph[i] = _Peripheral(
                i, state, ledger, PeripheralReport(i, np.zeros(0), None), self.radio.distance_m,
                rng_stream(self.seed, i, "loss"), imu,
            )

    # -- scheduling helpers
    def _push(self, at, node, kind, payload=None):
        if at <= self.horizon:
            self.q.push(at, node, kind, payload)

    def _log(self, ev: Event, info: str = "") -> None:
        if self.trace is not None:
            self.trace.append(f"{ev.at}\t{ev.node}\t{ev.kind}\t{info}")

    # -- run
    def run(self) -> RunReport:
        self._push(0, MASTER, "sync_slot", ("request", 0))
        if self.sc.probe.enabled:
            self._push(self.master.timer.time_of_value(self.probe_period_ticks), MASTER, "probe_edge",
                       (0, self.probe_period_ticks))
        for p in self.periph.values():
            # cold join: listen from t=0 in every mode
            if not p.state.continuous:
                p.window_opened_at = 0
                self._open_bookkeeping(p, 0)
                self._push(p.state.rx_timeout, p.index, "rx_timeout", p.timeout_gen)
                self._schedule_window(p)
            if p.imu is not None:
                phase = int(rng_stream(self.seed, p.index, "imu").integers(0, p.imu.period()))
                self._push(phase, p.index, "imu_sample")
        handlers = {
            "sync_slot": self._on_sync_slot,
            "address_match": self._on_address_match,
            "compensation_boundary": self._on_boundary,
            "rx_window_open": self._on_window_open,
            "rx_timeout": self._on_timeout,
            "probe_edge": self._on_probe,
            "imu_sample": self._on_imu,
            "report_tick": self._on_report_tick,
        }
        q = self.q
        while len(q):
            ev = q.pop()
            handlers[ev.kind](ev)
        return self._finish()

    # -- master
    def _on_sync_slot(self, ev: Event) -> None:
        phase = ev.payload[0]
        if phase == "request":
            k = ev.payload[1]
            granted = timeslot_arbitrate([ev.at], self.traffic)[0]
            if self.tx_pending:
                # previous slot still waiting for the radio (long access times)
                self.skipped += 1
                self._log(ev, "skipped: previous slot pending")
            elif granted:
                slot_start = ev.at + advertising_access_time(self.access_rng, self.radio)
                emission = master_emit_sync(self.master, slot_start)
                self.emitted += 1
                self.tx_pending = True
                self._log(ev, f"grant seq={emission.packet.seq}")
                self._push(emission.broadcast_at, MASTER, "sync_slot", ("tx", emission, ev.at, slot_start))
            else:
                self.denied += 1
                self._log(ev, "denied")
            nxt = self.master.timer.time_of_value(self.master.request_value(k + 1))
            self._push(nxt, MASTER, "sync_slot", ("request", k + 1))
            return
        _, emission, request, slot_start = ev.payload
        self.tx_pending = False
        listeners = [i for i, p in self.periph.items() if p.state.mode is RxMode.RX_LISTENING]
        loss_rngs = {i: self.periph[i].loss_rng for i in listeners}
        deliveries = broadcast_sync(emission.packet, ev.at, listeners, self.radio, loss_rngs)
        got = {d.node for d in deliveries}
        self._log(ev, f"tx seq={emission.packet.seq} listeners={len(listeners)} delivered={len(got)}")
        for i in listeners:
            if i not in got:
                p = self.periph[i]
                en.record(p.ledger, en.EnergyEvent("loss"))
                p.report.packets_lost += 1
                if p.first_miss is None:
                    p.first_miss = ev.at
        for d in deliveries:
            self._push(d.at, d.node, "address_match", (emission, request, slot_start))

    # -- peripheral
    def _on_address_match(self, ev: Event) -> None:
        p = self.periph[ev.node]
        st = p.state
        emission, request, slot_start = ev.payload
        if st.mode is not RxMode.RX_LISTENING:
            p.report.not_listening += 1
            self._log(ev, "not listening")
            return
        offset = peripheral_on_address_match(st, emission.packet, ev.at)
        if offset is None:
            p.report.ignored += 1
            self._log(ev, "ignored (foreign network or stale seq)")
            return
        self._log(ev, f"seq={emission.packet.seq} offset={offset}")
        rep = p.report
        rep.syncs_received += 1
        rep.offsets_ticks.append(offset)
        rep.seqs.append(emission.packet.seq)
        rep.sync_times_ps.append(ev.at)
        trace = make_trace(request, slot_start, emission, self.radio, propagation_delay(p.distance),
                           self.pipeline, p.last_imu_age)
        rep.budgets.append(budget_breakdown(trace))
        if not st.continuous:
            en.record(p.ledger, en.EnergyEvent("sync_rx"))
            if p.first_miss is not None:
                en.record(p.ledger, en.EnergyEvent("window_extension", ev.at - p.first_miss))
            p.timeout_gen += 1
            p.window_opened_at = None
            p.first_miss = None
        _, at = st.timer.next_boundary(ev.at + st.capture_pipeline_delay)
        self._push(max(at, ev.at), ev.node, "compensation_boundary", offset)

    def _on_boundary(self, ev: Event) -> None:
        p = self.periph[ev.node]
        st = p.state
        first = not st.synced
        was_cold = abs(ev.payload) > COARSE_MODULUS * DEFAULT_WRAP // 2
        apply_compensation(st, ev.payload, ev.at)
        residual = st.timer.value(ev.at) - self.master.timer.value(ev.at)
        rep = p.report
        rep.compensations += 1
        rep.cold_joins += int(was_cold)
        rep.residuals_ticks.append(residual)
        rep.max_residual_ticks = max(rep.max_residual_ticks, abs(residual))
        self._log(ev, f"offset={ev.payload} residual={residual:.3f}")
        if first:
            rep.first_sync_ps = ev.at
        rx_window_step(st, ev.at)
        # synchronized-clock outputs jump with the timer: reschedule them
        if self.sc.probe.enabled:
            p.probe_gen += 1
            self._schedule_probe(p, ev.at)
        if p.imu is not None:
            p.trig_gen += 1
            self._schedule_trigger(p, ev.at)

    def _schedule_window(self, p: _Peripheral) -> None:
        p.window_k += 1
        interval_ticks = self.interval * p.state.timer.clock.osc.nominal_hz / PS_PER_S
        at = p.state.timer.clock.time_at(p.window_k * interval_ticks)
        self._push(at, p.index, "rx_window_open", p.window_k)

    def _open_bookkeeping(self, p: _Peripheral, at: SimTime) -> None:
        en.record(p.ledger, en.EnergyEvent("window_open"))
        p.report.windows_opened += 1
        p.window_opened_at = at
        p.first_miss = None

    def _on_window_open(self, ev: Event) -> None:
        p = self.periph[ev.node]
        st = p.state
        self._schedule_window(p)
        if st.mode is not RxMode.RX_OFF:
            p.report.windows_skipped += 1
            self._log(ev, "skipped")
            return
        st.transition(RxMode.RX_LISTENING)
        self._open_bookkeeping(p, ev.at)
        p.timeout_gen += 1
        step = rx_window_step(st, ev.at)
        self._log(ev, f"window {ev.payload}")
        self._push(step.at, p.index, "rx_timeout", p.timeout_gen)

    def _on_timeout(self, ev: Event) -> None:
        p = self.periph[ev.node]
        if ev.payload != p.timeout_gen or p.state.mode is not RxMode.RX_LISTENING:
            return
        p.state.transition(RxMode.RX_OFF)
        start = p.first_miss if p.first_miss is not None else p.window_opened_at
        en.record(p.ledger, en.EnergyEvent("window_extension", ev.at - start))
        p.report.timeouts += 1
        p.window_opened_at = None
        p.first_miss = None
        self._log(ev, "timeout")

    # -- synchronized-clock outputs
    def _schedule_probe(self, p: _Peripheral, now: SimTime) -> None:
        period = self.probe_period_ticks
        cur = max(p.last_probe_value, math.floor(p.state.timer.value(now)))
        target = (cur // period + 1) * period
        self._push(p.state.timer.time_of_value(target), p.index, "probe_edge", (p.probe_gen, target))

    def _on_probe(self, ev: Event) -> None:
        gen, value = ev.payload
        if ev.node == MASTER:
            self.master_probe_edges.append(ev.at)
            nxt = value + self.probe_period_ticks
            self._push(self.master.timer.time_of_value(nxt), MASTER, "probe_edge", (0, nxt))
            return
        p = self.periph[ev.node]
        if gen != p.probe_gen:
            return
        p.probe_edges.append(ev.at)
        p.last_probe_value = value
        nxt = value + self.probe_period_ticks
        self._push(p.state.timer.time_of_value(nxt), p.index, "probe_edge", (gen, nxt))

    def _trigger_ticks(self) -> int:
        return round(PS_PER_S / DEFAULT_TICK_PS / self.sc.imu.trigger_hz)

    def _schedule_trigger(self, p: _Peripheral, now: SimTime) -> None:
        period = self._trigger_ticks()
        cur = max(p.last_trig_value, math.floor(p.state.timer.value(now)))
        target = (cur // period + 1) * period
        self._push(p.state.timer.time_of_value(target), p.index, "report_tick", (p.trig_gen, target))

    def _on_imu(self, ev: Event) -> None:
        p = self.periph[ev.node]
        self._push(imu_tick(p.imu, ev.at), ev.node, "imu_sample")

    def _on_report_tick(self, ev: Event) -> None:
        p = self.periph[ev.node]
        gen, value = ev.payload
        if gen != p.trig_gen:
            return
        p.last_trig_value = value
        if p.imu.buffer is not None:
            read = triggered_read(p.imu, ev.at)
            p.last_imu_age = read.age
            p.imu_ages.append(read.age)
        nxt = value + self._trigger_ticks()
        self._push(p.state.timer.time_of_value(nxt), p.index, "report_tick", (gen, nxt))

    # -- finish
    def _finish(self) -> RunReport:
        reports = []
        medges = np.asarray(self.master_probe_edges, dtype=np.int64)
        period_ps = self.sc.probe.period_ms * PS_PER_MS
        for p in self.periph.values():
            rep = p.report
            if p.state.continuous:
                en.record(p.ledger, en.EnergyEvent("rx_listen", self.horizon))
            elif p.window_opened_at is not None:
                start = p.first_miss if p.first_miss is not None else p.window_opened_at
                en.record(p.ledger, en.EnergyEvent("window_extension", self.horizon - start))
            rep.energy_mj = p.ledger.accumulated_mj
            rep.energy_mj_per_h = en.ledger_per_hour(p.ledger, self.horizon)
            rep.energy_consistent = p.ledger.accumulated_aj == sum(p.ledger.history)
            rep.cold_joins = max(rep.cold_joins, p.state.cold_joins)
            if self.sc.probe.enabled and p.probe_edges and rep.first_sync_ps is not None:
                m = medges[medges >= rep.first_sync_ps]
                res = probe_collect(m, np.asarray(p.probe_edges, dtype=np.int64), period_ps,
                                    self.sc.probe.sample_rate_hz)
                rep.errors_us = res.errors_ps / 1e6
                rep.dropouts = res.dropouts
                rep.box = box_stats(rep.errors_us) if rep.errors_us.size else None
            if p.imu_ages:
                rep.imu_ages_us = np.asarray(p.imu_ages, dtype=np.float64) / 1e6
                rep.imu_box = box_stats(rep.imu_ages_us)
            reports.append(rep)
        return RunReport(self.seed, self.horizon, self.sc.sync.window_interval_s, self.sc.sync.utc_epoch_s,
                         self.emitted, self.denied, self.skipped, reports, self.trace)


def run(scenario: Scenario, seed: Optional[int] = None) -> RunReport:
    """Simulate ``scenario`` to its horizon; identical (scenario, seed) gives identical output."""
    return Simulator(scenario, seed).run()


def with_window(scenario: Scenario, window_s: float) -> Scenario:
    return replace(scenario, sync=replace(scenario.sync, window_interval_s=float(window_s)))
