"""Scenario files: line-based ``key = value`` with dotted sections.

    # comment
    duration_s = 1800
    sync.window_interval_s = 60
    radio.busy_loss_prob = 0.0
    peripheral.ppm_offset = -3.6      # default for every peripheral
    peripheral.2.ppm_offset = 5.0     # override for peripheral 2

A ``[section]`` header line prefixes the following keys with ``section.``.
Unspecified keys take the defaults below.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .imu import ImuConfig
from .radio import RadioConfig

MAX_PERIPHERALS = 8
PAPER_WINDOWS = (0.0, 1.0, 5.0, 10.0, 20.0, 60.0, 300.0)


class ScenarioError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class NodeConfig:
    nominal_hz: float = 16e6
    ppm_offset: float = 0.0
    instability: float = 0.02  # ppm per sqrt(s)
    walk_bound_ppm: float = 0.5
    tolerance_ppm: float = 10.0
    # peripherals only; none draws a uniform initial phase over the whole timer range
    initial_offset_ms: Optional[float] = None

    def __post_init__(self):
        if self.nominal_hz <= 0:
            raise ValueError("nominal_hz must be positive")
        if abs(self.ppm_offset) > self.tolerance_ppm:
            raise ValueError(f"|ppm_offset| must be <= tolerance_ppm ({self.tolerance_ppm})")
        if self.instability < 0 or self.walk_bound_ppm < 0:
            raise ValueError("instability and walk_bound_ppm must be >= 0")


@dataclass(frozen=True)
class SyncConfig:
    rate_hz: float = 30.0
    copy_delay_us: float = 29.0
    pipeline_delay_ns: float = 62.5
    window_interval_s: float = 0.0
    rx_timeout_ms: float = 100.0
    utc_epoch_s: int = 0
    windows: tuple = PAPER_WINDOWS

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be > 0")
        if self.copy_delay_us < 0 or self.pipeline_delay_ns < 0:
            raise ValueError("delays must be >= 0")
        if self.window_interval_s < 0 or self.window_interval_s > 3600:
            raise ValueError("window_interval_s must be 0 (continuous) or in (0, 3600]")
        if self.rx_timeout_ms <= 0:
            raise ValueError("rx_timeout_ms must be > 0")
        if any(w < 0 or w > 3600 for w in self.windows):
            raise ValueError("every window must be 0 or in (0, 3600]")


@dataclass(frozen=True)
class EnergyConfig:
    rx_packet_mj: float = 3.34
    continuous_rx_mw: float = 20.79
    # informational: low-frequency vs high-frequency clock current
    lfclk_current_ua: float = 0.25
    hfclk_current_ua: float = 250.0

    def __post_init__(self):
        if self.rx_packet_mj < 0 or self.continuous_rx_mw < 0:
            raise ValueError("energy constants must be >= 0")


@dataclass(frozen=True)
class TrafficConfig:
    busy_fraction: float = 0.0
    slot_us: float = 1250.0

    def __post_init__(self):
        if not 0 <= self.busy_fraction < 1:
            raise ValueError("busy_fraction must be in [0, 1)")
        if self.slot_us <= 0:
            raise ValueError("slot_us must be > 0")


@dataclass(frozen=True)
class ProbeConfig:
    enabled: bool = True
    period_ms: float = 10.0
    sample_rate_hz: float = 24e6

    def __post_init__(self):
        if self.period_ms <= 0 or self.sample_rate_hz <= 0:
            raise ValueError("probe period and sample rate must be > 0")


@dataclass(frozen=True)
class ImuSection(ImuConfig):
    enabled: bool = False


@dataclass(frozen=True)
class Scenario:
    duration_s: float = 1800.0
    n_peripherals: int = 1
    seed: int = 0
    trace: bool = False
    master: NodeConfig = NodeConfig(ppm_offset=3.6)
    peripheral: NodeConfig = NodeConfig(ppm_offset=-3.6)
    peripheral_overrides: dict = field(default_factory=dict)  # index -> NodeConfig
    radio: RadioConfig = RadioConfig()
    sync: SyncConfig = SyncConfig()
    imu: ImuSection = ImuSection()
    energy: EnergyConfig = EnergyConfig()
    traffic: TrafficConfig = TrafficConfig()
    probe: ProbeConfig = ProbeConfig()

    def validate(self, allow_empty: bool = False) -> "Scenario":
        lo = 0 if allow_empty else 1
        if not lo <= self.n_peripherals <= MAX_PERIPHERALS:
            raise ScenarioError("n_peripherals", f"must be in [{lo}, {MAX_PERIPHERALS}] (up to 8 sensor nodes)")
        if self.duration_s <= 0:
            raise ScenarioError("duration_s", "must be > 0")
        if self.seed < 0 or self.seed >= 2**64:
            raise ScenarioError("seed", "must be an unsigned 64-bit integer")
        for k in self.peripheral_overrides:
            if not 1 <= k <= self.n_peripherals:
                raise ScenarioError(f"peripheral.{k}", f"index outside 1..{self.n_peripherals}")
        return self

    def peripheral_config(self, index: int) -> NodeConfig:
        """Oscillator config of peripheral ``index`` (1-based)."""
        return self.peripheral_overrides.get(index, self.peripheral)


_SECTIONS = {
    "master": NodeConfig,
    "peripheral": NodeConfig,
    "radio": RadioConfig,
    "sync": SyncConfig,
    "imu": ImuSection,
    "energy": EnergyConfig,
    "traffic": TrafficConfig,
    "probe": ProbeConfig,
}
_TOP = ("duration_s", "n_peripherals", "seed", "trace")


def _hints(cls) -> dict:
    return typing.get_type_hints(cls)


def _parse_value(key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if typing.get_origin(typ) is typing.Union:
            inner = [a for a in typing.get_args(typ) if a is not type(None)][0]
            return None if raw.lower() == "none" else _parse_value(key, raw, inner)
        if typ is int:
            return int(raw, 0)
        if typ is float:
            return float(raw)
        if typ is tuple:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if typ is str:
            return raw.strip("\"'")
    except ValueError as exc:
        raise ScenarioError(key, str(exc)) from None
    raise ScenarioError(key, f"unsupported type {typ}")


def _build(key: str, cls, values: dict, base=None):
    hints = _hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    parsed = {}
    for name, raw in values.items():
        if name not in names:
            raise ScenarioError(f"{key}.{name}", "unknown key")
        parsed[name] = _parse_value(f"{key}.{name}", raw, hints[name])
    try:
        return dataclasses.replace(base, **parsed) if base is not None else cls(**parsed)
    except ValueError as exc:
        bad = next(iter(parsed), "") if len(parsed) == 1 else "*"
        raise ScenarioError(f"{key}.{bad}" if bad != "*" else key, str(exc)) from None


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    top: dict = {}
    sections: dict = {name: {} for name in _SECTIONS}
    overrides: dict = {}
    prefix = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            prefix = line[1:-1].strip() + "." if line[1:-1].strip() else ""
            continue
        if "=" not in line:
            raise ScenarioError(f"{source}:{lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = prefix + key
        parts = key.split(".")
        if len(parts) == 1:
            if key not in _TOP:
                raise ScenarioError(key, "unknown key")
            top[key] = value
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            sections[parts[0]][parts[1]] = value
        elif len(parts) == 3 and parts[0] == "peripheral" and parts[1].isdigit():
            overrides.setdefault(int(parts[1]), {})[parts[2]] = value
        else:
            raise ScenarioError(key, "unknown key")

    hints = _hints(Scenario)
    kwargs = {k: _parse_value(k, v, hints[k]) for k, v in top.items()}
    for name, cls in _SECTIONS.items():
        kwargs[name] = _build(name, cls, sections[name], getattr(Scenario, name))
    kwargs["peripheral_overrides"] = {
        idx: _build(f"peripheral.{idx}", NodeConfig, vals, kwargs["peripheral"])
        for idx, vals in sorted(overrides.items())
    }
    try:
        scenario = Scenario(**kwargs)
    except ValueError as exc:
        raise ScenarioError("scenario", str(exc)) from None
    return scenario.validate()


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read scenario file ({exc.strerror})") from None
    return parse_scenario(text, str(path))


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_scenario(scenario: Scenario) -> str:
    """Effective configuration as a scenario file that re-parses to ``scenario``."""
    lines = [f"{k} = {_fmt(getattr(scenario, k))}" for k in _TOP]
    for name in _SECTIONS:
        section = getattr(scenario, name)
        lines.append("")
        lines.append(f"[{name}]")
        for f in dataclasses.fields(section):
            lines.append(f"{f.name} = {_fmt(getattr(section, f.name))}")
    for idx, cfg in sorted(scenario.peripheral_overrides.items()):
        lines.append("")
        lines.append(f"[peripheral.{idx}]")
        for f in dataclasses.fields(cfg):
            lines.append(f"{f.name} = {_fmt(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"
