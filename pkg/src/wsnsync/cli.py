"""Command line: run scenarios, sweep receive windows, reproduce the accuracy/energy tables."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import energy as en
from .engine import RunReport, run, with_window
from .scenario import PAPER_WINDOWS, Scenario, ScenarioError, dump_scenario, load_scenario
from .stats import BoxStats, box_stats
from .timebase import DEFAULT_TICK_PS, PS_PER_S, PS_PER_US, theoretical_max_drift

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 2, 3, 4

CSV_HEADER = ["window_s", "min_us", "q1_us", "median_us", "q3_us", "max_us", "n", "energy_mJ_per_h", "theory_max_us"]
TABLE_HEADER = ["window_s", "model_mJ_per_h", "simulated_mJ_per_h", "measured_mJ_per_h", "model_rel_err", "simulated_rel_err"]

IMU_QUARTILES_MS = (1.11, 2.22, 3.33)


@dataclass
class SweepRow:
    window: object  # float seconds, or "imu"
    box: Optional[BoxStats]
    energy_mj_per_h: Optional[float]
    theory_max_us: Optional[float]
    report: Optional[RunReport] = None


def theory_max_us(scenario: Scenario, window_s: float) -> float:
    interval = window_s if window_s > 0 else 1.0 / scenario.sync.rate_hz
    ppm_p = max((scenario.peripheral_config(i).tolerance_ppm for i in range(1, scenario.n_peripherals + 1)),
                default=scenario.peripheral.tolerance_ppm)
    return theoretical_max_drift(round(interval * PS_PER_S), scenario.master.tolerance_ppm, ppm_p) / PS_PER_US


def imu_case(base: Scenario) -> Scenario:
    """Oversampled IMU read on the synchronized trigger; probes off, continuous sync."""
    return replace(with_window(base, 0.0), imu=replace(base.imu, enabled=True),
                   probe=replace(base.probe, enabled=False))


def _run_window(args) -> tuple:
    scenario, seed, window = args
    rep = run(with_window(scenario, window), seed)
    return window, rep


def _run_imu(args) -> RunReport:
    scenario, seed = args
    return run(imu_case(scenario), seed)


def _pool_map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def sweep(base: Scenario, windows: Sequence[float] = PAPER_WINDOWS, imu: bool = True,
          seed: Optional[int] = None, workers: Optional[int] = None) -> list[SweepRow]:
    """One run per receive-window interval plus an optional IMU-error row."""
    seed = base.seed if seed is None else seed
    workers = workers if workers is not None else (os.cpu_count() or 1)
    results = _pool_map(_run_window, [(base, seed, float(w)) for w in windows], workers)
    rows = []
    for w, rep in results:
        rows.append(SweepRow(w, rep.box, float(np.mean([p.energy_mj_per_h for p in rep.peripherals]))
                             if rep.peripherals else 0.0, theory_max_us(base, w), rep))
    if imu:
        rep = _run_imu((base, seed))
        ages = np.concatenate([p.imu_ages_us for p in rep.peripherals]) if rep.peripherals else np.zeros(0)
        period_us = 1e6 / base.imu.rate_hz
        rows.append(SweepRow("imu", box_stats(ages) if ages.size else None, None, period_us, rep))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(round(v, 6))
    return str(v)


def emit_report(rows: Sequence[SweepRow], path, fmt: str = "csv") -> Path:
    """Write one row per window; an empty ``rows`` gives a header-only file."""
    delim = "," if fmt == "csv" else "\t"
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delim, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            b = r.box
            window = r.window if isinstance(r.window, str) else float(r.window)
            cells = [window] + ([b.min, b.q1, b.median, b.q3, b.max, b.n] if b else [None] * 6)
            cells += [r.energy_mj_per_h, r.theory_max_us]
            w.writerow([_fmt(c) for c in cells])
    return path


# --- energy table ------------------------------------------------------------------

def energy_model_table(scenario: Scenario, windows=PAPER_WINDOWS) -> dict:
    e = scenario.energy
    return {float(w): en.per_hour(w, e.rx_packet_mj, e.continuous_rx_mw) for w in windows}


def energy_simulated_table(scenario: Scenario, windows=PAPER_WINDOWS, seed: Optional[int] = None,
                           workers: int = 1) -> dict:
    """Full-ledger path: one lossless, probe-free simulated hour per window."""
    sc = replace(scenario, duration_s=3600.0, radio=replace(scenario.radio, busy_loss_prob=0.0),
                 traffic=replace(scenario.traffic, busy_fraction=0.0),
                 probe=replace(scenario.probe, enabled=False), imu=replace(scenario.imu, enabled=False))
    results = _pool_map(_run_window, [(sc, sc.seed if seed is None else seed, float(w)) for w in windows], workers)
    return {w: rep.peripherals[0].energy_mj_per_h for w, rep in results}


def emit_energy_table(model: dict, simulated: Optional[dict], path, fmt: str = "csv") -> Path:
    delim = "," if fmt == "csv" else "\t"
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delim, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for win, val in model.items():
            measured = en.TABLE_I_MJ.get(int(win)) if float(win).is_integer() else None
            sim = simulated.get(win) if simulated else None
            rel = (val - measured) / measured if measured else None
            rel_sim = (sim - measured) / measured if measured and sim is not None else None
            w.writerow([_fmt(c) for c in (float(win), val, sim, measured, rel, rel_sim)])
    return path


# --- acceptance checks -----------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def check_energy(table: dict, label: str, tol: float = 0.02) -> Check:
    worst = max(abs(table[float(w)] - p) / p for w, p in en.TABLE_I_MJ.items())
    return Check(f"per-hour energy ({label})", worst <= tol, f"worst relative error {worst:.4f} (<= {tol})")


def check_sweep(rows: Sequence[SweepRow], scenario: Scenario) -> list[Check]:
    checks = []
    by_w = {r.window: r for r in rows}
    tick_us = DEFAULT_TICK_PS / PS_PER_US
    if 0.0 in by_w and by_w[0.0].box:
        b = by_w[0.0].box
        checks.append(Check("continuous accuracy", b.median < 1.0 and b.max <= 3.0,
                            f"median {b.median:.3f} us (< 1), max {b.max:.3f} us (<= 3)"))
    duty = [w for w in sorted(k for k in by_w if k != "imu") if w > 0]
    if duty:
        ok = all(by_w[w].box is not None and by_w[w].box.max <= theory_max_us(scenario, w) + 2 * tick_us for w in duty)
        checks.append(Check("duty-cycled max within theoretical drift", ok,
                            ", ".join(f"{w:g}s {by_w[w].box.max:.2f}/{theory_max_us(scenario, w):.2f}"
                                      for w in duty if by_w[w].box)))
        meds = [by_w[w].box.median for w in duty if by_w[w].box]
        checks.append(Check("medians grow with window", all(a < b for a, b in zip(meds, meds[1:])),
                            ", ".join(f"{m:.2f}" for m in meds)))
    if 60.0 in by_w and by_w[60.0].box:
        m = by_w[60.0].box.median
        checks.append(Check("60 s window median", 100 <= m <= 400, f"{m:.2f} us in [100, 400]"))
    if 300.0 in by_w and by_w[300.0].box:
        m = by_w[300.0].box.max
        checks.append(Check("300 s window max", m <= 6007.0, f"{m:.2f} us <= 6007"))
    if "imu" in by_w and by_w["imu"].box:
        b = by_w["imu"].box
        qs = (b.q1 / 1e3, b.median / 1e3, b.q3 / 1e3)
        ok = b.max <= 4500 and b.n >= 10**5 and all(abs(q - r) <= 0.1 * r for q, r in zip(qs, IMU_QUARTILES_MS))
        checks.append(Check("IMU oversampling error", ok,
                            f"n={b.n}, max {b.max / 1e3:.3f} ms, quartiles " + "/".join(f"{q:.3f}" for q in qs)))
    return checks


# --- entry point -----------------------------------------------------------------

def _seed(args, scenario: Scenario) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("WSN_SYNC_SEED")
    if env:
        try:
            return int(env, 0)
        except ValueError:
            raise ScenarioError("WSN_SYNC_SEED", f"not an integer: {env!r}") from None
    return scenario.seed


def _apply_overrides(args, scenario: Scenario) -> Scenario:
    if getattr(args, "duration", None) is not None:
        if args.duration <= 0:
            raise ScenarioError("--duration", "must be > 0")
        scenario = replace(scenario, duration_s=float(args.duration))
    return replace(scenario, seed=_seed(args, scenario))


def _parse_windows(text: str) -> tuple:
    try:
        ws = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ScenarioError("--windows", f"expected comma-separated seconds, got {text!r}") from None
    if not ws or any(w < 0 or w > 3600 for w in ws):
        raise ScenarioError("--windows", "each window must be 0 or in (0, 3600]")
    return ws


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wsn-sync", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenario_arg=True):
        if scenario_arg:
            p.add_argument("scenario", help="scenario file (key = value)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed (falls back to $WSN_SYNC_SEED)")
        p.add_argument("--duration", type=float, default=None, help="simulated seconds")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--format", choices=("csv", "tsv"), default="csv")

    common(sub.add_parser("run", help="simulate one scenario"))
    sp = sub.add_parser("sweep", help="run the scenario once per receive-window interval")
    common(sp)
    sp.add_argument("--windows", default=None, help="comma-separated intervals in s (default: scenario's)")
    sp.add_argument("--no-imu", action="store_true", help="skip the IMU-error row")
    sp.add_argument("--workers", type=int, default=None)
    rp = sub.add_parser("reproduce", help="accuracy sweep and energy table from built-in defaults")
    common(rp, scenario_arg=False)
    rp.add_argument("--check", action="store_true", help="compare against the measured reference values")
    rp.add_argument("--workers", type=int, default=None)
    rp.add_argument("--skip-simulated-energy", action="store_true")
    dp = sub.add_parser("dump-defaults", help="print the default scenario")
    dp.add_argument("--out", default=None, help="write to this file instead of stdout")
    return ap


def _cmd_run(args) -> int:
    sc = _apply_overrides(args, load_scenario(args.scenario))
    rep = run(sc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    w = sc.sync.window_interval_s
    energy = float(np.mean([p.energy_mj_per_h for p in rep.peripherals])) if rep.peripherals else 0.0
    rows = [SweepRow(w, rep.box, energy, theory_max_us(sc, w))] if rep.box else []
    emit_report(rows, out / f"run.{args.format}", args.format)
    if rep.trace is not None:
        (out / "trace.tsv").write_text(rep.trace_text(), encoding="utf-8")
    (out / "effective.scenario").write_text(dump_scenario(sc), encoding="utf-8")
    sys.stdout.write(rep.to_json())
    return EXIT_OK


def _cmd_sweep(args) -> int:
    sc = _apply_overrides(args, load_scenario(args.scenario))
    windows = _parse_windows(args.windows) if args.windows else sc.sync.windows
    rows = sweep(sc, windows, imu=not args.no_imu, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = emit_report(rows, out / f"sweep.{args.format}", args.format)
    sys.stdout.write(path.read_text(encoding="utf-8"))
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    sc = _apply_overrides(args, Scenario())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    rows = sweep(sc, PAPER_WINDOWS, imu=True, workers=workers)
    emit_report(rows, out / f"fig3.{args.format}", args.format)
    model = energy_model_table(sc)
    simulated = None if args.skip_simulated_energy else energy_simulated_table(sc, workers=workers)
    emit_energy_table(model, simulated, out / f"table1.{args.format}", args.format)
    with (out / "fig3_plot.dat").open("w", encoding="utf-8") as fh:
        fh.write("x label min q1 median q3 max theory\n")
        for i, r in enumerate(rows, 1):
            if r.box:
                label = "imu" if r.window == "imu" else f"{float(r.window):g}"
                fh.write(f"{i} {label} {r.box.min:.6f} {r.box.q1:.6f} {r.box.median:.6f} "
                         f"{r.box.q3:.6f} {r.box.max:.6f} {r.theory_max_us or 0:.6f}\n")
    for r in rows:
        if r.box:
            print(f"window {r.window}: median {r.box.median:.3f} us, max {r.box.max:.3f} us, n {r.box.n}")
    if not args.check:
        return EXIT_OK
    checks = [check_energy(model, "closed form")]
    if simulated is not None:
        checks.append(check_energy(simulated, "simulated ledger"))
    checks += check_sweep(rows, sc)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "dump-defaults":
            text = dump_scenario(Scenario())
            if args.out:
                Path(args.out).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return EXIT_OK
        return {"run": _cmd_run, "sweep": _cmd_sweep, "reproduce": _cmd_reproduce}[args.command](args)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
