"""Accuracy per receive-window interval plus the IMU row, written as fig3.csv."""

import argparse
from pathlib import Path

from wsnsync.cli import check_sweep, emit_report, sweep
from wsnsync.scenario import PAPER_WINDOWS, Scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--duration", type=float, default=1800.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    base = Scenario(duration_s=args.duration, seed=args.seed)
    rows = sweep(base, PAPER_WINDOWS, imu=True, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(rows, out / "fig3.csv")
    for r in rows:
        b = r.box
        print(f"{str(r.window):>6}  median {b.median:10.3f} us  max {b.max:10.3f} us  "
              f"theory {r.theory_max_us:10.3f} us  n {b.n}")
    for c in check_sweep(rows, base):
        print(c.line())


if __name__ == "__main__":
    main()
