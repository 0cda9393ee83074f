"""Sample age with 225 Hz oversampling vs timestamp error of interrupt-triggered packets."""

import argparse

import numpy as np

from wsnsync.imu import ImuConfig, interrupt_triggered_errors, oversampled_ages
from wsnsync.stats import box_stats
from wsnsync.timebase import PS_PER_MS, PS_PER_S


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--minutes", type=float, default=30.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    n = int(args.minutes * 60 * 100)
    rng = np.random.default_rng(args.seed)
    triggers = np.arange(1, n + 1, dtype=np.int64) * (PS_PER_S // 100)
    ages = oversampled_ages(ImuConfig(), triggers, rng) / PS_PER_MS
    b = box_stats(ages)
    print(f"oversampled (225 Hz, read at 100 Hz): q1 {b.q1:.3f}  median {b.median:.3f}  "
          f"q3 {b.q3:.3f}  max {b.max:.3f} ms  (n={b.n})")

    err = interrupt_triggered_errors(ImuConfig(rate_hz=100.0), n, rng) / PS_PER_MS
    for minute in (m for m in (1, 5, 10, 30) if m <= args.minutes):
        i = minute * 6000 - 1
        print(f"interrupt-triggered after {minute:>2} min: error {err[i]:10.1f} ms")


if __name__ == "__main__":
    main()
