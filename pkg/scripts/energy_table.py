"""Per-hour synchronization energy: closed form vs simulated ledger vs measured values."""

import argparse
from dataclasses import replace

from wsnsync.cli import energy_model_table, energy_simulated_table
from wsnsync.energy import TABLE_I_MJ
from wsnsync.scenario import Scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--skip-simulated", action="store_true", help="closed form only (fast)")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    sc = replace(Scenario(), radio=replace(Scenario().radio, busy_loss_prob=0.0))
    model = energy_model_table(sc)
    sim = None if args.skip_simulated else energy_simulated_table(sc, workers=args.workers or 1)
    print(f"{'window_s':>8} {'model':>10} {'simulated':>10} {'measured':>10}")
    for w, measured in TABLE_I_MJ.items():
        s = f"{sim[float(w)]:10.1f}" if sim else f"{'-':>10}"
        print(f"{w:>8} {model[float(w)]:10.1f} {s} {measured:10}")


if __name__ == "__main__":
    main()
