"""Box-plot summaries of synchronization error and checks against drift bounds."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class BoxStats:
    """Five-number summary in microseconds."""

    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int

    def as_dict(self) -> dict:
        return asdict(self)


def box_stats(samples, absolute: bool = True) -> BoxStats:
    """Quartiles by linear interpolation between order statistics (inclusive method).

    Statistics are taken on magnitudes unless ``absolute`` is False.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("box_stats needs at least one sample")
    if absolute:
        x = np.abs(x)
    q = np.percentile(x, [0, 25, 50, 75, 100], method="linear")
    return BoxStats(*(float(v) for v in q), n=int(x.size))


@dataclass(frozen=True)
class BoundCheck:
    passed: bool
    margin: float


def bound_check(stats: BoxStats, bound: float) -> BoundCheck:
    return BoundCheck(stats.max <= bound, bound - stats.max)
