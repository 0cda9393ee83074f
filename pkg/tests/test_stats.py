import numpy as np
import pytest
from hypothesis import given, strategies as st

from wsnsync.stats import BoxStats, bound_check, box_stats

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_five_point_summary():
    s = box_stats([1, 2, 3, 4, 5])
    assert (s.min, s.q1, s.median, s.q3, s.max, s.n) == (1, 2, 3, 4, 5, 5)


def test_absolute_by_default():
    assert box_stats([-3, 1, 2]).max == 3
    assert box_stats([-3, 1, 2], absolute=False).min == -3


def test_empty_raises():
    with pytest.raises(ValueError):
        box_stats([])


@given(st.lists(finite, min_size=1, max_size=50), st.randoms())
def test_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert box_stats(xs) == box_stats(ys)


@given(st.lists(finite, min_size=1, max_size=50), st.floats(0.01, 100))
def test_scale_equivariant(xs, c):
    a, b = box_stats(xs), box_stats([c * x for x in xs])
    for f in ("min", "q1", "median", "q3", "max"):
        assert getattr(b, f) == pytest.approx(c * getattr(a, f), rel=1e-9, abs=1e-9)


@given(st.lists(finite, min_size=1, max_size=50))
def test_ordered(xs):
    s = box_stats(xs)
    assert s.min <= s.q1 <= s.median <= s.q3 <= s.max


def test_uniform_quartiles():
    s = box_stats(np.random.default_rng(0).uniform(0, 1, 200_000))
    assert (s.q1, s.median, s.q3) == pytest.approx((0.25, 0.5, 0.75), abs=0.005)


@pytest.mark.parametrize("mx, bound, passed, margin", [
    (427.0, 1201.0, True, 774.0),
    (5000.0, 6007.0, True, 1007.0),
    (10.0, 5.0, False, -5.0),
])
def test_bound_check(mx, bound, passed, margin):
    r = bound_check(BoxStats(0, 0, 0, 0, mx, 1), bound)
    assert r.passed is passed and r.margin == pytest.approx(margin)
