import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphoscale import stats
from graphoscale.errors import DegenerateStatisticError, InsufficientDataError

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
vectors = st.lists(finite, min_size=1, max_size=60)


def oracle_quantile(v, q):
    s = sorted(v)
    pos = q * (len(s) - 1)
    lo = int(pos // 1)
    hi = min(lo + 1, len(s) - 1)
    frac = pos - lo
    if frac == 0:
        return s[lo]
    if frac == 0.5:
        return (s[lo] + s[hi]) / 2
    return s[lo] + (s[hi] - s[lo]) * frac


def oracle_theil_sen(x, y):
    slopes = sorted((y[j] - y[i]) / (x[j] - x[i])
                    for i, j in itertools.combinations(range(len(x)), 2) if x[i] != x[j])
    n = len(slopes)
    return slopes[n // 2] if n % 2 else (slopes[n // 2 - 1] + slopes[n // 2]) / 2


def test_median_small():
    assert stats.median([1, 2, 3]) == 2
    assert stats.median([1, 2, 3, 4]) == 2.5


def test_median_large_matches_sort(rng):
    v = rng.random(10_001)
    assert stats.median(v) == sorted(v)[5000]


def test_quantile_examples():
    v = np.arange(101.0)
    assert stats.quantile(v, 0.95) == 95.0
    w = [3.0, -1.0, 7.5]
    assert stats.quantile(w, 0) == -1.0
    assert stats.quantile(w, 1) == 7.5


def test_quantile_rejects_bad_level():
    with pytest.raises(ValueError):
        stats.quantile([1, 2], 1.5)


def test_empty_vector():
    with pytest.raises(InsufficientDataError):
        stats.median([])


def test_ncv_examples():
    assert stats.ncv([4, 4, 4]) == 0
    assert stats.ncv([1, 2, 3, 4, 5]) == pytest.approx(2 / 3, abs=1e-15)
    with pytest.raises(DegenerateStatisticError):
        stats.ncv([-1, 0, 1])


def test_theil_sen_examples():
    assert stats.theil_sen_slope([0, 1, 2, 3, 4], [1, 3, 5, 7, 9]) == 2
    x, y = [0, 1, 2, 3], [0, 1, 2, 100]
    # slopes: 1, 1, 1, 33.33, 49.5, 98 -> median (1 + 33.33) / 2
    assert stats.theil_sen_slope(x, y) == pytest.approx(oracle_theil_sen(x, y), abs=1e-12)
    assert stats.theil_sen_slope(x, y) == pytest.approx(17.1666666667)


def test_theil_sen_all_x_equal():
    with pytest.raises(DegenerateStatisticError):
        stats.theil_sen_slope([1, 1, 1], [1, 2, 3])


def test_minmax_examples():
    scaled, lo, hi = stats.minmax_scale([2, 4, 6])
    assert list(scaled) == [0, 0.5, 1] and (lo, hi) == (2, 6)
    assert stats.apply_minmax(8, 2, 6) == 1.5
    with pytest.raises(DegenerateStatisticError):
        stats.minmax_scale([3, 3])


def test_spearman_examples(rng):
    assert stats.spearman_rho([1, 2, 3, 4], [9, 7, 3, 1]) == -1
    assert stats.spearman_rho([1, 5, 2], [1, 5, 2]) == 1
    x, y = rng.random(50), rng.random(50)

    def ranks(v):
        order = np.argsort(v)
        r = np.empty(len(v))
        r[order] = np.arange(1, len(v) + 1)
        return r

    expected = np.corrcoef(ranks(x), ranks(y))[0, 1]
    assert stats.spearman_rho(x, y) == pytest.approx(expected, abs=1e-12)


def test_aggregate_dispatch():
    v = [1.0, 2.0, 4.0, 8.0]
    assert stats.aggregate(v, "median") == stats.median(v)
    assert stats.aggregate(v, "95p") == stats.p95(v)
    assert stats.aggregate([1, 2, 3], "slope") == 1.0
    assert stats.aggregate([0, 10], "slope", t=[0, 5]) == 2.0


@given(vectors, st.floats(0, 1))
def test_quantile_matches_oracle(v, q):
    assert stats.quantile(v, q) == pytest.approx(oracle_quantile(v, q), rel=1e-12, abs=1e-9)


@given(vectors, st.floats(0, 1), st.floats(0, 1))
def test_quantile_monotone_in_level(v, q1, q2):
    lo, hi = sorted((q1, q2))
    assert stats.quantile(v, lo) <= stats.quantile(v, hi) + 1e-9 * (1 + max(map(abs, v)))


@given(vectors)
def test_median_is_half_quantile(v):
    assert stats.median(v) == stats.quantile(v, 0.5)


@given(vectors, st.floats(-1e3, 1e3))
def test_iqr_translation_invariant(v, c):
    a = stats.iqr(v)
    b = stats.iqr([x + c for x in v])
    assert b == pytest.approx(a, abs=1e-6 * (1 + max(map(abs, v)) + abs(c)))


@given(st.lists(st.floats(0.1, 100), min_size=1, max_size=40), st.floats(0.01, 100))
def test_ncv_scale_invariant(v, c):
    assert stats.ncv([c * x for x in v]) == pytest.approx(stats.ncv(v), rel=1e-9, abs=1e-12)


@given(st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=2, max_size=25))
def test_theil_sen_matches_oracle(points):
    x = [p[0] for p in points]
    y = [p[1] for p in points]
    if len(set(x)) < 2:
        return
    assert stats.theil_sen_slope(x, y) == pytest.approx(oracle_theil_sen(x, y), rel=1e-12)


def test_theil_sen_resists_quarter_outliers(rng):
    x = np.arange(40.0)
    y = 3.0 * x - 2.0
    bad = rng.choice(40, 10, replace=False)
    y[bad] += rng.uniform(100, 1000, 10)
    assert abs(stats.theil_sen_slope(x, y) - 3.0) < 1e-9
