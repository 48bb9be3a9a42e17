"""
Robust scalar statistics.

These collapse feature vectors (per-stroke durations, velocity samples, local
maxima...) into scalars and build the min-max/median/percentile constants of
the normative tables.  All functions accept any 1-D array-like and return
plain Python floats.

Quantiles use linear interpolation between order statistics at the zero-based
position ``q * (n - 1)``.
"""

import enum

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateStatisticError, InsufficientDataError

# exact pairwise enumeration is capped; beyond this a seeded subsample is used
THEIL_SEN_MAX_PAIRS = 4_000_000
THEIL_SEN_SEED = 0


class Aggregator(str, enum.Enum):
    """Statistic used to turn a vector feature into a scalar."""

    MEDIAN = "median"
    IQR = "iqr"
    NCV = "ncv"
    P95 = "95p"
    SLOPE = "slope"


def _as_vector(v):
    arr = np.asarray(v, dtype=float).ravel()
    if arr.size == 0:
        raise InsufficientDataError("statistic of an empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains non-finite values")
    return arr


def quantile(v, q):
    """Linear-interpolation quantile, ``q`` in [0, 1]."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile level {q!r} outside [0, 1]")
    arr = np.sort(_as_vector(v))
    pos = q * (arr.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, arr.size - 1)
    frac = pos - lo
    a, b = arr[lo], arr[hi]
    if frac == 0.0:
        return float(a)
    if frac == 0.5:
        # exact midpoint so that median() and quantile(., 0.5) agree bit-for-bit
        return float((a + b) / 2.0)
    return float(a + (b - a) * frac)


def median(v):
    return quantile(v, 0.5)


def iqr(v):
    return quantile(v, 0.75) - quantile(v, 0.25)


def ncv(v):
    """Non-parametric coefficient of variation, ``iqr / median``.

    Raises
    ------
    DegenerateStatisticError
        If the median is zero.
    """
    med = median(v)
    if med == 0.0:
        raise DegenerateStatisticError("ncv undefined for zero median")
    return iqr(v) / med


def p95(v):
    return quantile(v, 0.95)


def theil_sen_slope(x, y):
    """Median of all pairwise slopes ``(y_j - y_i) / (x_j - x_i)`` with ``x_i != x_j``.

    For more than ``THEIL_SEN_MAX_PAIRS`` pairs a uniform random subsample of
    pairs drawn with a fixed seed is used instead of the full enumeration.
    """
    x = _as_vector(x)
    y = _as_vector(y)
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    n = x.size
    if n < 2:
        raise InsufficientDataError("Theil-Sen needs at least 2 points")
    n_pairs = n * (n - 1) // 2
    if n_pairs <= THEIL_SEN_MAX_PAIRS:
        i, j = np.triu_indices(n, k=1)
    else:
        rng = np.random.default_rng(THEIL_SEN_SEED)
        i = rng.integers(0, n, THEIL_SEN_MAX_PAIRS)
        j = rng.integers(0, n, THEIL_SEN_MAX_PAIRS)
    dx = x[j] - x[i]
    keep = dx != 0
    if not np.any(keep):
        raise DegenerateStatisticError("Theil-Sen slope undefined: all x equal")
    slopes = (y[j][keep] - y[i][keep]) / dx[keep]
    return _fast_median(slopes)


def _fast_median(arr):
    # partition-based median; same midpoint convention as quantile()
    n = arr.size
    k = n // 2
    if n % 2:
        return float(np.partition(arr, k)[k])
    part = np.partition(arr, [k - 1, k])
    return float((part[k - 1] + part[k]) / 2.0)


def aggregate(v, agg, t=None):
    """Apply an :class:`Aggregator` to vector ``v``.

    ``slope`` regresses ``v`` on ``t`` (defaults to the sample index).
    """
    agg = Aggregator(agg)
    if agg is Aggregator.MEDIAN:
        return median(v)
    if agg is Aggregator.IQR:
        return iqr(v)
    if agg is Aggregator.NCV:
        return ncv(v)
    if agg is Aggregator.P95:
        return p95(v)
    v = _as_vector(v)
    if t is None:
        t = np.arange(v.size, dtype=float)
    return theil_sen_slope(t, v)


def minmax_scale(v):
    """Scale ``v`` to [0, 1]; returns ``(scaled, vmin, vmax)``.

    The returned bounds can be reused on new data with :func:`apply_minmax`,
    which does not clamp.
    """
    arr = _as_vector(v)
    lo, hi = float(arr.min()), float(arr.max())
    if not hi > lo:
        raise DegenerateStatisticError("min-max scaling of a constant cohort")
    return (arr - lo) / (hi - lo), lo, hi


def apply_minmax(value, vmin, vmax):
    if not vmax > vmin:
        raise DegenerateStatisticError("min-max bounds must satisfy max > min")
    return (np.asarray(value, dtype=float) - vmin) / (vmax - vmin)


def spearman_rho(x, y):
    """Spearman rank correlation (average ranks for ties)."""
    x = _as_vector(x)
    y = _as_vector(y)
    if x.size != y.size:
        raise ValueError("x and y must have equal length")
    if x.size < 3:
        raise InsufficientDataError("Spearman correlation needs at least 3 pairs")
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    denom = np.sqrt(np.sum(rx * rx) * np.sum(ry * ry))
    if denom == 0.0:
        raise DegenerateStatisticError("Spearman correlation of a constant vector")
    return float(np.sum(rx * ry) / denom)
