"""
Kinematic and temporal features of pen trajectories.

Derivatives are taken per stroke (never across a pen-state change) with
central differences on interior samples and one-sided differences at the
stroke ends.  Horizontal and vertical velocity/acceleration are magnitudes
(``|dx/dt|``, ``|dy/dt|``).
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import DegenerateStatisticError, InsufficientDataError

DEFAULT_STOP_VELOCITY = 5.0  # mm/s
DEFAULT_STOP_DURATION = 0.075  # s
SMOOTHING_WIDTH = 7


class Scope(str, enum.Enum):
    ON_SURFACE = "on-surface"
    IN_AIR = "in-air"
    BOTH = "both"

    def includes(self, stroke):
        if self is Scope.BOTH:
            return True
        return stroke.on_surface == (self is Scope.ON_SURFACE)


@dataclass(frozen=True, eq=False)
class Profile:
    """A sampled signal, possibly made of several stroke segments.

    ``breaks`` holds the start index of every segment after the first; change
    counts and durations never span a break.
    """

    values: np.ndarray
    t: np.ndarray
    channel: str = ""
    scope: Scope = Scope.ON_SURFACE
    breaks: tuple = field(default_factory=tuple)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if v.shape != t.shape:
            raise ValueError("values and t must have equal length")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "t", t)

    def __len__(self):
        return self.values.size

    def segments(self):
        """Yield ``(t, values)`` for each stroke segment."""
        bounds = [0, *self.breaks, len(self)]
        for a, b in zip(bounds[:-1], bounds[1:]):
            if b > a:
                yield self.t[a:b], self.values[a:b]

    @property
    def duration(self):
        return float(sum(t[-1] - t[0] for t, _ in self.segments()))


def differentiate(x, t):
    """First derivative of ``x`` with respect to ``t``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if x.size < 2:
        raise InsufficientDataError("derivative needs at least 2 samples")
    return np.gradient(x, t)


def _moving_average(x, width):
    if x.size < width:
        return x
    kernel = np.ones(width) / width
    padded = np.pad(x, width // 2, mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def _stroke_derivatives(rec, scope, order, smooth=False):
    """Per-stroke (t, d^order x, d^order y) concatenated over strokes in ``scope``."""
    ts, dxs, dys, breaks = [], [], [], []
    n = 0
    for stroke in rec.strokes:
        if not scope.includes(stroke) or len(stroke) < order + 1:
            continue
        sl = slice(stroke.start, stroke.stop)
        t = rec.t[sl]
        dx, dy = rec.x[sl], rec.y[sl]
        if smooth:
            dx, dy = _moving_average(dx, SMOOTHING_WIDTH), _moving_average(dy, SMOOTHING_WIDTH)
        for _ in range(order):
            dx, dy = differentiate(dx, t), differentiate(dy, t)
        if n:
            breaks.append(n)
        ts.append(t)
        dxs.append(dx)
        dys.append(dy)
        n += t.size
    if not ts:
        raise InsufficientDataError(f"no {scope.value} stroke with {order + 1}+ samples")
    return np.concatenate(ts), np.concatenate(dxs), np.concatenate(dys), tuple(breaks)


def _triple(rec, scope, order, name, smooth):
    scope = Scope(scope)
    t, dx, dy, breaks = _stroke_derivatives(rec, scope, order, smooth)
    g = np.hypot(dx, dy)
    return tuple(
        Profile(v, t, f"{name}-{d}", scope, breaks)
        for d, v in (("G", g), ("H", np.abs(dx)), ("V", np.abs(dy)))
    )


def velocity(rec, scope=Scope.ON_SURFACE, smooth=False):
    """Global, horizontal and vertical speed profiles (mm/s)."""
    return _triple(rec, scope, 1, "velocity", smooth)


def acceleration(rec, scope=Scope.ON_SURFACE, smooth=False):
    """Global, horizontal and vertical acceleration magnitude profiles (mm/s^2)."""
    return _triple(rec, scope, 2, "acceleration", smooth)


def sample_velocity(rec):
    """Per-sample ``(vx, vy)`` aligned with the recording; NaN on single-sample strokes."""
    vx = np.full(len(rec), np.nan)
    vy = np.full(len(rec), np.nan)
    for stroke in rec.strokes:
        if len(stroke) < 2:
            continue
        sl = slice(stroke.start, stroke.stop)
        vx[sl] = differentiate(rec.x[sl], rec.t[sl])
        vy[sl] = differentiate(rec.y[sl], rec.t[sl])
    return vx, vy


def channel_profile(rec, channel, scope=Scope.ON_SURFACE):
    """Raw channel (pressure, tilt, azimuth, x, y) restricted to strokes in ``scope``."""
    scope = Scope(scope)
    idx, breaks = [], []
    n = 0
    for stroke in rec.strokes:
        if not scope.includes(stroke):
            continue
        if n:
            breaks.append(n)
        idx.append(np.arange(stroke.start, stroke.stop))
        n += len(stroke)
    if not idx:
        raise InsufficientDataError(f"no {scope.value} samples")
    idx = np.concatenate(idx)
    return Profile(getattr(rec, channel)[idx], rec.t[idx], channel, scope, tuple(breaks))


def _extrema_count(v):
    if v.size < 3:
        return 0
    d = np.diff(v)
    d = d[d != 0]  # collapse plateaus
    if d.size < 2:
        return 0
    s = np.sign(d)
    return int(np.count_nonzero(s[1:] != s[:-1]))


def count_changes(p):
    """Number of strict local extrema, plateaus collapsed, summed over segments."""
    if len(p) < 3:
        raise InsufficientDataError("change count needs at least 3 samples")
    return sum(_extrema_count(v) for _, v in p.segments())


def relative_changes(p):
    """Changes per second of profile duration."""
    dur = p.duration
    if dur <= 0:
        raise DegenerateStatisticError("profile has zero duration")
    return count_changes(p) / dur


def pen_stops(vel_g, v_thresh=DEFAULT_STOP_VELOCITY, min_dur=DEFAULT_STOP_DURATION):
    """Count maximal runs with speed below ``v_thresh`` spanning at least ``min_dur`` s."""
    count = 0
    for t, v in vel_g.segments():
        slow = np.concatenate(([False], v < v_thresh, [False]))
        edges = np.flatnonzero(np.diff(slow.astype(np.int8)))
        for a, b in zip(edges[::2], edges[1::2]):
            if t[b - 1] - t[a] >= min_dur:
                count += 1
    return count


def stroke_durations(rec):
    """Duration of every stroke: time from its first sample to the next stroke's first.

    The final stroke ends at its own last sample, so the durations add up to
    the total recording duration.
    """
    strokes = rec.strokes
    out = np.empty(len(strokes))
    for k, s in enumerate(strokes):
        end = s.stop if s.stop < len(rec) else s.stop - 1
        out[k] = rec.t[end] - rec.t[s.start]
    return out


def temporal_features(rec):
    """DUR (overall/on/air), DURR, SDUR vectors, SDURR, TEMPO and NINT.

    Ratios that would divide by a zero in-air duration are returned as None.
    """
    strokes = rec.strokes
    durs = stroke_durations(rec)
    on = np.array([s.on_surface for s in strokes])
    dur_on = float(durs[on].sum())
    dur_air = float(durs[~on].sum())
    total = rec.duration
    on_idx = np.flatnonzero(on)
    # in-air strokes strictly between the first and last on-surface stroke
    nint = 0
    if on_idx.size:
        inner = np.arange(on_idx[0], on_idx[-1] + 1)
        nint = int(np.count_nonzero(~on[inner]))
    sdur_on = durs[on]
    sdur_air = durs[~on]
    sdurr = None
    if sdur_on.size and sdur_air.size:
        med_air = stats.median(sdur_air)
        if med_air > 0:
            sdurr = stats.median(sdur_on) / med_air
    return {
        "DUR": total,
        "DUR_on": dur_on,
        "DUR_air": dur_air,
        "DURR": dur_on / dur_air if dur_air > 0 else None,
        "SDUR_on": sdur_on,
        "SDUR_air": sdur_air,
        "SDURR": sdurr,
        "TEMPO": len(strokes) / total if total > 0 else None,
        "NINT": nint,
    }


def slope_feature(p):
    """Theil-Sen slope of the profile values against time."""
    if len(p) < 2:
        raise InsufficientDataError("slope needs at least 2 samples")
    return stats.theil_sen_slope(p.t, p.values)
