"""
Spatial features: vertical extrema of loops/zig-zags/arcades, tooth widths,
bow gaps, stroke heights, polyline intersections, densities and Archimedean
spiral measures.

Coordinates are millimetres with ``y`` increasing upwards.  Only on-surface
samples are used.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import DegenerateStatisticError, InsufficientDataError, SpiralGeometryError
from .kinematics import sample_velocity

# an extremum must differ from the neighbouring opposite extremum by this
# fraction of the stroke's vertical range
DEFAULT_PROMINENCE = 0.2


@dataclass(frozen=True)
class ExtremaSet:
    minima: list = field(default_factory=list)  # (index, y)
    maxima: list = field(default_factory=list)

    @property
    def min_y(self):
        return np.array([y for _, y in self.minima])

    @property
    def max_y(self):
        return np.array([y for _, y in self.maxima])


def turning_points(y, delta=0.0):
    """Interior alternating extrema of ``y`` with hysteresis ``delta``.

    A maximum is confirmed once the signal has dropped more than ``delta``
    below it (and symmetrically for minima).  With ``delta == 0`` these are
    the strict local extrema, plateaus collapsed to their first sample.
    Returns ``(minima_idx, maxima_idx)``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    mins, maxs = [], []
    hi = lo = 0
    direction = 0
    for i in range(1, n):
        v = y[i]
        if direction == 0:
            if v > y[hi]:
                hi = i
            if v < y[lo]:
                lo = i
            if v - y[lo] > delta:
                if y[:lo + 1].max() - y[lo] > delta:
                    mins.append(lo)
                direction, hi = 1, i
            elif y[hi] - v > delta:
                if y[hi] - y[:hi + 1].min() > delta:
                    maxs.append(hi)
                direction, lo = -1, i
        elif direction == 1:
            if v > y[hi]:
                hi = i
            elif y[hi] - v > delta:
                maxs.append(hi)
                direction, lo = -1, i
        else:
            if v < y[lo]:
                lo = i
            elif v - y[lo] > delta:
                mins.append(lo)
                direction, hi = 1, i
    return mins, maxs


def _on_strokes(rec, min_len=1):
    return [s for s in rec.strokes if s.on_surface and len(s) >= min_len]


def vertical_extrema(rec, prominence=DEFAULT_PROMINENCE):
    """Local minima/maxima of ``y`` inside each on-surface stroke."""
    minima, maxima = [], []
    for s in _on_strokes(rec, 3):
        y = rec.y[s.start:s.stop]
        delta = prominence * float(y.max() - y.min())
        mins, maxs = turning_points(y, delta)
        minima += [(s.start + i, float(y[i])) for i in mins]
        maxima += [(s.start + i, float(y[i])) for i in maxs]
    return ExtremaSet(minima, maxima)


def _strokewise(rec, indices):
    """Group sample indices by the on-surface stroke containing them."""
    groups = []
    for s in _on_strokes(rec):
        g = [i for i in indices if s.start <= i < s.stop]
        if g:
            groups.append(g)
    return groups


def extrema_heights(es):
    """(LMIN, LMAX) vectors: depths/heights relative to the opposite extrema's median.

    ``LMAX_k = y(max_k) - median(y(minima))`` and
    ``LMIN_k = median(y(maxima)) - y(min_k)``.
    """
    if not es.minima or not es.maxima:
        raise InsufficientDataError("need at least one local minimum and one maximum")
    lmax = es.max_y - stats.median(es.min_y)
    lmin = stats.median(es.max_y) - es.min_y
    return lmin, lmax


def dlmax(rec, es):
    """Euclidean distances between consecutive maxima of the same stroke."""
    out = []
    for g in _strokewise(rec, [i for i, _ in es.maxima]):
        g = np.array(g)
        out.extend(np.hypot(np.diff(rec.x[g]), np.diff(rec.y[g])))
    if not out:
        raise InsufficientDataError("fewer than 2 maxima within a stroke")
    return np.array(out)


def vlmax(rec, es):
    """Global, horizontal and vertical speed at the local maxima."""
    if not es.maxima:
        raise InsufficientDataError("no local maxima")
    vx, vy = sample_velocity(rec)
    idx = np.array([i for i, _ in es.maxima])
    vx, vy = vx[idx], vy[idx]
    keep = np.isfinite(vx)
    if not np.any(keep):
        raise InsufficientDataError("no velocity at local maxima")
    vx, vy = vx[keep], vy[keep]
    return {"G": np.hypot(vx, vy), "H": np.abs(vx), "V": np.abs(vy)}


def _level_crossing(x, y, a, b, level, rising):
    """x where the segment run a..b (inclusive) crosses ``level``.

    Searches from the apex side: for a rising flank, the last upward
    crossing; for a falling flank, the first downward crossing.
    """
    rng = range(b - 1, a - 1, -1) if rising else range(a, b)
    for i in rng:
        y0, y1 = y[i], y[i + 1]
        if (y0 - level) * (y1 - level) <= 0 and y0 != y1:
            if rising and not (y0 <= level <= y1):
                continue
            if not rising and not (y0 >= level >= y1):
                continue
            f = (level - y0) / (y1 - y0)
            return x[i] + f * (x[i + 1] - x[i])
    return None


def zigzag_teeth(rec, prominence=DEFAULT_PROMINENCE, level=0.95):
    """Tooth widths DFB at ``level`` of each tooth height, and NDFB.

    A tooth is the run between two consecutive minima of a stroke containing
    one maximum; its base is the higher of the two minima.
    """
    dfb, gaps = [], []
    for s in _on_strokes(rec, 3):
        x = rec.x[s.start:s.stop]
        y = rec.y[s.start:s.stop]
        mins, maxs = turning_points(y, prominence * float(y.max() - y.min()))
        for m0, m1 in zip(mins[:-1], mins[1:]):
            gaps.append(math.hypot(x[m1] - x[m0], y[m1] - y[m0]))
            inner = [m for m in maxs if m0 < m < m1]
            if len(inner) != 1:
                continue
            top = inner[0]
            base = max(y[m0], y[m1])
            lev = base + level * (y[top] - base)
            xl = _level_crossing(x, y, m0, top, lev, rising=True)
            xr = _level_crossing(x, y, top, m1, lev, rising=False)
            if xl is not None and xr is not None:
                dfb.append(abs(xr - xl))
    if not dfb:
        raise InsufficientDataError("no complete zig-zag tooth")
    dfb = np.array(dfb)
    mean_gap = float(np.mean(gaps))
    if mean_gap <= 0:
        raise DegenerateStatisticError("zero distance between minima")
    return {"DFB": dfb, "NDFB": dfb / mean_gap}


def arcade_bows(rec, prominence=DEFAULT_PROMINENCE):
    """Horizontal gaps DBB between neighbouring bows at half the first bow's height."""
    first = None
    for s in _on_strokes(rec, 3):
        y = rec.y[s.start:s.stop]
        _, maxs = turning_points(y, prominence * float(y.max() - y.min()))
        if maxs:
            top = s.start + maxs[0]
            base = float(rec.y[s.start:top + 1].min())
            first = base + 0.5 * (rec.y[top] - base)
            break
    if first is None:
        raise InsufficientDataError("no bow found")
    crossings = []  # (x, +1 rising / -1 falling)
    for s in _on_strokes(rec, 2):
        x = rec.x[s.start:s.stop]
        d = rec.y[s.start:s.stop] - first
        for i in range(d.size - 1):
            if d[i] < 0 <= d[i + 1] or d[i] >= 0 > d[i + 1]:
                f = -d[i] / (d[i + 1] - d[i])
                crossings.append((x[i] + f * (x[i + 1] - x[i]), 1 if d[i + 1] > d[i] else -1))
    gaps = [abs(xu - xd) for (xd, sd), (xu, su) in zip(crossings[:-1], crossings[1:])
            if sd == -1 and su == 1]
    if not gaps:
        raise InsufficientDataError("fewer than 2 bows")
    return {"DBB": np.array(gaps)}


def stroke_heights(rec):
    """Vertical extent of every on-surface stroke."""
    strokes = _on_strokes(rec)
    if not strokes:
        raise InsufficientDataError("no on-surface stroke")
    return np.array([float(np.ptp(rec.y[s.start:s.stop])) for s in strokes])


# --------------------------------------------------------------------------
# intersections

def _polylines(rec):
    """On-surface polylines with consecutive duplicate points removed."""
    out = []
    for s in _on_strokes(rec):
        p = np.column_stack((rec.x[s.start:s.stop], rec.y[s.start:s.stop]))
        keep = np.ones(len(p), dtype=bool)
        keep[1:] = np.any(p[1:] != p[:-1], axis=1)
        out.append(p[keep])
    return out


def _orient(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def segments_intersect(p1, p2, q1, q2):
    """Closed-segment intersection test, vectorised over the leading axis.

    Collinear overlapping segments count as intersecting.
    """
    p1x, p1y, p2x, p2y = p1[..., 0], p1[..., 1], p2[..., 0], p2[..., 1]
    q1x, q1y, q2x, q2y = q1[..., 0], q1[..., 1], q2[..., 0], q2[..., 1]
    d1 = _orient(q1x, q1y, q2x, q2y, p1x, p1y)
    d2 = _orient(q1x, q1y, q2x, q2y, p2x, p2y)
    d3 = _orient(p1x, p1y, p2x, p2y, q1x, q1y)
    d4 = _orient(p1x, p1y, p2x, p2y, q2x, q2y)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_seg(ax, ay, bx, by, cx, cy):
        return ((np.minimum(ax, bx) <= cx) & (cx <= np.maximum(ax, bx))
                & (np.minimum(ay, by) <= cy) & (cy <= np.maximum(ay, by)))

    touch = (((d1 == 0) & on_seg(q1x, q1y, q2x, q2y, p1x, p1y))
             | ((d2 == 0) & on_seg(q1x, q1y, q2x, q2y, p2x, p2y))
             | ((d3 == 0) & on_seg(p1x, p1y, p2x, p2y, q1x, q1y))
             | ((d4 == 0) & on_seg(p1x, p1y, p2x, p2y, q2x, q2y)))
    return proper | touch


def _candidate_pairs(seg):
    """Index pairs whose x-extents overlap (sort-and-sweep on xmin)."""
    xmin = np.minimum(seg[:, 0], seg[:, 2])
    xmax = np.maximum(seg[:, 0], seg[:, 2])
    order = np.argsort(xmin, kind="stable")
    xs = xmin[order]
    end = np.searchsorted(xs, xmax[order], side="right")
    counts = end - np.arange(order.size) - 1
    counts = np.maximum(counts, 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    first = np.repeat(np.arange(order.size), counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    second = first + 1 + offs
    return order[first], order[second]


def count_intersections(polylines):
    """Intersection counts for a list of polylines (arrays of shape (n, 2)).

    Returns ``(intra, inter)``: a per-polyline list of self-intersections
    (adjacent segments excluded) and the number of crossings between
    segments of different polylines.
    """
    segs, owner, local = [], [], []
    for k, p in enumerate(polylines):
        if len(p) < 2:
            continue
        segs.append(np.hstack((p[:-1], p[1:])))
        owner.append(np.full(len(p) - 1, k))
        local.append(np.arange(len(p) - 1))
    intra = [0] * len(polylines)
    if not segs:
        return intra, 0
    seg = np.vstack(segs)
    owner = np.concatenate(owner)
    local = np.concatenate(local)
    i, j = _candidate_pairs(seg)
    ymin = np.minimum(seg[:, 1], seg[:, 3])
    ymax = np.maximum(seg[:, 1], seg[:, 3])
    keep = (ymin[i] <= ymax[j]) & (ymin[j] <= ymax[i])
    same = owner[i] == owner[j]
    keep &= ~(same & (np.abs(local[i] - local[j]) == 1))
    i, j = i[keep], j[keep]
    hit = segments_intersect(seg[i, :2], seg[i, 2:], seg[j, :2], seg[j, 2:])
    same = owner[i] == owner[j]
    counts = np.bincount(owner[i][hit & same], minlength=len(polylines))
    intra = [int(c) for c in counts[:len(polylines)]]
    inter = int(np.count_nonzero(hit & ~same))
    return intra, inter


def path_length(p):
    return float(np.sum(np.hypot(np.diff(p[:, 0]), np.diff(p[:, 1])))) if len(p) > 1 else 0.0


def intersections(rec):
    """NIAI/RNIAI per on-surface stroke and NIEI/RNIEI for the recording.

    Relative counts are crossings per 100 mm of on-surface path.
    """
    polys = _polylines(rec)
    intra, inter = count_intersections(polys)
    lengths = np.array([path_length(p) for p in polys])
    total = float(lengths.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        rniai = np.where(lengths > 0, 100.0 * np.array(intra) / np.where(lengths > 0, lengths, 1), np.nan)
    return {
        "NIAI": np.array(intra, dtype=float),
        "RNIAI": rniai[np.isfinite(rniai)],
        "NIEI": inter,
        "RNIEI": 100.0 * inter / total if total > 0 else None,
    }


def densities(rec):
    """ADEN (path length per bounding-box area, 1/mm) and PDEN (samples per mm of path)."""
    on = rec.pen_state == 1
    if np.count_nonzero(on) < 2:
        raise InsufficientDataError("need 2+ on-surface samples")
    length = sum(path_length(p) for p in _polylines(rec))
    if length <= 0:
        raise DegenerateStatisticError("zero on-surface path length")
    area = float(np.ptp(rec.x[on]) * np.ptp(rec.y[on]))
    return {
        "ADEN": length / area if area > 0 else None,
        "PDEN": np.count_nonzero(on) / length,
    }


# --------------------------------------------------------------------------
# spiral

@dataclass(frozen=True, eq=False)
class SpiralUnwrap:
    theta: np.ndarray
    r: np.ndarray
    center: tuple


def _unwrap(x, y, cx, cy):
    dx, dy = x - cx, y - cy
    r = np.hypot(dx, dy)
    keep = r > 0.01 * r.max()
    theta = np.unwrap(np.arctan2(dy[keep], dx[keep]))
    if theta.size and theta[-1] < theta[0]:
        theta = -theta
    drop = float(np.sum(np.clip(-np.diff(theta), 0, None))) if theta.size > 1 else 0.0
    return theta, r[keep], drop


def unwrap_spiral(rec):
    """Polar representation about the first on-surface sample (centroid as fallback).

    The angle is made non-decreasing with a running maximum.
    """
    on = rec.pen_state == 1
    x, y = rec.x[on], rec.y[on]
    if x.size < 10:
        raise SpiralGeometryError("too few on-surface samples for a spiral")
    best = None
    for cx, cy in ((x[0], y[0]), (float(x.mean()), float(y.mean()))):
        theta, r, drop = _unwrap(x, y, cx, cy)
        if best is None or drop < best[2] - 1e-9:
            best = (theta, r, drop, (float(cx), float(cy)))
        if drop <= 0.05 * max(theta[-1] - theta[0], 1e-12):
            break
    theta, r, _, center = best
    theta = np.maximum.accumulate(theta)
    return SpiralUnwrap(theta, r, center)


def spiral_features(rec, min_turns=1.5, grid_step=math.pi / 64):
    """DoS, MDS, 2ndSm, SPI, TGHTNS, SWVI and 1stZC of a spiral drawing."""
    sp = unwrap_spiral(rec)
    turns = (sp.theta[-1] - sp.theta[0]) / (2 * math.pi)
    if turns < min_turns:
        raise SpiralGeometryError(f"spiral has {turns:.2f} turns, need {min_turns}")
    # r as a function of theta on a uniform angular grid
    inc = np.concatenate(([True], np.diff(sp.theta) > 0))
    th, r = sp.theta[inc], sp.r[inc]
    grid = np.arange(th[0], th[-1], grid_step)
    rg = np.interp(grid, th, r)
    b, a = np.polyfit(grid, rg, 1)
    if b == 0:
        raise SpiralGeometryError("spiral has zero pitch")
    resid = rg - (a + b * grid)
    dos = float(np.sqrt(np.mean(resid ** 2)) / abs(b))
    wgrid = np.arange(th[0], th[-1] - 2 * math.pi, math.pi / 8)
    widths = np.interp(wgrid + 2 * math.pi, th, r) - np.interp(wgrid, th, r)
    try:
        swvi = stats.ncv(widths)
    except DegenerateStatisticError:
        swvi = None
    de = np.gradient(resid, grid)
    tol = 1e-6 * abs(b)
    signs = np.sign(de[np.abs(de) > tol])
    zc = int(np.count_nonzero(signs[1:] != signs[:-1])) if signs.size > 1 else 0
    d2 = np.gradient(np.gradient(rg, grid), grid)
    vx, vy = sample_velocity(rec)
    speed = np.hypot(vx, vy)[rec.pen_state == 1]
    speed = speed[np.isfinite(speed)]
    return {
        "DoS": dos,
        "MDS": float(np.mean(speed)) if speed.size else None,
        "2ndSm": float(np.mean(np.abs(d2))),
        "SPI": 1.0 / (1.0 + dos),
        "TGHTNS": stats.theil_sen_slope(grid, rg),
        "SWVI": swvi,
        "1stZC": zc / float(grid[-1] - grid[0]),
    }
