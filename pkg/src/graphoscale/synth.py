"""
Synthetic ink: task templates, lognormal stroke kinematics, manifestation
knobs and labelled cohorts.

Every on-surface stroke follows a geometric path whose arc-length position
is the cumulative sum of lognormal velocity pulses, so the rendered speed is
exactly a sigma-lognormal profile.  Manifestations are injected afterwards
by :func:`apply_manifestation`; they are controlled analogues of the real
deficits, not models of them.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr

from . import geometry
from .ink import (NOMINAL_SAMPLE_RATE, InkRecording, Sex, SubjectMeta, TaskKind,
                  format_recording, handwriting_task_for_grade)

FS = NOMINAL_SAMPLE_RATE
PRESSURE_MAX = 1023


@dataclass(frozen=True)
class SynthConfig:
    task: TaskKind
    seed: int = 0
    # geometry
    scale: float = 1.0  # overall size multiplier
    spiral_pitch: float = 8.0  # mm between turns
    spiral_turns: float = 3.5
    loop_height: float = 12.0
    loop_spacing: float = 8.0
    n_loops: int = 8
    tooth_base: float = 8.0
    tooth_height: float = 10.0
    n_teeth: int = 8
    bow_radius: float = 5.0
    n_bows: int = 8
    x_height: float = 4.0  # pseudo-text letter body
    height_jitter: float = 0.06  # relative sd of letter heights
    n_words: int | None = None  # None: by task
    # kinematics
    speed: float = 30.0  # mm/s mean on-surface speed
    pulse_length: float = 7.0  # mm travelled per lognormal pulse
    pulse_sigma: float = 0.3
    timing_jitter: float = 0.15  # relative sd of pulse spacing and amplitude
    air_speed: float = 60.0
    dwell: float = 0.25  # s of hover before each in-air move
    # noise and sensor channels
    tremor_amplitude: float = 0.0  # mm
    tremor_frequency: float = 8.0  # Hz
    pressure_level: float = 520.0
    pressure_variation: float = 0.12  # relative, slow
    tilt_level: float = 52.0
    tilt_drift: float = 3.0  # degrees, slow
    azimuth_level: float = 215.0
    time_dilation: float = 1.0
    air_dilation: float = 1.0

    def __post_init__(self):
        for name in ("scale", "spiral_pitch", "spiral_turns", "loop_height", "loop_spacing",
                     "tooth_base", "tooth_height", "bow_radius", "x_height", "speed",
                     "pulse_length", "pulse_sigma", "air_speed", "time_dilation", "air_dilation"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("height_jitter", "timing_jitter", "dwell", "tremor_amplitude",
                     "pressure_variation", "tilt_drift"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("n_loops", "n_teeth", "n_bows"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.n_words is not None and self.n_words < 1:
            raise ValueError("n_words must be at least 1")


# --------------------------------------------------------------------------
# paths


class _Path:
    """Curve ``f(u)`` with a dense arc-length table for inversion."""

    def __init__(self, f, u0, u1, n=20001):
        self.f = f
        u = np.linspace(u0, u1, n)
        x, y = f(u)
        self.u = u
        self.s = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))))

    @property
    def length(self):
        return float(self.s[-1])

    def at(self, s):
        return self.f(np.interp(s, self.s, self.u))

    @classmethod
    def polyline(cls, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        idx = np.arange(x.size, dtype=float)
        obj = cls.__new__(cls)
        obj.f = lambda u: (np.interp(u, idx, x), np.interp(u, idx, y))
        obj.u = idx
        obj.s = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))))
        return obj


def _spiral(cfg, size):
    b = cfg.spiral_pitch * size / (2 * math.pi)
    th1 = 2 * math.pi * cfg.spiral_turns
    return _Path(lambda th: (b * th * np.cos(th), b * th * np.sin(th)), 0.0, th1)


def _loops(cfg, mode):
    """Prolate-cycloid loops; ``mode`` is 'upper', 'lower' or 'combined'."""
    a = cfg.loop_height * cfg.scale / 2
    r = cfg.loop_spacing * cfg.scale / (2 * math.pi)
    d = 1.6 * r
    n = cfg.n_loops

    def f(tau):
        x = r * tau - d * np.sin(tau)
        if mode == "upper":
            y = a * np.cos(tau)
        elif mode == "lower":
            y = -a * np.cos(tau)
        else:
            k = np.floor((tau + math.pi) / (2 * math.pi))
            lower = (k % 2) == 1
            y = np.where(lower, -a * np.cos(tau) - 2 * a, a * np.cos(tau))
        return x, y

    return _Path(f, -math.pi, 2 * math.pi * n - math.pi)


def _zigzag(cfg):
    w = cfg.tooth_base * cfg.scale
    h = cfg.tooth_height * cfg.scale
    k = np.arange(2 * cfg.n_teeth + 1)
    return _Path.polyline(k * w / 2, np.where(k % 2 == 1, h, 0.0))


def _arcade(cfg):
    rad = cfg.bow_radius * cfg.scale
    n = cfg.n_bows

    def f(u):
        k = np.clip(np.floor(u), 0, n - 1)
        phi = (u - k) * math.pi
        return 2 * rad * k + rad - rad * np.cos(phi), rad * np.sin(phi)

    return _Path(f, 0.0, float(n))


def _glyph(kind, h, rng, jitter):
    """Dense polyline of one pseudo-letter from (0, 0) to (w, 0)."""
    g = h * (1 + jitter * rng.standard_normal())
    g = max(g, 0.3 * h)
    u = np.linspace(0, 1, 60)
    if kind == "l":  # ascender loop
        tau = -math.pi + 2 * math.pi * u
        r = 0.45 * h / (2 * math.pi) * 2
        x = r * (tau + math.pi) - 1.6 * r * np.sin(tau)
        y = g * (np.cos(tau) + 1)
    elif kind == "e":
        tau = -math.pi + 2 * math.pi * u
        r = 0.5 * h / (2 * math.pi) * 2
        x = r * (tau + math.pi) - 1.5 * r * np.sin(tau)
        y = g / 2 * (np.cos(tau) + 1)
    elif kind == "n":  # two arches
        phi = 2 * math.pi * u
        x = 0.9 * h * u
        y = g * np.abs(np.sin(phi))
    elif kind == "u":
        phi = 2 * math.pi * u
        x = 0.9 * h * u
        y = g * (1 - np.abs(np.sin(phi)))
        y[0] = y[-1] = 0.0
    elif kind == "v":
        x = 0.7 * h * u
        y = g * (1 - np.abs(2 * u - 1))
    else:  # "g": descender loop
        tau = -math.pi + 2 * math.pi * u
        r = 0.45 * h / (2 * math.pi) * 2
        x = r * (tau + math.pi) - 1.6 * r * np.sin(tau)
        y = -g * (np.cos(tau) + 1)
    return x - x[0], y - y[0]


_GLYPHS = ("e", "n", "l", "u", "v", "e", "n", "g")
_WORDS_BY_TASK = {TaskKind.TSK8: 5, TaskKind.TSK9: 8, TaskKind.TSK10: 11}


def _pseudo_text(cfg, rng):
    """Words as polylines plus diacritic marks; returns list of (path, origin)."""
    h = cfg.x_height * cfg.scale
    n_words = cfg.n_words or _WORDS_BY_TASK.get(cfg.task, 8)
    line_width = 40 * h
    pieces = []
    cx, cy = 0.0, 0.0
    for _ in range(n_words):
        n_letters = int(rng.integers(2, 6))
        xs, ys = [np.zeros(1)], [np.zeros(1)]
        x_end = 0.0
        for _ in range(n_letters):
            gx, gy = _glyph(_GLYPHS[int(rng.integers(len(_GLYPHS)))], h, rng, cfg.height_jitter)
            xs.append(gx[1:] + x_end)
            ys.append(gy[1:])
            x_end += gx[-1] + 0.15 * h
            xs.append(np.array([x_end]))
            ys.append(np.array([0.0]))
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        if cx + x_end > line_width and cx > 0:
            cx, cy = 0.0, cy - 4 * h
        pieces.append((_Path.polyline(x + cx, y + cy), (cx, cy)))
        if rng.random() < 0.35:  # diacritic above the word
            dx = cx + x_end * rng.uniform(0.2, 0.8)
            dy = cy + 1.8 * h
            pieces.append((_Path.polyline([dx, dx + 0.4 * h], [dy, dy + 0.5 * h]), (dx, dy)))
        cx += x_end + 1.5 * h
    return [p for p, _ in pieces]


def _task_paths(cfg, rng):
    t = cfg.task
    if t is TaskKind.TSK1:
        return [_spiral(cfg, cfg.scale)]
    if t is TaskKind.TSK2:
        return [_spiral(cfg, cfg.scale / 2)]
    if t is TaskKind.TSK3:
        return [_loops(cfg, "upper")]
    if t is TaskKind.TSK4:
        return [_loops(cfg, "lower")]
    if t is TaskKind.TSK5:
        return [_zigzag(cfg)]
    if t is TaskKind.TSK6:
        return [_arcade(cfg)]
    if t is TaskKind.TSK7:
        return [_loops(cfg, "combined")]
    return _pseudo_text(cfg, rng)


# --------------------------------------------------------------------------
# kinematics


def _pulse_schedule(length, cfg, rng):
    """Lognormal pulses (D, t0, mu, sigma) covering ``length`` mm, t relative to stroke start."""
    k = max(1, int(round(length / cfg.pulse_length)))
    spacing = length / k / cfg.speed
    jit = cfg.timing_jitter
    amp = np.exp(jit * rng.standard_normal(k))
    D = length * amp / amp.sum()
    gaps = spacing * np.exp(jit * rng.standard_normal(k))
    onsets = np.concatenate(([0.0], np.cumsum(gaps[:-1])))
    sigma = np.full(k, cfg.pulse_sigma)
    mu = np.log(1.3 * spacing) + sigma ** 2
    t0 = onsets - 0.5 / FS
    return D, t0, mu, sigma


def _cumulative(t, D, t0, mu, sigma):
    tau = t[:, None] - t0[None, :]
    out = np.zeros_like(tau)
    pos = tau > 0
    out[pos] = ndtr((np.log(tau[pos]) - np.broadcast_to(mu, tau.shape)[pos])
                    / np.broadcast_to(sigma, tau.shape)[pos])
    return out @ D


def _end_time(t0, mu, sigma):
    return float(np.max(t0 + np.exp(mu + 2.8 * sigma)))


class _Builder:
    def __init__(self, cfg, rng):
        self.cfg = cfg
        self.rng = rng
        self.cols = {c: [] for c in ("x", "y", "pen")}
        self.n = 0

    def _emit(self, x, y, pen):
        self.cols["x"].append(np.asarray(x, float))
        self.cols["y"].append(np.asarray(y, float))
        self.cols["pen"].append(np.full(np.size(x), pen, dtype=np.int8))
        self.n += np.size(x)

    def stroke(self, path):
        D, t0, mu, sigma = _pulse_schedule(path.length, self.cfg, self.rng)
        m = max(2, int(math.ceil(_end_time(t0, mu, sigma) * FS)) + 1)
        s = np.minimum(_cumulative(np.arange(m) / FS, D, t0, mu, sigma), path.length)
        x, y = path.at(s)
        self._emit(x, y, 1)
        return x[-1], y[-1]

    def air(self, p, q):
        cfg = self.cfg
        dwell = int(round(cfg.dwell * self.rng.uniform(0.6, 1.4) * FS))
        dist = math.hypot(q[0] - p[0], q[1] - p[1])
        dur = 0.15 + dist / cfg.air_speed
        m = max(2, int(round(dur * FS)))
        u = np.arange(m) / (m - 1)
        # minimum-jerk profile for the hover transfer
        w = 10 * u ** 3 - 15 * u ** 4 + 6 * u ** 5
        hx = np.full(dwell, p[0]) if dwell else np.empty(0)
        hy = np.full(dwell, p[1]) if dwell else np.empty(0)
        # the transfer stops one step short of q; the next stroke starts there
        w = w[:-1] if m > 2 else w[:1]
        self._emit(np.concatenate((hx, p[0] + (q[0] - p[0]) * w)),
                   np.concatenate((hy, p[1] + (q[1] - p[1]) * w)), 0)


def _smooth_noise(n, rng, knot_dt=0.5, fs=FS):
    """Cubic-interpolated random knots; roughly unit variance, smooth."""
    span = n / fs
    k = max(4, int(math.ceil(span / knot_dt)) + 2)
    knots = rng.standard_normal(k)
    tk = np.arange(k) * knot_dt
    return CubicSpline(tk, knots)(np.arange(n) / fs)


def generate(config):
    """Render one synthetic recording (mm, seconds, 133 Hz)."""
    cfg = config
    rng = np.random.default_rng([cfg.seed, cfg.task.index])
    paths = _task_paths(cfg, rng)
    b = _Builder(cfg, rng)
    start = paths[0].at(np.array([0.0]))
    first = (float(start[0][0]), float(start[1][0]))
    b.air((first[0] - 10.0, first[1] + 6.0), first)
    here = first
    for k, path in enumerate(paths):
        p0 = path.at(np.array([0.0]))
        p0 = (float(p0[0][0]), float(p0[1][0]))
        if k:
            b.air(here, p0)
        here = b.stroke(path)
    b.air(here, (here[0] + 8.0, here[1] + 5.0))

    x = np.concatenate(b.cols["x"])
    y = np.concatenate(b.cols["y"])
    pen = np.concatenate(b.cols["pen"])
    n = x.size
    t = np.arange(n) / FS
    on = pen == 1
    if cfg.tremor_amplitude > 0:
        phase = rng.uniform(0, 2 * math.pi, 2)
        w = 2 * math.pi * cfg.tremor_frequency * t
        x = x + on * cfg.tremor_amplitude * np.sin(w + phase[0])
        y = y + on * cfg.tremor_amplitude * np.sin(w + phase[1])
    pressure = cfg.pressure_level * (1 + cfg.pressure_variation * _smooth_noise(n, rng))
    pressure = np.where(on, np.clip(np.round(pressure), 1, PRESSURE_MAX), 0.0)
    tilt = np.clip(np.round(cfg.tilt_level + cfg.tilt_drift * _smooth_noise(n, rng, 1.0), 1), 0, 90)
    azimuth = np.round(cfg.azimuth_level + 4.0 * _smooth_noise(n, rng, 1.5), 1) % 360
    rec = InkRecording(x, y, t, pen, pressure, tilt, azimuth, FS, cfg.task)
    if cfg.time_dilation != 1.0:
        rec = apply_manifestation(rec, "slow", cfg.time_dilation)
    if cfg.air_dilation != 1.0:
        rec = apply_manifestation(rec, "long-in-air", cfg.air_dilation)
    return rec


# --------------------------------------------------------------------------
# manifestation knobs

KNOB_DEFAULTS = {
    "slow": 2.0,  # time-dilation factor
    "dysfluent": 0.5,  # tremor amplitude, mm at 8 Hz
    "unstable-pressure": 0.35,  # relative sd of fast pressure noise
    "unstable-tilt": 6.0,  # degrees sd of fast tilt noise
    "long-in-air": 3.0,  # in-air dilation factor
    "uneven-amplitude": 0.2,  # relative sd of per-letter height
    "uneven-spacing": 0.35,  # log-sd of horizontal stretching
    "overwriting": 0.4,  # fraction of strokes retraced
    "monotone": 0.8,  # blend of speed towards its stroke mean
    "fatigue": 1.0,  # final slow-down (1 = half speed at the end)
    "fragmented": 1.5,  # extra pen lifts per on-surface second
    "uniform-amplitude": 0.9,  # blend of stroke heights towards their median
    "line-drift": 1.2,  # mm sd of baseline wander
}

KNOB_TARGETS = {
    "slow": ("low-velocity", "higher-duration", "low-acceleration"),
    "dysfluent": ("velocity-dysfluency",),
    "unstable-pressure": ("unstable-pressure",),
    "unstable-tilt": ("unstable-tilt",),
    "long-in-air": ("visuospatial-deficits",),
    "uneven-amplitude": ("amplitude-instability",),
    "uneven-spacing": ("unstable-density",),
    "overwriting": ("overwriting",),
    "monotone": ("low-velocity-variability", "low-acceleration-variability"),
    "fatigue": ("decreasing-velocity", "decreasing-acceleration"),
    "fragmented": ("short-strokes",),
    "uniform-amplitude": ("uniform-amplitude",),
    "line-drift": ("off-line",),
}

KNOBS = tuple(KNOB_DEFAULTS)


def knob_for_manifestation(manifestation_id):
    for knob, targets in KNOB_TARGETS.items():
        if manifestation_id in targets:
            return knob
    raise KeyError(manifestation_id)


def _ar1(n, rho, rng):
    e = rng.standard_normal(n) * math.sqrt(1 - rho * rho)
    out = np.empty(n)
    acc = rng.standard_normal()
    for i in range(n):
        acc = rho * acc + e[i]
        out[i] = acc
    return out


def _retime(rec, dt):
    t = np.concatenate(([rec.t[0]], rec.t[0] + np.cumsum(dt)))
    return rec.replace(t=t)


def _resample_on_grid(rec):
    """Back onto the device's uniform clock; cubic in x/y so retiming adds no kinks."""
    cols = {c: [] for c in ("x", "y", "t", "pen_state", "pressure", "tilt", "azimuth")}
    for s in rec.strokes:
        sl = slice(s.start, s.stop)
        ts = rec.t[sl]
        grid = np.arange(np.ceil(ts[0] * FS - 1e-9), np.floor(ts[-1] * FS + 1e-9) + 1) / FS
        if grid.size == 0:
            continue
        grid = np.clip(grid, ts[0], ts[-1])
        for c in ("x", "y"):
            v = getattr(rec, c)[sl]
            cols[c].append(CubicSpline(ts, v)(grid) if ts.size > 3 else np.interp(grid, ts, v))
        for c in ("pressure", "tilt", "azimuth"):
            cols[c].append(np.round(np.interp(grid, ts, getattr(rec, c)[sl]), 1))
        cols["t"].append(grid)
        cols["pen_state"].append(np.full(grid.size, rec.pen_state[s.start]))
    return rec.replace(**{c: np.concatenate(v) for c, v in cols.items()}, sample_rate=FS)


def _knob_slow(rec, f, rng):
    return rec.replace(t=rec.t[0] + (rec.t - rec.t[0]) * f, sample_rate=rec.sample_rate / f)


def _knob_long_in_air(rec, f, rng):
    dt = np.diff(rec.t)
    air = rec.pen_state[:-1] == 0
    return _retime(rec, np.where(air, dt * f, dt))


def _knob_fatigue(rec, beta, rng):
    T = rec.duration
    u = rec.t - rec.t[0]
    return rec.replace(t=rec.t[0] + u + beta * u * u / (2 * T))


def _knob_monotone(rec, alpha, rng):
    dt = np.diff(rec.t)
    ds = np.hypot(np.diff(rec.x), np.diff(rec.y))
    new = dt.copy()
    for s in rec.strokes:
        if not s.on_surface or len(s) < 3:
            continue
        sl = slice(s.start, s.stop - 1)
        total = dt[sl].sum()
        vbar = ds[sl].sum() / total
        if vbar <= 0:
            continue
        blend = (1 - alpha) * dt[sl] + alpha * ds[sl] / vbar
        blend = np.maximum(blend, 0.05 * dt[sl])
        new[sl] = blend * total / blend.sum()
    return _resample_on_grid(_retime(rec, new))


def _knob_dysfluent(rec, amp, rng):
    phase = rng.uniform(0, 2 * math.pi, 2)
    w = 2 * math.pi * 8.0 * rec.t
    on = rec.pen_state == 1
    return rec.replace(x=rec.x + on * amp * np.sin(w + phase[0]),
                       y=rec.y + on * amp * np.sin(w + phase[1]))


def _knob_pressure(rec, sd, rng):
    on = rec.pen_state == 1
    noise = _ar1(len(rec), 0.8, rng)
    p = np.round(rec.pressure * np.exp(sd * noise))
    return rec.replace(pressure=np.where(on, np.clip(p, 1, PRESSURE_MAX), rec.pressure))


def _knob_tilt(rec, sd, rng):
    noise = _ar1(len(rec), 0.8, rng)
    return rec.replace(tilt=np.clip(np.round(rec.tilt + sd * noise, 1), 0, 90))


def _per_max_factor(y, sd, rng, prominence=geometry.DEFAULT_PROMINENCE):
    """Multiplicative factor per sample, random per vertical maximum."""
    n = y.size
    rng_y = float(y.max() - y.min())
    peaks = []
    if n >= 3 and rng_y > 0:
        _, peaks = geometry.turning_points(y, prominence * rng_y)
    f = np.exp(sd * rng.standard_normal(len(peaks) + 1))
    if not peaks:
        return np.full(n, f[0])
    # factor is constant from one minimum-side midpoint to the next
    pk = np.asarray(peaks, dtype=int)
    edges = np.concatenate(([0], (pk[:-1] + pk[1:]) // 2, [n]))
    out = np.empty(n)
    for k in range(len(peaks)):
        out[edges[k]:edges[k + 1]] = f[k]
    return out


def _knob_uneven_amplitude(rec, sd, rng):
    y = rec.y.copy()
    strokes = [s for s in rec.strokes if s.on_surface]
    for s in strokes:
        sl = slice(s.start, s.stop)
        seg = y[sl]
        base = float(seg.min())  # letters keep sitting on their line
        f = _per_max_factor(seg, sd, rng) * math.exp(sd * rng.standard_normal())
        y[sl] = base + (seg - base) * f
    return _reconnect(rec, rec.x, y)


def _knob_uniform_amplitude(rec, alpha, rng):
    y = rec.y.copy()
    strokes = [s for s in rec.strokes if s.on_surface and len(s) > 1]
    heights = np.array([np.ptp(rec.y[s.start:s.stop]) for s in strokes])
    if heights.size == 0:
        return rec
    target = float(np.median(heights))
    for s, h in zip(strokes, heights):
        if h <= 0:
            continue
        sl = slice(s.start, s.stop)
        base = float(rec.y[sl].min())
        f = (1 - alpha) + alpha * target / h
        y[sl] = base + (rec.y[sl] - base) * f
    return _reconnect(rec, rec.x, y)


def _warp(v, sd, rng, knot=6.0):
    lo, hi = float(v.min()), float(v.max())
    k = max(2, int(math.ceil((hi - lo) / knot)) + 1)
    edges = lo + np.arange(k) * knot
    slopes = np.exp(sd * rng.standard_normal(k - 1))
    mapped = np.concatenate(([lo], lo + np.cumsum(slopes * knot)))
    return np.interp(v, edges, mapped)


def _knob_uneven_spacing(rec, sd, rng):
    return rec.replace(x=_warp(rec.x, sd, rng))


def _knob_line_drift(rec, sd, rng):
    lo, hi = float(rec.x.min()), float(rec.x.max())
    k = max(2, int(math.ceil((hi - lo) / 5.0)) + 1)
    knots = lo + np.arange(k) * 5.0
    offs = sd * rng.standard_normal(k)
    return rec.replace(y=rec.y + np.interp(rec.x, knots, offs))


def _reconnect(rec, x, y):
    """Keep in-air hover transfers continuous after moving on-surface samples."""
    x = np.array(x, dtype=float)
    y = np.array(y, dtype=float)
    strokes = rec.strokes
    for k, s in enumerate(strokes):
        if s.on_surface:
            continue
        prev_end = strokes[k - 1].stop - 1 if k > 0 else None
        next_start = strokes[k + 1].start if k + 1 < len(strokes) else None
        sl = slice(s.start, s.stop)
        m = len(s)
        w = np.linspace(0, 1, m + 2)[1:-1]
        ox, oy = rec.x[sl], rec.y[sl]
        dx0 = x[prev_end] - rec.x[prev_end] if prev_end is not None else 0.0
        dy0 = y[prev_end] - rec.y[prev_end] if prev_end is not None else 0.0
        dx1 = x[next_start] - rec.x[next_start] if next_start is not None else dx0
        dy1 = y[next_start] - rec.y[next_start] if next_start is not None else dy0
        if prev_end is None:
            dx0, dy0 = dx1, dy1
        x[sl] = ox + dx0 + (dx1 - dx0) * w
        y[sl] = oy + dy0 + (dy1 - dy0) * w
    return rec.replace(x=x, y=y)


def _splice(rec, pieces):
    """Concatenate channel pieces (dicts) and re-stamp time at the median step."""
    dt = float(np.median(np.diff(rec.t)))
    cols = {c: np.concatenate([p[c] for p in pieces])
            for c in ("x", "y", "pen_state", "pressure", "tilt", "azimuth")}
    cols["t"] = rec.t[0] + np.arange(cols["x"].size) * dt
    return rec.replace(**cols)


def _slice_cols(rec, sl):
    return {c: getattr(rec, c)[sl] for c in ("x", "y", "pen_state", "pressure", "tilt", "azimuth")}


def _knob_overwriting(rec, frac, rng):
    strokes = [s for s in rec.strokes if s.on_surface and len(s) >= 20]
    if not strokes:
        return rec
    m = max(1, int(round(frac * len(strokes))))
    if len(strokes) == 1:
        # single-stroke task: retrace several stretches of the one stroke
        chosen = [strokes[0]] * max(2, m * 4)
    else:
        chosen = [strokes[i] for i in sorted(rng.choice(len(strokes), m, replace=False))]
    inserts = {}
    for s in chosen:
        n = len(s)
        a = s.start + int(rng.integers(0, max(1, n // 2)))
        b = min(s.stop, a + max(15, n // 4))
        inserts.setdefault(s.stop, []).append((a, b))
    pieces = []
    pos = 0
    for stop in sorted(inserts):
        pieces.append(_slice_cols(rec, slice(pos, stop)))
        end = stop - 1
        for a, b in inserts[stop]:
            seg = _slice_cols(rec, slice(a, b))
            jx = 0.3 * rng.standard_normal() + 0.15 * np.sin(np.linspace(0, 6, b - a))
            jy = 0.3 * rng.standard_normal() + 0.15 * np.cos(np.linspace(0, 6, b - a))
            hop = 12
            w = np.linspace(0, 1, hop + 2)[1:-1]
            last = pieces[-1]
            px, py = last["x"][-1], last["y"][-1]
            qx, qy = seg["x"][0] + jx[0], seg["y"][0] + jy[0]
            pieces.append({"x": px + (qx - px) * w, "y": py + (qy - py) * w,
                           "pen_state": np.zeros(hop, np.int8), "pressure": np.zeros(hop),
                           "tilt": np.full(hop, rec.tilt[end]), "azimuth": np.full(hop, rec.azimuth[end])})
            seg = dict(seg, x=seg["x"] + jx, y=seg["y"] + jy,
                       pen_state=np.ones(b - a, np.int8))
            pieces.append(seg)
            rx, ry = rec.x[end], rec.y[end]
            pieces.append({"x": seg["x"][-1] + (rx - seg["x"][-1]) * w,
                           "y": seg["y"][-1] + (ry - seg["y"][-1]) * w,
                           "pen_state": np.zeros(hop, np.int8), "pressure": np.zeros(hop),
                           "tilt": np.full(hop, rec.tilt[end]), "azimuth": np.full(hop, rec.azimuth[end])})
        pos = stop
    pieces.append(_slice_cols(rec, slice(pos, len(rec))))
    return _splice(rec, pieces)


def _knob_fragmented(rec, rate, rng):
    pen = rec.pen_state.copy()
    pressure = rec.pressure.copy()
    lift = 4
    for s in rec.strokes:
        if not s.on_surface or len(s) < 4 * lift:
            continue
        dur = rec.t[s.stop - 1] - rec.t[s.start]
        k = int(rng.poisson(rate * dur)) + 1
        cuts = rng.integers(s.start + 2 * lift, s.stop - 2 * lift, size=k)
        for c in cuts:
            pen[c:c + lift] = 0
            pressure[c:c + lift] = 0
    return rec.replace(pen_state=pen, pressure=pressure)


_KNOBS = {
    "slow": _knob_slow,
    "dysfluent": _knob_dysfluent,
    "unstable-pressure": _knob_pressure,
    "unstable-tilt": _knob_tilt,
    "long-in-air": _knob_long_in_air,
    "uneven-amplitude": _knob_uneven_amplitude,
    "uneven-spacing": _knob_uneven_spacing,
    "overwriting": _knob_overwriting,
    "monotone": _knob_monotone,
    "fatigue": _knob_fatigue,
    "fragmented": _knob_fragmented,
    "uniform-amplitude": _knob_uniform_amplitude,
    "line-drift": _knob_line_drift,
}


def apply_manifestation(rec, knob, severity=None, seed=0):
    """Inject a controlled manifestation into a recording.

    Parameters
    ----------
    rec : InkRecording
    knob : str
        One of :data:`KNOBS`.
    severity : float, optional
        Knob strength (meaning per knob in :data:`KNOB_DEFAULTS`).
    seed : int
    """
    if knob not in _KNOBS:
        raise ValueError(f"unknown manifestation knob {knob!r}; expected one of {', '.join(KNOBS)}")
    sev = KNOB_DEFAULTS[knob] if severity is None else float(severity)
    if sev < 0:
        raise ValueError("severity must be non-negative")
    rng = np.random.default_rng([seed, KNOBS.index(knob), 7])
    return _KNOBS[knob](rec, sev, rng)


# --------------------------------------------------------------------------
# cohorts


def maturity_config(task, grade, rng, seed):
    """Baseline SynthConfig for a child of ``grade`` with individual variation."""
    g = float(grade)
    trait = rng.standard_normal(6)
    return SynthConfig(
        task=task,
        seed=seed,
        scale=float(np.exp(0.05 * trait[0])) * (1.25 - 0.06 * g if task.is_handwriting else 1.0),
        speed=(20.0 + 5.0 * g) * float(np.exp(0.12 * trait[1])),
        pulse_length=7.0 + 0.6 * g,
        timing_jitter=max(0.05, 0.28 - 0.04 * g + 0.02 * trait[2]),
        dwell=(0.35 - 0.04 * g) * float(np.exp(0.15 * trait[3])),
        pressure_level=480 + 30 * g + 40 * trait[4],
        tilt_level=52 + 3 * trait[5],
        height_jitter=0.06,
    )


@dataclass(frozen=True)
class CohortSpec:
    grades: tuple = (0, 1, 2, 3, 4)
    intact_per_grade: int = 50
    injected: dict = field(default_factory=dict)  # knob -> subjects per grade
    severity: float = 1.0  # multiplier on knob defaults
    tasks: tuple | None = None  # None: all tasks applicable to the grade
    seed: int = 0


@dataclass
class CohortSubject:
    meta: SubjectMeta
    knobs: tuple
    recordings: dict  # TaskKind -> InkRecording


def subject_tasks(grade, tasks=None):
    hw = handwriting_task_for_grade(grade)
    pool = [t for t in TaskKind if t.is_graphomotor] + ([hw] if hw else [])
    return [t for t in pool if tasks is None or t in tasks]


def _labels(rng, injected_severity):
    if injected_severity <= 0:
        oee = int(rng.choice([0, 0, 0, 1, 1, 2]))
        hpsq = int(np.clip(round(rng.normal(11, 4)), 0, 40))
    else:
        oee = 4 if injected_severity >= 1.5 or rng.random() < 0.3 else 3
        hpsq = int(np.clip(round(rng.normal(21, 5)), 0, 40))
    return oee, hpsq


def generate_subject(sid, grade, knobs=(), severity=1.0, tasks=None, seed=0):
    rng = np.random.default_rng([seed, grade, 11])
    sex = Sex.FEMALE if rng.random() < 0.5 else Sex.MALE
    oee, hpsq = _labels(rng, severity if knobs else 0.0)
    meta = SubjectMeta(sid, grade, sex, oee, hpsq)
    recs = {}
    for task in subject_tasks(grade, tasks):
        cfg = maturity_config(task, grade, np.random.default_rng([seed, grade, 13]), seed)
        rec = generate(cfg)
        for knob in knobs:
            rec = apply_manifestation(rec, knob, KNOB_DEFAULTS[knob] * severity,
                                      seed=seed * 31 + task.index)
        recs[task] = rec.replace(subject=meta)
    return CohortSubject(meta, tuple(knobs), recs)


def cohort_plan(spec):
    """Deterministic list of (subject id, grade, knobs, seed) without rendering."""
    plan = []
    ss = np.random.SeedSequence(spec.seed)
    for grade in spec.grades:
        rows = [((), i) for i in range(spec.intact_per_grade)]
        for knob in sorted(spec.injected):
            rows += [((knob,), i) for i in range(spec.injected[knob])]
        for knobs, i in rows:
            tag = knobs[0] if knobs else "intact"
            sid = f"g{grade}-{tag}-{i:03d}"
            seed = int(np.random.default_rng([spec.seed, grade, i, _tag_code(tag)]).integers(2 ** 31))
            plan.append((sid, grade, knobs, seed))
    del ss
    return plan


def _tag_code(tag):
    return sum((k + 1) * ord(c) for k, c in enumerate(tag))


def generate_cohort(spec):
    """Render every subject of the cohort."""
    return [generate_subject(sid, grade, knobs, spec.severity, spec.tasks, seed)
            for sid, grade, knobs, seed in cohort_plan(spec)]


MANIFEST_COLUMNS = ("subject", "grade", "sex", "oee", "hpsq", "knobs")


def manifest_csv(subjects):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for s in subjects:
        m = s.meta
        w.writerow([m.id, m.grade, m.sex.value, "" if m.oee is None else m.oee,
                    "" if m.hpsq is None else m.hpsq, ";".join(s.knobs)])
    return buf.getvalue()


def read_manifest(path):
    """Map subject id -> (SubjectMeta, knobs) from a cohort manifest CSV."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            meta = SubjectMeta(row["subject"], int(row["grade"]), Sex(row.get("sex") or "U"),
                               int(row["oee"]) if row.get("oee") else None,
                               int(row["hpsq"]) if row.get("hpsq") else None)
            knobs = tuple(k for k in (row.get("knobs") or "").split(";") if k)
            out[meta.id] = (meta, knobs)
    return out


def write_cohort(subjects, root):
    """Write ``root/manifest.csv`` and ``root/<subject>/<TSKn>.txt``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.csv").write_text(manifest_csv(subjects), encoding="utf-8")
    for s in subjects:
        d = root / s.meta.id
        d.mkdir(exist_ok=True)
        for task, rec in s.recordings.items():
            (d / f"{task.name}.txt").write_text(format_recording(rec), encoding="utf-8")
    return root
