"""
Digitizer recordings: data model, text-file ingestion, stroke segmentation
and uniform resampling.

Recording file format (UTF-8, LF line endings)::

    <N>
    x y t pen_state azimuth tilt pressure      # N lines, whitespace separated

``x``/``y`` are device counts (or millimetres), ``t`` device ticks (or
seconds), ``pen_state`` is 1 on-surface and 0 in-air.  A :class:`DeviceProfile`
supplies the counts-to-millimetre and ticks-to-second factors; the default
profile is the identity.  Rows sharing a timestamp are collapsed, keeping the
last one.
"""

import dataclasses
import enum
import functools
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, IntegrityError, ParseError

NOMINAL_SAMPLE_RATE = 133.0


class TaskKind(enum.Enum):
    """Acquisition-protocol tasks; value is (index, description)."""

    TSK1 = (1, "Archimedean spiral")
    TSK2 = (2, "half-sized Archimedean spiral")
    TSK3 = (3, "upper loops")
    TSK4 = (4, "lower loops")
    TSK5 = (5, "zig-zag line")
    TSK6 = (6, "arcade")
    TSK7 = (7, "upper and lower loops combined")
    TSK8 = (8, "paragraph copy, 1st grade")
    TSK9 = (9, "paragraph copy, 2nd grade")
    TSK10 = (10, "paragraph copy, 3rd/4th grade")

    @property
    def index(self):
        return self.value[0]

    @property
    def description(self):
        return self.value[1]

    @property
    def is_graphomotor(self):
        return self.index <= 7

    @property
    def is_handwriting(self):
        return self.index >= 8

    @classmethod
    def from_index(cls, i):
        return cls[f"TSK{int(i)}"]

    @classmethod
    def parse(cls, s):
        s = str(s).strip().upper()
        if s.isdigit():
            return cls.from_index(s)
        try:
            return cls[s]
        except KeyError:
            raise ValueError(f"unknown task {s!r}") from None


def handwriting_task_for_grade(grade):
    """Paragraph-copy task performed by a child of ``grade`` (None for kindergarten)."""
    if grade <= 0:
        return None
    return {1: TaskKind.TSK8, 2: TaskKind.TSK9}.get(grade, TaskKind.TSK10)


class Sex(str, enum.Enum):
    FEMALE = "F"
    MALE = "M"
    UNKNOWN = "U"


@dataclass(frozen=True)
class SubjectMeta:
    id: str
    grade: int
    sex: Sex = Sex.UNKNOWN
    oee: int | None = None
    hpsq: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "sex", Sex(self.sex))
        if not 0 <= int(self.grade) <= 4:
            raise ValueError(f"grade {self.grade} outside 0..4")
        if self.oee is not None and not 0 <= int(self.oee) <= 4:
            raise ValueError(f"OEE {self.oee} outside 0..4")


@dataclass(frozen=True)
class Sample:
    x: float
    y: float
    t: float
    pen_state: int
    pressure: float
    tilt: float
    azimuth: float


class StrokeKind(str, enum.Enum):
    ON_SURFACE = "on-surface"
    IN_AIR = "in-air"


@dataclass(frozen=True)
class Stroke:
    start: int
    stop: int  # exclusive
    kind: StrokeKind

    @property
    def sample_range(self):
        return range(self.start, self.stop)

    def __len__(self):
        return self.stop - self.start

    @property
    def on_surface(self):
        return self.kind is StrokeKind.ON_SURFACE


_CHANNELS = ("x", "y", "t", "pen_state", "pressure", "tilt", "azimuth")


@dataclass(frozen=True, eq=False)
class InkRecording:
    """Immutable pen trajectory; positions in mm, time in seconds."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    pen_state: np.ndarray
    pressure: np.ndarray
    tilt: np.ndarray
    azimuth: np.ndarray
    sample_rate: float = NOMINAL_SAMPLE_RATE
    task: TaskKind | None = None
    subject: SubjectMeta | None = None

    def __post_init__(self):
        n = None
        for name in _CHANNELS:
            dtype = np.int8 if name == "pen_state" else float
            arr = np.array(getattr(self, name), dtype=dtype).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            if n is None:
                n = arr.size
            elif arr.size != n:
                raise ValueError(f"channel {name} has {arr.size} samples, expected {n}")
        if np.any(np.diff(self.t) < 0):
            raise IntegrityError("timestamps decrease")
        if not np.all(np.isin(self.pen_state, (0, 1))):
            raise ValueError("pen_state must be 0 or 1")
        if np.any(self.pressure < 0):
            raise ValueError("pressure must be non-negative")

    def __len__(self):
        return self.t.size

    @property
    def samples(self):
        return [
            Sample(*(getattr(self, c)[i].item() for c in ("x", "y", "t", "pen_state",
                                                           "pressure", "tilt", "azimuth")))
            for i in range(len(self))
        ]

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0]) if len(self) else 0.0

    @functools.cached_property
    def strokes(self):
        return segment_strokes(self)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def select(self, index):
        """Recording restricted to ``index`` (slice or integer array)."""
        return self.replace(**{c: getattr(self, c)[index] for c in _CHANNELS})

    @classmethod
    def from_samples(cls, samples, **kwargs):
        cols = {c: [getattr(s, c) for s in samples] for c in _CHANNELS}
        return cls(**cols, **kwargs)


@dataclass(frozen=True)
class DeviceProfile:
    x_scale_mm: float = 1.0
    y_scale_mm: float = 1.0
    t_scale_s: float = 1.0

    @classmethod
    def from_text(cls, text):
        """Parse ``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
        values = {}
        known = {f.name for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":"
            if sep not in line:
                raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
            key, value = (s.strip() for s in line.split(sep, 1))
            if key not in known:
                raise ParseError(f"unknown device-profile key {key!r}", lineno)
            try:
                values[key] = float(value)
            except ValueError:
                raise ParseError(f"non-numeric value {value!r}", lineno) from None
            if values[key] <= 0:
                raise ParseError(f"{key} must be positive", lineno)
        return cls(**values)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def parse_recording(data, profile=None, task=None, subject=None,
                    sample_rate=NOMINAL_SAMPLE_RATE):
    """Parse the text recording format into an :class:`InkRecording`.

    Parameters
    ----------
    data : bytes or str
        File contents.
    profile : DeviceProfile, optional
        Unit conversion; identity by default.

    Raises
    ------
    ParseError
        Malformed line (the message carries the line number).
    IntegrityError
        Timestamps decrease after duplicate collapsing.
    InsufficientDataError
        Fewer than two samples.
    """
    profile = profile or DeviceProfile()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from None
    lines = data.split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise InsufficientDataError("empty recording file")
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"header must be an integer sample count, got {lines[0]!r}", 1) from None
    body = lines[1:]
    if count != len(body):
        raise ParseError(f"header announces {count} samples, file has {len(body)}", 1)
    rows = np.empty((count, 7))
    for k, line in enumerate(body):
        fields = line.split()
        if len(fields) != 7:
            raise ParseError(f"expected 7 fields, got {len(fields)}", k + 2)
        try:
            rows[k] = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", k + 2) from None
        if rows[k, 3] not in (0.0, 1.0):
            raise ParseError(f"pen_state must be 0 or 1, got {fields[3]}", k + 2)
        if not np.all(np.isfinite(rows[k])):
            raise ParseError("non-finite value", k + 2)
    if count:
        # collapse duplicate timestamps, keeping the last row of each run
        keep = np.ones(count, dtype=bool)
        keep[:-1] = rows[1:, 2] != rows[:-1, 2]
        rows = rows[keep]
        bad = np.flatnonzero(np.diff(rows[:, 2]) < 0)
        if bad.size:
            raise IntegrityError(f"timestamp decreases after sample {int(bad[0])}")
    if rows.shape[0] < 2:
        raise InsufficientDataError(f"recording has {rows.shape[0]} usable samples, need 2")
    return InkRecording(
        x=rows[:, 0] * profile.x_scale_mm,
        y=rows[:, 1] * profile.y_scale_mm,
        t=rows[:, 2] * profile.t_scale_s,
        pen_state=rows[:, 3].astype(np.int8),
        azimuth=rows[:, 4],
        tilt=rows[:, 5],
        pressure=rows[:, 6],
        sample_rate=sample_rate,
        task=task,
        subject=subject,
    )


def format_recording(rec):
    """Serialize to the text format (millimetres / seconds, identity profile)."""
    out = [str(len(rec))]
    for i in range(len(rec)):
        out.append(" ".join((
            repr(float(rec.x[i])), repr(float(rec.y[i])), repr(float(rec.t[i])),
            str(int(rec.pen_state[i])), repr(float(rec.azimuth[i])),
            repr(float(rec.tilt[i])), repr(float(rec.pressure[i])),
        )))
    return "\n".join(out) + "\n"


def read_recording(path, profile=None, **kwargs):
    with open(path, "rb") as fh:
        return parse_recording(fh.read(), profile, **kwargs)


def write_recording(path, rec):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_recording(rec))


def segment_strokes(rec):
    """Split into maximal runs of constant pen state."""
    state = np.asarray(rec.pen_state)
    if state.size == 0:
        return []
    edges = np.flatnonzero(np.diff(state)) + 1
    starts = np.concatenate(([0], edges))
    stops = np.concatenate((edges, [state.size]))
    return [
        Stroke(int(a), int(b), StrokeKind.ON_SURFACE if state[a] == 1 else StrokeKind.IN_AIR)
        for a, b in zip(starts, stops)
    ]


def resample_uniform(rec, fs):
    """Linear resampling onto the grid ``k / fs`` independently inside each stroke.

    Grid points falling between two strokes are dropped, so interpolation never
    bridges a pen-state change.
    """
    if not fs > 0:
        raise ValueError(f"sampling rate must be positive, got {fs}")
    eps = 1e-9
    pieces = {c: [] for c in _CHANNELS}
    for stroke in rec.strokes:
        sl = slice(stroke.start, stroke.stop)
        ts = rec.t[sl]
        k0 = int(np.ceil(ts[0] * fs - eps))
        k1 = int(np.floor(ts[-1] * fs + eps))
        if k1 < k0:
            continue
        grid = np.arange(k0, k1 + 1) / fs
        # snap grid points that coincide with samples to avoid round-off drift
        grid = np.clip(grid, ts[0], ts[-1])
        pieces["t"].append(grid)
        pieces["pen_state"].append(np.full(grid.size, rec.pen_state[stroke.start]))
        for c in ("x", "y", "pressure", "tilt", "azimuth"):
            vals = getattr(rec, c)[sl]
            pieces[c].append(np.interp(grid, ts, vals) if ts.size > 1 else np.full(grid.size, vals[0]))
    if not pieces["t"]:
        raise InsufficientDataError("no grid points fall inside any stroke")
    cols = {c: np.concatenate(v) for c, v in pieces.items()}
    return rec.replace(**cols, sample_rate=float(fs))
