"""
Feature identities, the feature catalogue, the manifestation map and full
feature extraction.

Feature keys use the notation ``INF: DIR-FN (HL)``: processed information
(ON, AIR, PRESS, TILT, AZIM), direction (G, H, V), feature mnemonic and the
statistic collapsing a vector to a scalar, e.g. ``ON: V-VLMAX (median)``.
"""

import csv
import enum
import hashlib
import io
import json
import math
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from . import complexity, geometry, kinematics, siglognormal, stats
from .errors import (DegenerateStatisticError, GraphoscaleError, InsufficientDataError,
                     ParseError, SpiralGeometryError)
from .ink import Sex, SubjectMeta, TaskKind, resample_uniform
from .kinematics import Scope
from .stats import Aggregator

FORMAT_VERSION = 1


class Info(str, enum.Enum):
    ON = "ON"
    AIR = "AIR"
    PRESS = "PRESS"
    TILT = "TILT"
    AZIM = "AZIM"


class Direction(str, enum.Enum):
    G = "G"
    H = "H"
    V = "V"


class Missing(str, enum.Enum):
    NOT_APPLICABLE = "not-applicable"
    DEGENERATE = "degenerate-statistic"
    INSUFFICIENT = "insufficient-data"


MNEMONICS = frozenset({
    "DUR", "DURR", "SDUR", "SDURR", "TEMPO", "NINT",
    "VEL", "ACC", "NCV", "RNCV", "NPS", "SNR", "nbLog", "SNR/nbLog",
    "PRESS", "TILT", "AZIM", "NCP", "NCT", "NCA", "NCX", "NCY",
    "RNCP", "RNCT", "RNCA", "RNCX", "RNCY",
    "SHEIGHT", "DoS", "MDS", "2ndSm", "SPI", "TGHTNS", "SWVI", "1stZC",
    "LMIN", "LMAX", "DLMAX", "VLMAX", "DFB", "NDFB", "DBB",
    "NIAI", "RNIAI", "NIEI", "RNIEI", "ADEN", "PDEN", "MPSSF", "MPSTF", "LZC", "SHE",
})

_KEY_RE = re.compile(
    r"^\s*(?:(?P<info>[^\s:]+)\s*:\s*)?"
    r"(?:(?P<dir>[^\s\-()]+)\s*-\s*)?"
    r"(?P<name>[^\s()]+)\s*"
    r"(?:\(\s*(?P<agg>[^)]*?)\s*\))?\s*$"
)


@dataclass(frozen=True)
class FeatureKey:
    name: str
    info: Info | None = None
    direction: Direction | None = None
    aggregator: Aggregator | None = None

    def __str__(self):
        head = ""
        if self.info is not None and self.info.value != self.name:
            head = f"{self.info.value}: "
        body = f"{self.direction.value}-{self.name}" if self.direction else self.name
        tail = f" ({self.aggregator.value})" if self.aggregator else ""
        return head + body + tail

    def __repr__(self):
        return f"FeatureKey({str(self)!r})"

    def __lt__(self, other):
        return str(self) < str(other)


def parse_feature_key(s):
    """Parse ``INF: DIR-FN (HL)`` notation; en/em dashes are accepted.

    Raises
    ------
    ParseError
        Naming the offending token.
    """
    text = str(s).replace("–", "-").replace("—", "-")
    m = _KEY_RE.match(text)
    if not m:
        raise ParseError(f"malformed feature key {s!r}")
    info_tok, dir_tok, name, agg_tok = m.group("info", "dir", "name", "agg")
    info = direction = agg = None
    if info_tok is not None:
        try:
            info = Info(info_tok)
        except ValueError:
            raise ParseError(f"unknown information prefix {info_tok!r} in {s!r}") from None
    if dir_tok is not None:
        try:
            direction = Direction(dir_tok)
        except ValueError:
            raise ParseError(f"unknown direction {dir_tok!r} in {s!r}") from None
    if name not in MNEMONICS:
        raise ParseError(f"unknown feature mnemonic {name!r} in {s!r}")
    if agg_tok is not None:
        try:
            agg = Aggregator(agg_tok)
        except ValueError:
            raise ParseError(f"unknown statistic {agg_tok!r} in {s!r}") from None
    if info is None and name in Info.__members__:
        info = Info(name)
    return FeatureKey(name, info, direction, agg)


def K(s):
    return parse_feature_key(s)


# --------------------------------------------------------------------------
# task groups

ALL_TASKS = tuple(TaskKind)
GRAPHOMOTOR = tuple(t for t in TaskKind if t.is_graphomotor)
HANDWRITING = tuple(t for t in TaskKind if t.is_handwriting)
SPIRALS = (TaskKind.TSK1, TaskKind.TSK2)
LOOPISH = tuple(TaskKind.from_index(i) for i in range(3, 8))


def tasks(*idx):
    return tuple(TaskKind.from_index(i) for i in idx)


VEC_AGGS = (Aggregator.MEDIAN, Aggregator.IQR, Aggregator.NCV, Aggregator.P95)
PROFILE_AGGS = VEC_AGGS + (Aggregator.SLOPE,)
DIRS = (Direction.G, Direction.H, Direction.V)


@dataclass(frozen=True)
class FeatureSpec:
    key: FeatureKey
    family: str
    tasks: tuple


def _build_catalog():
    out = []

    def add(family, task_set, *keys):
        for k in keys:
            out.append(FeatureSpec(k if isinstance(k, FeatureKey) else K(k), family, task_set))

    def vec(info, name, aggs, direction=None):
        return [FeatureKey(name, info, direction, a) for a in aggs]

    add("temporal", ALL_TASKS, "DUR", "ON: DUR", "AIR: DUR", "DURR", "SDURR", "TEMPO", "NINT",
        *vec(Info.ON, "SDUR", VEC_AGGS), *vec(Info.AIR, "SDUR", VEC_AGGS))
    for name in ("VEL", "ACC"):
        for d in DIRS:
            add("kinematic", ALL_TASKS, *vec(Info.ON, name, PROFILE_AGGS, d))
    add("kinematic", ALL_TASKS, "ON: NCV", "ON: RNCV", "ON: NPS")
    add("lognormal", GRAPHOMOTOR, "ON: SNR", "ON: nbLog", "ON: SNR/nbLog")
    for info in (Info.PRESS, Info.TILT, Info.AZIM):
        add("dynamic", ALL_TASKS, *vec(info, info.value, PROFILE_AGGS))
    add("dynamic", ALL_TASKS, "NCP", "NCT", "NCA", "RNCP", "RNCT", "RNCA",
        "ON: NCX", "ON: NCY", "ON: RNCX", "ON: RNCY")
    add("spatial", ALL_TASKS, *vec(Info.ON, "SHEIGHT", VEC_AGGS))
    add("spiral", SPIRALS, "DoS", "MDS", "2ndSm", "SPI", "TGHTNS", "SWVI", "1stZC")
    add("loops", LOOPISH, *vec(Info.ON, "LMIN", VEC_AGGS, Direction.V),
        *vec(Info.ON, "LMAX", VEC_AGGS, Direction.V), *vec(Info.ON, "DLMAX", VEC_AGGS, Direction.V))
    for d in DIRS:
        add("loops", LOOPISH, *vec(Info.ON, "VLMAX", VEC_AGGS, d))
    add("zigzag", (TaskKind.TSK5,), *vec(Info.ON, "DFB", VEC_AGGS), *vec(Info.ON, "NDFB", VEC_AGGS))
    add("arcade", (TaskKind.TSK6,), *vec(Info.ON, "DBB", VEC_AGGS))
    add("intersections", ALL_TASKS, *vec(Info.ON, "NIAI", VEC_AGGS), *vec(Info.ON, "RNIAI", VEC_AGGS),
        "ON: NIEI", "ON: RNIEI")
    add("density", ALL_TASKS, "ON: ADEN", "ON: PDEN")
    add("spectral", ALL_TASKS, "ON: MPSSF", "ON: MPSTF", "ON: LZC", "ON: SHE")
    return tuple(out)


CATALOG = _build_catalog()
CATALOG_BY_KEY = {spec.key: spec for spec in CATALOG}
CATALOG_KEYS = tuple(spec.key for spec in CATALOG)


# --------------------------------------------------------------------------
# manifestations


class Category(str, enum.Enum):
    PROCESS = "process"
    PRODUCT = "product"


@dataclass(frozen=True)
class Candidate:
    tasks: tuple
    feature: FeatureKey
    polarity: int = 1


@dataclass(frozen=True)
class ManifestationSpec:
    id: str
    name: str
    symptom: str
    category: Category
    candidates: tuple

    @property
    def candidate_tasks(self):
        return tuple(t for t in TaskKind if any(t in c.tasks for c in self.candidates))

    @property
    def candidate_features(self):
        seen = []
        for c in self.candidates:
            if c.feature not in seen:
                seen.append(c.feature)
        return tuple(seen)

    def features_for(self, task):
        return tuple(c.feature for c in self.candidates if task in c.tasks)

    def polarity(self, feature):
        for c in self.candidates:
            if c.feature == feature:
                return c.polarity
        raise KeyError(feature)


def _cands(task_set, *pairs):
    return [Candidate(task_set, K(k), p) for k, p in pairs]


def _dir3(template, polarity):
    return [(template.format(d=d.value), polarity) for d in DIRS]


def _build_manifestations():
    P, Q = Category.PROCESS, Category.PRODUCT
    M = ManifestationSpec
    speed = "Variability in speed"
    return (
        M("higher-duration", "Higher duration of writing", speed, P,
          tuple(_cands(HANDWRITING, ("DUR", 1)))),
        M("low-velocity", "Low velocity", speed, P, tuple(
            _cands(ALL_TASKS, ("ON: DUR", 1), ("ON: SDUR (median)", 1),
                   *_dir3("ON: {d}-VEL (median)", -1), *_dir3("ON: {d}-VEL (95p)", -1))
            + _cands(SPIRALS, ("MDS", -1)))),
        M("low-acceleration", "Low acceleration", speed, P, tuple(
            _cands(ALL_TASKS, *_dir3("ON: {d}-ACC (median)", -1), *_dir3("ON: {d}-ACC (95p)", -1)))),
        M("low-velocity-variability", "Lower variability of velocity", speed, P, tuple(
            _cands(HANDWRITING, *_dir3("ON: {d}-VEL (iqr)", -1)))),
        M("low-acceleration-variability", "Lower variability of acceleration", speed, P, tuple(
            _cands(HANDWRITING, *_dir3("ON: {d}-ACC (iqr)", -1)))),
        M("velocity-dysfluency", "Dysfluency in velocity", speed, P, tuple(
            _cands(GRAPHOMOTOR, ("ON: NCV", 1), ("ON: RNCV", 1), ("ON: MPSSF", 1),
                   ("ON: SNR", -1), ("ON: nbLog", 1), ("ON: SNR/nbLog", -1)))),
        M("decreasing-velocity", "Gradually decreasing velocity", "Unusual wrist and body position", P,
          tuple(_cands(HANDWRITING, ("ON: NPS", 1), *_dir3("ON: {d}-VEL (slope)", -1)))),
        M("decreasing-acceleration", "Gradually decreasing acceleration",
          "Unusual wrist and body position", P,
          tuple(_cands(HANDWRITING, *_dir3("ON: {d}-ACC (slope)", -1)))),
        M("unstable-pressure", "Unstable pressure on pen tip", "Unstable pressure", P, tuple(
            _cands(ALL_TASKS, ("PRESS (ncv)", 1), ("PRESS (slope)", -1), ("NCP", 1)))),
        M("unstable-tilt", "Unstable tilt of pen", "Unstable tilt", P, tuple(
            _cands(ALL_TASKS, ("TILT (ncv)", 1), ("NCT", 1)))),
        M("visuospatial-deficits", "Visuospatial deficits", "Longer in-air time period", P, tuple(
            _cands(HANDWRITING, ("AIR: DUR", 1), ("AIR: SDUR (median)", 1)))),
        M("short-strokes", "Disability to perform longer strokes", "Dysfluency of handwriting", P,
          tuple(_cands(HANDWRITING, ("DURR", -1), ("NINT", 1)))),
        M("amplitude-instability", "Instability in amplitude of letters", "Problems with size control", Q,
          tuple(_cands(tasks(3, 4, 5), ("ON: V-LMAX (ncv)", 1))
                + _cands(HANDWRITING, ("ON: SHEIGHT (ncv)", 1)))),
        M("uniform-amplitude", "All letters have same amplitude", "Problems with size control", Q,
          tuple(_cands(HANDWRITING, ("ON: SHEIGHT (ncv)", -1)))),
        M("off-line", "Inability to maintain handwriting on a line", "Messy organization", Q,
          tuple(_cands(tasks(3, 5, 6), ("ON: V-LMIN (ncv)", 1)))),
        M("overwriting", "Frequent overwriting", "Grammar mistakes", Q,
          tuple(_cands(HANDWRITING, ("ON: NIEI", 1), ("ON: RNIEI", 1)))),
        M("unstable-density", "Unstable density", "Poor spacing", Q, tuple(
            _cands(ALL_TASKS, ("ON: PDEN", 1), ("ON: ADEN", 1))
            + _cands(tasks(3, 4), ("ON: V-DLMAX (ncv)", 1))
            + _cands(SPIRALS, ("SPI", -1), ("TGHTNS", 1), ("SWVI", 1))
            + _cands(tasks(1, 2, 3, 4, 7, 8, 9, 10), ("ON: NIAI (median)", 1), ("ON: RNIAI (median)", 1)))),
    )


MANIFESTATIONS = _build_manifestations()
MANIFESTATIONS_BY_ID = {m.id: m for m in MANIFESTATIONS}


def manifestation_candidates():
    """The 17 manifestations with their candidate tasks and features."""
    return list(MANIFESTATIONS)


# --------------------------------------------------------------------------
# extraction configuration and feature vectors

DEFINITIONS = {
    "ADEN": "on-surface path length / on-surface bounding-box area [1/mm]",
    "PDEN": "on-surface samples / on-surface path length [1/mm]",
    "SNR": "speed magnitude, stroke-wise fits pooled by energy",
    "RNCV": "change count / profile duration [1/s]",
    "RNIAI": "crossings per 100 mm of on-surface path",
    "LMAX": "maximum height above median of local minima",
    "LMIN": "minimum depth below median of local maxima",
    "stroke-duration": "first sample to next stroke's first sample",
}


@dataclass(frozen=True)
class FeatureConfig:
    stop_velocity: float = kinematics.DEFAULT_STOP_VELOCITY
    stop_duration: float = kinematics.DEFAULT_STOP_DURATION
    speed_band: tuple = complexity.SPEED_BAND
    tremor_band: tuple = complexity.TREMOR_BAND
    entropy_bins: int = complexity.ENTROPY_BINS
    smoothing: bool = False
    extrema_prominence: float = geometry.DEFAULT_PROMINENCE
    resample_rate: float = 133.0
    lognormal_residual_fraction: float = 0.01
    lognormal_max_components: int = 60
    lognormal_max_evaluations: int = 60

    def to_dict(self):
        d = asdict(self)
        d["speed_band"] = list(self.speed_band)
        d["tremor_band"] = list(self.tremor_band)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("speed_band", "tremor_band"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @property
    def hash(self):
        payload = json.dumps({"version": FORMAT_VERSION, "config": self.to_dict(),
                              "definitions": DEFINITIONS}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(eq=False)
class FeatureVector:
    """Extracted features of one recording; missing values carry a reason."""

    values: dict = field(default_factory=dict)  # FeatureKey -> float
    missing: dict = field(default_factory=dict)  # FeatureKey -> Missing
    task: TaskKind | None = None
    subject: SubjectMeta | None = None
    config_hash: str = ""

    def get(self, key):
        if not isinstance(key, FeatureKey):
            key = parse_feature_key(key)
        return self.values.get(key)

    def reason(self, key):
        if not isinstance(key, FeatureKey):
            key = parse_feature_key(key)
        if key in self.values:
            return None
        return self.missing.get(key, Missing.NOT_APPLICABLE)

    def __contains__(self, key):
        return self.get(key) is not None

    def to_json(self):
        return {
            "subject": _subject_to_dict(self.subject),
            "task": self.task.name if self.task else None,
            "config_hash": self.config_hash,
            "features": {str(k): self.values[k] for k in sorted(self.values)},
            "missing": {str(k): self.missing[k].value for k in sorted(self.missing)},
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            values={parse_feature_key(k): float(v) for k, v in d["features"].items()},
            missing={parse_feature_key(k): Missing(v) for k, v in d.get("missing", {}).items()},
            task=TaskKind[d["task"]] if d.get("task") else None,
            subject=_subject_from_dict(d.get("subject")),
            config_hash=d.get("config_hash", ""),
        )


def _subject_to_dict(s):
    if s is None:
        return None
    return {"id": s.id, "grade": s.grade, "sex": s.sex.value, "oee": s.oee, "hpsq": s.hpsq}


def _subject_from_dict(d):
    if not d:
        return None
    return SubjectMeta(d["id"], int(d["grade"]), Sex(d.get("sex", "U")), d.get("oee"), d.get("hpsq"))


META_COLUMNS = ("subject", "grade", "sex", "oee", "hpsq", "task", "config_hash")


def vectors_to_csv(vectors, keys=CATALOG_KEYS):
    """One row per vector; missing values written as ``NA:<reason>``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(META_COLUMNS) + [str(k) for k in keys])
    for v in vectors:
        s = v.subject
        row = [s.id if s else "", s.grade if s else "", s.sex.value if s else "",
               "" if s is None or s.oee is None else s.oee,
               "" if s is None or s.hpsq is None else s.hpsq,
               v.task.name if v.task else "", v.config_hash]
        for k in keys:
            if k in v.values:
                row.append(repr(float(v.values[k])))
            else:
                row.append("NA:" + v.reason(k).value)
        w.writerow(row)
    return buf.getvalue()


def vectors_from_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return []
    header = rows[0]
    n_meta = len(META_COLUMNS)
    if tuple(header[:n_meta]) != META_COLUMNS:
        raise ParseError("feature CSV header does not start with the metadata columns", 1)
    keys = [parse_feature_key(h) for h in header[n_meta:]]
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, got {len(row)}", lineno)
        sid, grade, sex, oee, hpsq, task, chash = row[:n_meta]
        subject = None
        if sid:
            subject = SubjectMeta(sid, int(grade), Sex(sex or "U"),
                                  int(oee) if oee else None, int(hpsq) if hpsq else None)
        values, missing = {}, {}
        for k, cell in zip(keys, row[n_meta:]):
            if cell.startswith("NA:"):
                missing[k] = Missing(cell[3:])
            else:
                values[k] = float(cell)
        out.append(FeatureVector(values, missing, TaskKind[task] if task else None, subject, chash))
    return out


# --------------------------------------------------------------------------
# extraction


def _is_uniform(rec, fs):
    dt = np.diff(rec.t)
    return dt.size > 0 and np.all(np.abs(dt - 1.0 / fs) <= 1e-6 / fs)


class _Extractor:
    """Computes feature families lazily for one recording."""

    def __init__(self, rec, cfg):
        self.rec = rec
        self.cfg = cfg
        self._cache = {}

    def cached(self, name, fn):
        if name not in self._cache:
            try:
                self._cache[name] = fn()
            except (GraphoscaleError, ValueError) as exc:
                self._cache[name] = exc
        value = self._cache[name]
        if isinstance(value, Exception):
            raise value
        return value

    @property
    def uniform(self):
        def make():
            fs = self.cfg.resample_rate
            return self.rec if _is_uniform(self.rec, fs) else resample_uniform(self.rec, fs)
        return self.cached("uniform", make)

    def vel(self):
        return self.cached("vel", lambda: kinematics.velocity(self.rec, Scope.ON_SURFACE, self.cfg.smoothing))

    def acc(self):
        return self.cached("acc", lambda: kinematics.acceleration(self.rec, Scope.ON_SURFACE, self.cfg.smoothing))

    def uniform_speed(self):
        return self.cached("uspeed", lambda: kinematics.velocity(self.uniform, Scope.ON_SURFACE)[0])

    def extrema(self):
        return self.cached("extrema", lambda: geometry.vertical_extrema(self.rec, self.cfg.extrema_prominence))


def _vector_values(agg_keys, fn, out):
    """Fill ``out`` with every aggregation of the vector returned by ``fn``."""
    try:
        v = fn()
    except InsufficientDataError:
        for k in agg_keys:
            out[k] = Missing.INSUFFICIENT
        return
    except (DegenerateStatisticError, SpiralGeometryError):
        for k in agg_keys:
            out[k] = Missing.DEGENERATE
        return
    t = None
    if isinstance(v, kinematics.Profile):
        v, t = v.values, v.t
    v = np.asarray(v, dtype=float)
    for k in agg_keys:
        if v.size == 0:
            out[k] = Missing.INSUFFICIENT
            continue
        if k.aggregator is Aggregator.SLOPE and v.size < 2:
            out[k] = Missing.INSUFFICIENT
            continue
        try:
            out[k] = stats.aggregate(v, k.aggregator, t)
        except DegenerateStatisticError:
            out[k] = Missing.DEGENERATE
        except InsufficientDataError:
            out[k] = Missing.INSUFFICIENT


def _scalar(out, key, fn):
    try:
        value = fn()
    except (InsufficientDataError, SpiralGeometryError):
        out[key] = Missing.INSUFFICIENT
        return
    except DegenerateStatisticError:
        out[key] = Missing.DEGENERATE
        return
    out[key] = Missing.DEGENERATE if value is None else value


def _family_temporal(ex, keys, out):
    tf = ex.cached("temporal", lambda: kinematics.temporal_features(ex.rec))
    direct = {"DUR": "DUR", "ON: DUR": "DUR_on", "AIR: DUR": "DUR_air", "DURR": "DURR",
              "SDURR": "SDURR", "TEMPO": "TEMPO", "NINT": "NINT"}
    for k in keys:
        s = str(k)
        if s in direct:
            _scalar(out, k, lambda s=s: tf[direct[s]])
    for info, name in ((Info.ON, "SDUR_on"), (Info.AIR, "SDUR_air")):
        ks = [k for k in keys if k.name == "SDUR" and k.info is info]
        if ks:
            _vector_values(ks, lambda name=name: tf[name], out)


def _family_kinematic(ex, keys, out):
    for name, getter in (("VEL", ex.vel), ("ACC", ex.acc)):
        for i, d in enumerate(DIRS):
            ks = [k for k in keys if k.name == name and k.direction is d]
            if ks:
                _vector_values(ks, lambda getter=getter, i=i: getter()[i], out)
    for k in keys:
        if k.name == "NCV":
            _scalar(out, k, lambda: kinematics.count_changes(ex.vel()[0]))
        elif k.name == "RNCV":
            _scalar(out, k, lambda: kinematics.relative_changes(ex.vel()[0]))
        elif k.name == "NPS":
            _scalar(out, k, lambda: kinematics.pen_stops(ex.vel()[0], ex.cfg.stop_velocity,
                                                          ex.cfg.stop_duration))


def _family_lognormal(ex, keys, out):
    def fit():
        cfg = siglognormal.FitConfig(residual_fraction=ex.cfg.lognormal_residual_fraction,
                                     max_components=ex.cfg.lognormal_max_components,
                                     max_evaluations=ex.cfg.lognormal_max_evaluations)
        return siglognormal.fit_recording(ex.uniform, cfg)

    for k in keys:
        if k.name == "SNR":
            _scalar(out, k, lambda: ex.cached("lognormal", fit).snr_db)
        elif k.name == "nbLog":
            _scalar(out, k, lambda: ex.cached("lognormal", fit).nb_log)
        elif k.name == "SNR/nbLog":
            _scalar(out, k, lambda: siglognormal.snr_per_nblog(ex.cached("lognormal", fit)))


_CHANGE_CHANNELS = {"P": "pressure", "T": "tilt", "A": "azimuth", "X": "x", "Y": "y"}


def _family_dynamic(ex, keys, out):
    for info, channel in ((Info.PRESS, "pressure"), (Info.TILT, "tilt"), (Info.AZIM, "azimuth")):
        ks = [k for k in keys if k.name == info.value]
        if ks:
            _vector_values(ks, lambda channel=channel: ex.cached(
                channel, lambda: kinematics.channel_profile(ex.rec, channel)), out)
    for k in keys:
        if k.name.startswith("NC") or k.name.startswith("RNC"):
            rel = k.name.startswith("R")
            channel = _CHANGE_CHANNELS[k.name[-1]]
            prof = lambda channel=channel: ex.cached(
                channel, lambda: kinematics.channel_profile(ex.rec, channel))
            if rel:
                _scalar(out, k, lambda prof=prof: kinematics.relative_changes(prof()))
            else:
                _scalar(out, k, lambda prof=prof: kinematics.count_changes(prof()))


def _family_spatial(ex, keys, out):
    _vector_values(keys, lambda: geometry.stroke_heights(ex.rec), out)


def _family_spiral(ex, keys, out):
    try:
        sf = geometry.spiral_features(ex.rec)
    except (SpiralGeometryError, InsufficientDataError):
        for k in keys:
            out[k] = Missing.INSUFFICIENT
        return
    except DegenerateStatisticError:
        for k in keys:
            out[k] = Missing.DEGENERATE
        return
    for k in keys:
        _scalar(out, k, lambda k=k: sf[k.name])


def _family_loops(ex, keys, out):
    lmin = [k for k in keys if k.name == "LMIN"]
    lmax = [k for k in keys if k.name == "LMAX"]
    heights = lambda: ex.cached("heights", lambda: geometry.extrema_heights(ex.extrema()))
    if lmin:
        _vector_values(lmin, lambda: heights()[0], out)
    if lmax:
        _vector_values(lmax, lambda: heights()[1], out)
    ks = [k for k in keys if k.name == "DLMAX"]
    if ks:
        _vector_values(ks, lambda: geometry.dlmax(ex.rec, ex.extrema()), out)
    for d in DIRS:
        ks = [k for k in keys if k.name == "VLMAX" and k.direction is d]
        if ks:
            _vector_values(ks, lambda d=d: ex.cached(
                "vlmax", lambda: geometry.vlmax(ex.rec, ex.extrema()))[d.value], out)


def _family_zigzag(ex, keys, out):
    teeth = lambda: ex.cached("teeth", lambda: geometry.zigzag_teeth(ex.rec, ex.cfg.extrema_prominence))
    for name in ("DFB", "NDFB"):
        ks = [k for k in keys if k.name == name]
        if ks:
            _vector_values(ks, lambda name=name: teeth()[name], out)


def _family_arcade(ex, keys, out):
    _vector_values(keys, lambda: geometry.arcade_bows(ex.rec, ex.cfg.extrema_prominence)["DBB"], out)


def _family_intersections(ex, keys, out):
    inter = lambda: ex.cached("intersections", lambda: geometry.intersections(ex.rec))
    for name in ("NIAI", "RNIAI"):
        ks = [k for k in keys if k.name == name]
        if ks:
            _vector_values(ks, lambda name=name: inter()[name], out)
    for k in keys:
        if k.name in ("NIEI", "RNIEI"):
            _scalar(out, k, lambda k=k: inter()[k.name])


def _family_density(ex, keys, out):
    for k in keys:
        _scalar(out, k, lambda k=k: ex.cached("density", lambda: geometry.densities(ex.rec))[k.name])


def _family_spectral(ex, keys, out):
    fs = ex.cfg.resample_rate
    for k in keys:
        if k.name in ("MPSSF", "MPSTF"):
            _scalar(out, k, lambda k=k: ex.cached("psd", lambda: complexity.psd_medians(
                ex.uniform_speed(), fs, ex.cfg.speed_band, ex.cfg.tremor_band))[k.name])
        elif k.name == "LZC":
            _scalar(out, k, lambda: complexity.lzc(ex.uniform_speed()))
        elif k.name == "SHE":
            _scalar(out, k, lambda: complexity.shannon_entropy(ex.uniform_speed(), ex.cfg.entropy_bins))


_FAMILIES = {
    "temporal": _family_temporal,
    "kinematic": _family_kinematic,
    "lognormal": _family_lognormal,
    "dynamic": _family_dynamic,
    "spatial": _family_spatial,
    "spiral": _family_spiral,
    "loops": _family_loops,
    "zigzag": _family_zigzag,
    "arcade": _family_arcade,
    "intersections": _family_intersections,
    "density": _family_density,
    "spectral": _family_spectral,
}


def extract_all(rec, config=None, keys=None):
    """Compute every catalogue feature applicable to ``rec.task``.

    Parameters
    ----------
    rec : InkRecording
        Recording with a known task.
    config : FeatureConfig, optional
    keys : iterable of FeatureKey or str, optional
        Restrict extraction to these features (others are omitted entirely).

    Returns
    -------
    FeatureVector
        Per-feature failures are recorded as missing values with a reason;
        nothing is raised.
    """
    if rec.task is None:
        raise ValueError("recording has no task")
    cfg = config or FeatureConfig()
    wanted = CATALOG if keys is None else tuple(
        CATALOG_BY_KEY[k if isinstance(k, FeatureKey) else parse_feature_key(k)] for k in keys)
    out = {}
    ex = _Extractor(rec, cfg)
    by_family = {}
    for spec in wanted:
        if rec.task not in spec.tasks:
            out[spec.key] = Missing.NOT_APPLICABLE
        else:
            by_family.setdefault(spec.family, []).append(spec.key)
    for family, ks in by_family.items():
        try:
            _FAMILIES[family](ex, ks, out)
        except InsufficientDataError:
            for k in ks:
                out.setdefault(k, Missing.INSUFFICIENT)
        except DegenerateStatisticError:
            for k in ks:
                out.setdefault(k, Missing.DEGENERATE)
    values, missing = {}, {}
    for spec in wanted:
        v = out.get(spec.key, Missing.INSUFFICIENT)
        if isinstance(v, Missing):
            missing[spec.key] = v
        elif not math.isfinite(float(v)):
            missing[spec.key] = Missing.DEGENERATE
        else:
            values[spec.key] = float(v)
    return FeatureVector(values, missing, rec.task, rec.subject, cfg.hash)
