"""
Normative tables and scores.

A manifestation score compares a child's weight-adjusted, min-max scaled
feature ``f`` with the intact cohort of the same grade::

    s = (f - median) / (threshold - median)

so ``s = 0`` at the intact median and ``s = 1`` at the disability threshold.
Global components combine scaled features with convex weights and are scored
the same way.  Scores are shown through ``1 / (1 + exp(-k (s - 1)))``, which
maps the threshold to 0.5.
"""

import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .catalog import FeatureKey, MANIFESTATIONS_BY_ID, Missing, parse_feature_key
from .errors import (ConfigMismatchError, DegenerateStatisticError, InsufficientDataError,
                     MissingNormsError)
from .ink import TaskKind, handwriting_task_for_grade

log = logging.getLogger(__name__)

NORM_FORMAT = "graphoscale-norms"
NORM_VERSION = 1
DEFAULT_STEEPNESS = 2.0
DEFAULT_QUANTILE = 0.95
DEFAULT_MIN_INTACT = 20
KDE_POINTS = 512
HPSQ_CUTOFF = 19

HANDWRITING_SLOT = "HW"


def resolve_task(slot, grade):
    """Concrete task for a scale slot; the handwriting slot depends on grade."""
    if slot == HANDWRITING_SLOT:
        return handwriting_task_for_grade(grade)
    return slot if isinstance(slot, TaskKind) else TaskKind.parse(slot)


def slot_name(slot):
    return slot if slot == HANDWRITING_SLOT else slot.name


def parse_slot(s):
    return HANDWRITING_SLOT if str(s).upper() == HANDWRITING_SLOT else TaskKind.parse(s)


class Block(str, enum.Enum):
    """Report blocks: information category x task family."""

    PROCESS_GRAPHOMOTOR = "process-graphomotor"
    PROCESS_HANDWRITING = "process-handwriting"
    PRODUCT_HANDWRITING = "product-handwriting"
    PRODUCT_GRAPHOMOTOR = "product-graphomotor"


COMPONENT_LABELS = {
    "G1": ("Kinematic abilities (graphomotor tasks)", Block.PROCESS_GRAPHOMOTOR),
    "G2": ("Kinematic abilities (handwriting)", Block.PROCESS_HANDWRITING),
    "G3": ("Visuo-spatial and cognitive abilities (handwriting)", Block.PRODUCT_HANDWRITING),
    "G4": ("Spatial abilities (graphomotor tasks)", Block.PRODUCT_GRAPHOMOTOR),
}


def block_of(manifestation_id, slot):
    cat = MANIFESTATIONS_BY_ID[manifestation_id].category.value
    hw = slot == HANDWRITING_SLOT or (isinstance(slot, TaskKind) and slot.is_handwriting)
    return Block(f"{cat}-{'handwriting' if hw else 'graphomotor'}")


# --------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class ThresholdOverride:
    value: float
    original: float
    by: str
    reason: str


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def to_json(self):
        return {"grid": [float(f"{v:.6g}") for v in self.grid],
                "density": [float(f"{v:.6g}") for v in self.density],
                "bandwidth": self.bandwidth}

    @classmethod
    def from_json(cls, d):
        return cls(np.asarray(d["grid"], float), np.asarray(d["density"], float), float(d["bandwidth"]))


@dataclass(frozen=True, eq=False)
class NormEntry:
    """Scoring constants for one manifestation in one grade.

    ``min``/``max`` bound ``weight * raw`` over the grade cohort; ``median`` and
    ``threshold`` are in scaled units.
    """

    manifestation: str
    grade: int
    feature: FeatureKey
    task: object  # TaskKind or HANDWRITING_SLOT
    weight: int
    min: float
    max: float
    median: float
    threshold: float
    config_hash: str = ""
    override: ThresholdOverride | None = None
    density: DensityCurve | None = None

    def __post_init__(self):
        if self.weight not in (1, -1):
            raise ValueError(f"weight must be +1 or -1, got {self.weight}")
        if not self.min < self.max:
            raise ValueError(f"{self.manifestation}: min must be below max")
        if self.threshold == self.median:
            raise ValueError(f"{self.manifestation}: threshold equals median")

    def scale(self, raw):
        """Weight-adjusted min-max scaling with the stored bounds (not clamped)."""
        return (self.weight * raw - self.min) / (self.max - self.min)

    @property
    def concrete_task(self):
        return resolve_task(self.task, self.grade)


@dataclass(frozen=True)
class ComponentMember:
    manifestation: str
    weight: float
    sign: int = 1  # -1: member enters reflected (1 - f)


@dataclass(frozen=True, eq=False)
class ComponentModel:
    id: str
    grade: int
    members: tuple
    median: float
    threshold: float
    label: str = ""
    config_hash: str = ""

    def __post_init__(self):
        if not self.members:
            raise ValueError("component needs at least one member")
        w = np.array([m.weight for m in self.members])
        if np.any(w <= 0):
            raise ValueError("component weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"component weights sum to {w.sum()!r}, not 1")
        if self.threshold == self.median:
            raise ValueError("component threshold equals median")

    def combine(self, scaled):
        """``o = sum w_m f_m`` from a mapping manifestation id -> scaled feature."""
        o = 0.0
        for m in self.members:
            f = scaled[m.manifestation]
            o += m.weight * (f if m.sign > 0 else 1.0 - f)
        return o


@dataclass(frozen=True)
class Score:
    value: float | None
    scaled: float | None = None
    reason: Missing | None = None

    @property
    def flag(self):
        return self.value is not None and self.value > 1

    def __float__(self):
        if self.value is None:
            raise ValueError(f"score is missing ({self.reason.value})")
        return float(self.value)


# --------------------------------------------------------------------------
# equations


def relative_score(x, median, threshold):
    return (x - median) / (threshold - median)


def score_scaled(f, entry):
    """Relative score of an already scaled feature value."""
    return relative_score(f, entry.median, entry.threshold)


def _check_hash(entry_hash, config_hash):
    if config_hash is not None and entry_hash and config_hash != entry_hash:
        raise ConfigMismatchError(
            f"feature configuration {config_hash} does not match norms fitted with {entry_hash}")


def manifestation_score(raw, entry, config_hash=None):
    """Score a raw feature value against a norm entry.

    Returns
    -------
    Score
        Missing (with reason) when ``raw`` is None or not finite.

    Raises
    ------
    ConfigMismatchError
        When ``config_hash`` differs from the entry's.
    """
    _check_hash(entry.config_hash, config_hash)
    if raw is None:
        return Score(None, None, Missing.INSUFFICIENT)
    if isinstance(raw, Missing):
        return Score(None, None, raw)
    if not math.isfinite(raw):
        return Score(None, None, Missing.DEGENERATE)
    f = entry.scale(raw)
    return Score(score_scaled(f, entry), f)


def global_score(features, model, config_hash=None):
    """Convex combination of scaled member features, then relative score.

    ``features`` maps manifestation id to its scaled value (None when missing).
    """
    _check_hash(model.config_hash, config_hash)
    for m in model.members:
        v = features.get(m.manifestation)
        if v is None or not math.isfinite(v):
            return Score(None, None, Missing.INSUFFICIENT)
    o = model.combine(features)
    return Score(relative_score(o, model.median, model.threshold), o)


def display_transform(s, k=DEFAULT_STEEPNESS):
    """Sigmoid display value; 0.5 at the threshold score 1."""
    z = -k * (np.asarray(s, dtype=float) - 1.0)
    out = np.where(z >= 0, np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))),
                   1.0 / (1.0 + np.exp(-np.abs(z))))
    return float(out) if np.ndim(out) == 0 else out


def kde(values, n_points=KDE_POINTS):
    """Gaussian kernel density with Silverman's rule-of-thumb bandwidth."""
    x = np.asarray(values, dtype=float)
    if x.size < 3:
        raise InsufficientDataError("density estimate needs at least 3 values")
    sd = float(np.std(x, ddof=1))
    spread = [v for v in (sd, stats.iqr(x) / 1.34) if v > 0]
    if not spread:
        raise DegenerateStatisticError("zero bandwidth: all values are equal")
    h = 0.9 * min(spread) * x.size ** (-0.2)
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, n_points)
    z = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return DensityCurve(grid, dens, h)


def hdc(oee, hpsq=None):
    """Handwriting-disabilities criterion (0-3) from expert rating and questionnaire."""
    if isinstance(oee, bool) or int(oee) != oee or not 0 <= oee <= 4:
        raise ValueError(f"OEE must be an integer 0-4, got {oee!r}")
    oee_t = oee >= 3
    hpsq_t = hpsq is not None and hpsq >= HPSQ_CUTOFF
    if not oee_t:
        return 0
    if oee == 3:
        return 2 if hpsq_t else 1
    return 3 if hpsq_t else 2


# --------------------------------------------------------------------------
# norm fitting


@dataclass(frozen=True)
class ScaleItem:
    """One manifestation of the scale: its feature, task slot and polarity."""

    manifestation: str
    feature: FeatureKey
    task: object  # TaskKind or HANDWRITING_SLOT
    weight: int = 1

    def to_json(self):
        return {"manifestation": self.manifestation, "feature": str(self.feature),
                "task": slot_name(self.task), "weight": self.weight}

    @classmethod
    def from_json(cls, d):
        return cls(d["manifestation"], parse_feature_key(d["feature"]), parse_slot(d["task"]),
                   int(d.get("weight", 1)))


def _raw_values(vectors, feature, task):
    out = []
    for v in vectors:
        if v.task is task:
            raw = v.get(feature)
            out.append(raw)
    return out


def fit_norms(vectors, intact, grade, scale, *, config_hash=None, quantile=DEFAULT_QUANTILE,
              min_intact=DEFAULT_MIN_INTACT, overrides=None, with_density=True):
    """Fit norm entries for one grade.

    Parameters
    ----------
    vectors : sequence of FeatureVector
        Feature vectors of the grade's subjects (any tasks; matched by task).
    intact : sequence of bool
        Intact flag per vector.
    grade : int
    scale : sequence of ScaleItem
    overrides : mapping manifestation id -> ThresholdOverride-like dict, optional
        Manual thresholds (scaled units) with ``by`` and ``reason``.

    Returns
    -------
    list of NormEntry
        Degenerate manifestations are omitted with a logged warning.

    Raises
    ------
    InsufficientDataError
        When a manifestation has fewer than ``min_intact`` intact subjects.
    """
    vectors = list(vectors)
    intact = np.asarray(list(intact), dtype=bool)
    if intact.size != len(vectors):
        raise ValueError("intact mask length differs from cohort size")
    overrides = dict(overrides or {})
    entries = []
    for item in scale:
        task = resolve_task(item.task, grade)
        if task is None:
            continue
        rows = [(v.get(item.feature), ok) for v, ok in zip(vectors, intact)
                if v.task is task and (v.subject is None or v.subject.grade == grade)]
        rows = [(r, ok) for r, ok in rows if r is not None]
        n_intact = sum(ok for _, ok in rows)
        if n_intact < min_intact:
            raise InsufficientDataError(
                f"{item.manifestation}: {n_intact} intact subjects in grade {grade}, "
                f"need {min_intact}")
        w = item.weight
        adj = np.array([w * r for r, _ in rows])
        mask = np.array([ok for _, ok in rows])
        lo, hi = float(adj.min()), float(adj.max())
        if not hi > lo:
            log.warning("%s grade %d: feature %s is constant; entry omitted",
                        item.manifestation, grade, item.feature)
            continue
        f = (adj - lo) / (hi - lo)
        med = stats.median(f[mask])
        thr = stats.quantile(f[mask], quantile)
        override = None
        if item.manifestation in overrides:
            o = overrides[item.manifestation]
            override = ThresholdOverride(float(o["value"]), thr, str(o.get("by", "")),
                                         str(o.get("reason", "")))
            thr = override.value
        if thr == med:
            log.warning("%s grade %d: threshold equals median; entry omitted",
                        item.manifestation, grade)
            continue
        density = None
        if with_density:
            try:
                density = kde(f)
            except (DegenerateStatisticError, InsufficientDataError):
                density = None
        entries.append(NormEntry(item.manifestation, grade, item.feature, item.task, w,
                                 lo, hi, med, thr, config_hash or "", override, density))
    return entries


# --------------------------------------------------------------------------
# norm table files


@dataclass(eq=False)
class NormTable:
    entries: list = field(default_factory=list)
    components: list = field(default_factory=list)
    config_hash: str = ""
    steepness: float = DEFAULT_STEEPNESS
    quantile: float = DEFAULT_QUANTILE
    provenance: str = ""

    @property
    def grades(self):
        return sorted({e.grade for e in self.entries})

    def for_grade(self, grade):
        entries = [e for e in self.entries if e.grade == grade]
        if not entries:
            raise MissingNormsError(f"no norms for grade {grade}")
        return entries, [c for c in self.components if c.grade == grade]

    def to_json(self):
        return {
            "format": NORM_FORMAT,
            "version": NORM_VERSION,
            "config_hash": self.config_hash,
            "steepness": self.steepness,
            "quantile": self.quantile,
            "provenance": self.provenance,
            "entries": [_entry_json(e) for e in self.entries],
            "components": [_component_json(c) for c in self.components],
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_json(cls, d):
        if d.get("format") != NORM_FORMAT:
            raise ValueError("not a norm-table file")
        if d.get("version") != NORM_VERSION:
            raise ValueError(f"unsupported norm-table version {d.get('version')!r}")
        return cls(
            [_entry_from_json(e) for e in d["entries"]],
            [_component_from_json(c) for c in d.get("components", [])],
            d.get("config_hash", ""), float(d.get("steepness", DEFAULT_STEEPNESS)),
            float(d.get("quantile", DEFAULT_QUANTILE)), d.get("provenance", ""),
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _entry_json(e):
    d = {"manifestation": e.manifestation, "grade": e.grade, "feature": str(e.feature),
         "task": slot_name(e.task), "weight": e.weight, "min": e.min, "max": e.max,
         "median": e.median, "threshold": e.threshold, "config_hash": e.config_hash}
    if e.override is not None:
        o = e.override
        d["override"] = {"value": o.value, "original": o.original, "by": o.by, "reason": o.reason}
    if e.density is not None:
        d["density"] = e.density.to_json()
    return d


def _entry_from_json(d):
    o = d.get("override")
    return NormEntry(
        d["manifestation"], int(d["grade"]), parse_feature_key(d["feature"]), parse_slot(d["task"]),
        int(d["weight"]), float(d["min"]), float(d["max"]), float(d["median"]),
        float(d["threshold"]), d.get("config_hash", ""),
        ThresholdOverride(o["value"], o["original"], o["by"], o["reason"]) if o else None,
        DensityCurve.from_json(d["density"]) if d.get("density") else None,
    )


def _component_json(c):
    return {"id": c.id, "grade": c.grade, "label": c.label, "median": c.median,
            "threshold": c.threshold, "config_hash": c.config_hash,
            "members": [{"manifestation": m.manifestation, "weight": m.weight, "sign": m.sign}
                        for m in c.members]}


def _component_from_json(d):
    return ComponentModel(
        d["id"], int(d["grade"]),
        tuple(ComponentMember(m["manifestation"], float(m["weight"]), int(m.get("sign", 1)))
              for m in d["members"]),
        float(d["median"]), float(d["threshold"]), d.get("label", ""), d.get("config_hash", ""))


# --------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class ManifestationResult:
    manifestation: str
    block: Block
    feature: FeatureKey
    task: TaskKind | None
    raw: float | None
    scaled: float | None
    score: float | None
    display: float | None
    reason: Missing | None = None

    @property
    def flag(self):
        return self.score is not None and self.score > 1


@dataclass(frozen=True)
class ComponentResult:
    id: str
    label: str
    combined: float | None
    score: float | None
    display: float | None
    reason: Missing | None = None

    @property
    def flag(self):
        return self.score is not None and self.score > 1


@dataclass(frozen=True, eq=False)
class Profile:
    subject: str
    grade: int
    manifestations: tuple
    components: tuple
    hdc: int | None = None
    config_hash: str = ""

    @property
    def flags(self):
        return [m.manifestation for m in self.manifestations if m.flag]

    def to_json(self):
        def num(v):
            return None if v is None else float(v)

        return {
            "subject": self.subject,
            "grade": self.grade,
            "config_hash": self.config_hash,
            "hdc": self.hdc,
            "components": [
                {"id": c.id, "label": c.label, "combined": num(c.combined), "score": num(c.score),
                 "display": num(c.display), "flag": c.flag,
                 "reason": c.reason.value if c.reason else None}
                for c in self.components
            ],
            "manifestations": [
                {"id": m.manifestation, "block": m.block.value, "feature": str(m.feature),
                 "task": m.task.name if m.task else None, "raw": num(m.raw),
                 "scaled": num(m.scaled), "score": num(m.score), "display": num(m.display),
                 "flag": m.flag, "reason": m.reason.value if m.reason else None}
                for m in self.manifestations
            ],
        }


def assemble_profile(vectors, table, grade=None, subject=None, config_hash=None):
    """Score one child's feature vectors against a norm table.

    Parameters
    ----------
    vectors : mapping TaskKind -> FeatureVector, or iterable of FeatureVector
    table : NormTable
    grade : int, optional
        Taken from the vectors' subject metadata when omitted.

    Raises
    ------
    MissingNormsError
        When the table has no entries for the grade.
    ConfigMismatchError
        When the vectors were extracted with a different feature configuration.
    """
    if not isinstance(vectors, dict):
        vectors = {v.task: v for v in vectors}
    meta = next((v.subject for v in vectors.values() if v.subject is not None), None)
    if grade is None:
        if meta is None:
            raise ValueError("grade unknown: pass grade= or vectors with subject metadata")
        grade = meta.grade
    sid = subject or (meta.id if meta else "")
    for v in vectors.values():
        if config_hash is None and v.config_hash:
            config_hash = v.config_hash
        elif v.config_hash and v.config_hash != config_hash:
            raise ConfigMismatchError("feature vectors come from different configurations")
    if table.config_hash and config_hash and table.config_hash != config_hash:
        raise ConfigMismatchError(
            f"feature configuration {config_hash} does not match norms fitted with {table.config_hash}")
    entries, components = table.for_grade(grade)
    k = table.steepness
    results = []
    scaled = {}
    for e in entries:
        task = e.concrete_task
        vec = vectors.get(task)
        if vec is None:
            sc, raw = Score(None, None, Missing.INSUFFICIENT), None
        else:
            raw = vec.get(e.feature)
            sc = manifestation_score(raw if raw is not None else vec.reason(e.feature), e, config_hash)
        scaled[e.manifestation] = sc.scaled
        results.append(ManifestationResult(
            e.manifestation, block_of(e.manifestation, e.task), e.feature, task, raw, sc.scaled,
            sc.value, None if sc.value is None else display_transform(sc.value, k), sc.reason))
    comp_results = []
    for c in components:
        sc = global_score(scaled, c, config_hash)
        comp_results.append(ComponentResult(
            c.id, c.label, sc.scaled, sc.value,
            None if sc.value is None else display_transform(sc.value, k), sc.reason))
    h = None
    if meta is not None and meta.oee is not None:
        h = hdc(meta.oee, meta.hpsq)
    return Profile(sid, grade, tuple(results), tuple(comp_results), h, config_hash or "")
