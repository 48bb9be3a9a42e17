"""
End-to-end workflow: scale definition, cohort extraction, norm and component
fitting, scoring, and the simulation experiment that selects the scale.
"""

import json
import logging
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import modeling, scoring, stats, synth
from .catalog import (MANIFESTATIONS, MANIFESTATIONS_BY_ID, FeatureConfig, extract_all,
                      parse_feature_key)
from .ink import TaskKind
from .scoring import (COMPONENT_LABELS, HANDWRITING_SLOT, ComponentMember, ComponentModel,
                      NormTable, ScaleItem, block_of, resolve_task)

log = logging.getLogger(__name__)

SCALE_FORMAT = "graphoscale-scale"


# --------------------------------------------------------------------------
# scale definition


@dataclass(eq=False)
class Scale:
    items: list
    provenance: str = ""
    audit: dict = field(default_factory=dict)

    def to_json(self):
        return {"format": SCALE_FORMAT, "version": 1, "provenance": self.provenance,
                "items": [i.to_json() for i in self.items], "audit": self.audit}

    def dumps(self):
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, d):
        if d.get("format") != SCALE_FORMAT:
            raise ValueError("not a scale file")
        return cls([ScaleItem.from_json(i) for i in d["items"]], d.get("provenance", ""),
                   d.get("audit", {}))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def tasks_for_grade(self, grade):
        out = {}
        for item in self.items:
            task = resolve_task(item.task, grade)
            if task is not None:
                out.setdefault(task, []).append(item.feature)
        return dict(sorted(out.items(), key=lambda kv: kv[0].index))


def default_scale():
    """The scale shipped with the package (selected on simulated data)."""
    text = resources.files("graphoscale").joinpath("data/scale.json").read_text(encoding="utf-8")
    return Scale.from_json(json.loads(text))


def default_norms():
    text = resources.files("graphoscale").joinpath("data/norms.json").read_text(encoding="utf-8")
    return NormTable.from_json(json.loads(text))


# --------------------------------------------------------------------------
# extraction and fitting


def extract_subject(recordings, scale, grade, config=None):
    """Feature vectors restricted to the scale's features, keyed by task."""
    cfg = config or FeatureConfig()
    out = {}
    for task, keys in scale.tasks_for_grade(grade).items():
        rec = recordings.get(task)
        if rec is not None:
            out[task] = extract_all(rec, cfg, sorted(set(keys)))
    return out


def is_intact(meta):
    """Intact: handwriting-disabilities criterion 0 (no label counts as intact)."""
    if meta.oee is None:
        return True
    return scoring.hdc(meta.oee, meta.hpsq) == 0


def _scaled_matrix(subject_vectors, metas, table, grade_entries):
    """Rows of scaled manifestation features (None when missing)."""
    rows = []
    for vecs, meta in zip(subject_vectors, metas):
        entries = grade_entries.get(meta.grade, [])
        row = {}
        for e in entries:
            v = vecs.get(e.concrete_task)
            raw = v.get(e.feature) if v is not None else None
            row[e.manifestation] = None if raw is None else e.scale(raw)
        rows.append(row)
    return rows


def _label_components(fit, names, slots):
    """Assign G1-G4 labels by the majority report block of each component's members."""
    blocks = {label: block for label, (_, block) in COMPONENT_LABELS.items()}
    wanted = {b: label for label, b in blocks.items()}
    votes = []
    for j, w in enumerate(fit.weights):
        if w is None:
            continue
        idx, weights, signs = w
        tally = {}
        for i, wt in zip(idx, weights):
            b = block_of(names[i], slots[names[i]])
            tally[b] = tally.get(b, 0.0) + wt
        votes.append((j, sorted(tally.items(), key=lambda kv: (-kv[1], kv[0].value))))
    assigned, used = {}, set()
    # strongest majorities choose first
    for j, tally in sorted(votes, key=lambda v: -v[1][0][1]):
        for b, _ in tally:
            label = wanted[b]
            if label not in used:
                assigned[j] = label
                used.add(label)
                break
    for j, _ in votes:
        if j not in assigned:
            free = [lab for lab in COMPONENT_LABELS if lab not in used]
            if not free:
                continue
            assigned[j] = free[0]
            used.add(free[0])
    return assigned


def fit_components(rows, metas, intact, grades, scale, config_hash="", quantile=0.95,
                   seed=modeling.SEED):
    """PCA/promax on pooled scaled features; per-grade median and threshold of ``o``.

    Returns
    -------
    (list of ComponentModel, ComponentFit or None, names)
    """
    names = [i.manifestation for i in scale.items]
    slots = {i.manifestation: i.task for i in scale.items}
    complete = [k for k, r in enumerate(rows) if all(r.get(n) is not None for n in names)]
    if len(complete) < len(names) + 2:
        # grade 0 rows lack handwriting; fall back to manifestations present everywhere
        names = [n for n in names if slots[n] != HANDWRITING_SLOT]
        complete = [k for k, r in enumerate(rows) if all(r.get(n) is not None for n in names)]
    if len(names) < 3 or len(complete) < len(names) + 2:
        log.warning("too few complete rows for component analysis")
        return [], None, names
    F = np.array([[rows[k][n] for n in names] for k in complete])
    fit = modeling.pca_promax(F, seed=seed, max_components=4)
    labels = _label_components(fit, names, slots)
    models = []
    for j in sorted(labels, key=lambda j: labels[j]):
        idx, weights, signs = fit.weights[j]
        members = tuple(ComponentMember(names[i], float(w), int(s))
                        for i, w, s in zip(idx, weights, signs))
        # exact normalisation after float conversion
        total = sum(m.weight for m in members)
        members = tuple(ComponentMember(m.manifestation, m.weight / total, m.sign) for m in members)
        for grade in grades:
            os_ = []
            for k in complete:
                if metas[k].grade == grade and intact[k]:
                    os_.append(sum(m.weight * (rows[k][m.manifestation] if m.sign > 0
                                               else 1 - rows[k][m.manifestation]) for m in members))
            if len(os_) < 3:
                continue
            med = stats.median(os_)
            thr = stats.quantile(os_, quantile)
            if thr == med:
                continue
            models.append(ComponentModel(labels[j], grade, members, med, thr,
                                         COMPONENT_LABELS[labels[j]][0], config_hash))
    return models, fit, names


def build_norm_table(subject_vectors, metas, scale, config=None, grades=None, overrides=None,
                     min_intact=scoring.DEFAULT_MIN_INTACT, components=True, provenance=""):
    """Fit per-grade norm entries and global components.

    Parameters
    ----------
    subject_vectors : list of mapping TaskKind -> FeatureVector
    metas : list of SubjectMeta (aligned)
    """
    cfg = config or FeatureConfig()
    h = cfg.hash
    intact = [is_intact(m) for m in metas]
    grades = sorted({m.grade for m in metas}) if grades is None else list(grades)
    entries = []
    for grade in grades:
        flat, mask = [], []
        for vecs, meta, ok in zip(subject_vectors, metas, intact):
            if meta.grade != grade:
                continue
            for v in vecs.values():
                flat.append(v)
                mask.append(ok)
        entries += scoring.fit_norms(flat, mask, grade, scale.items, config_hash=h,
                                     min_intact=min_intact,
                                     overrides=(overrides or {}).get(grade))
    table = NormTable(entries, [], h, provenance=provenance)
    if components:
        by_grade = {}
        for e in entries:
            by_grade.setdefault(e.grade, []).append(e)
        rows = _scaled_matrix(subject_vectors, metas, table, by_grade)
        table.components, _, _ = fit_components(rows, metas, intact, grades, scale, h)
    return table


def score_subject(vectors, table, meta=None):
    return scoring.assemble_profile(vectors, table, grade=meta.grade if meta else None,
                                    subject=meta.id if meta else None)


# --------------------------------------------------------------------------
# selection experiment


@dataclass(frozen=True)
class SimulationShape:
    groups: int = 4
    intact: int = 20
    manifested: int = 12
    grade: int = 4
    severity: float = 1.0
    seed: int = modeling.SEED


def simulate_task(manifestation_id, task, shape=None, features=None, config=None):
    """Labelled feature matrix for one manifestation on one task.

    Each group is one simulated proficient writer producing ``intact`` normal and
    ``manifested`` samples with the manifestation's knob applied.

    Returns
    -------
    (X, y, groups, feature keys)
    """
    shape = shape or SimulationShape()
    spec = MANIFESTATIONS_BY_ID[manifestation_id]
    keys = list(features or spec.features_for(task))
    knob = synth.knob_for_manifestation(manifestation_id)
    cfg = config or FeatureConfig()
    X, y, groups = [], [], []
    for g in range(shape.groups):
        writer = np.random.default_rng([shape.seed, g, 101])
        for i in range(shape.intact + shape.manifested):
            base = synth.maturity_config(task, shape.grade, np.random.default_rng([shape.seed, g, 101]),
                                         seed=int(writer.integers(2 ** 31)))
            rec = synth.generate(base)
            label = int(i >= shape.intact)
            if label:
                rec = synth.apply_manifestation(rec, knob, synth.KNOB_DEFAULTS[knob] * shape.severity,
                                                seed=base.seed)
            fv = extract_all(rec, cfg, keys)
            X.append([fv.get(k) if fv.get(k) is not None else np.nan for k in keys])
            y.append(label)
            groups.append(g)
    X = np.array(X, dtype=float)
    # impute missing cells with the column median so one failure does not drop a sample
    for j in range(X.shape[1]):
        col = X[:, j]
        bad = ~np.isfinite(col)
        if bad.any():
            col[bad] = np.median(col[~bad]) if (~bad).any() else 0.0
    return X, np.array(y), np.array(groups), keys


def select_for_manifestation(manifestation_id, shape=None, config=None, selection=None):
    """Run the LOGO LASSO per candidate task and pick the most important feature."""
    spec = MANIFESTATIONS_BY_ID[manifestation_id]
    models, audit = {}, {}
    for task in spec.candidate_tasks:
        X, y, groups, keys = simulate_task(manifestation_id, task, shape, config=config)
        res = modeling.grid_search_logo(X, y, groups, selection, features=keys)
        models[task] = res.model
        audit[task.name] = {"best_C": res.best_C, "mean_bacc": float(res.mean_bacc[res.best_index]),
                            "weights": {str(k): float(w) for k, w in zip(keys, res.model.weights)}}
    result = modeling.select_feature(models)
    return result, audit


def pair_for_feature(manifestation_id, feature, weight, intact_subjects, config=None):
    """Choose the task (or handwriting slot) for a selected feature.

    ``intact_subjects`` is a list of (SubjectMeta, mapping TaskKind -> InkRecording).
    """
    spec = MANIFESTATIONS_BY_ID[manifestation_id]
    cfg = config or FeatureConfig()
    tasks = [t for t in spec.candidate_tasks if feature in spec.features_for(t)]
    data = {}
    slots = [t for t in tasks if t.is_graphomotor]
    if any(t.is_handwriting for t in tasks):
        slots.append(HANDWRITING_SLOT)
    for slot in slots:
        vals, grades = [], []
        for meta, recs in intact_subjects:
            task = resolve_task(slot, meta.grade)
            if task is None or task not in recs or task not in tasks:
                continue
            v = extract_all(recs[task], cfg, [feature]).get(feature)
            if v is not None:
                vals.append(weight * v)
                grades.append(meta.grade)
        if len(set(grades)) >= 3:
            data[slot] = (vals, grades)
    if not data:
        raise ValueError(f"{manifestation_id}: no task spans three grades")
    return modeling.pair_task(data)


def _direction_consistent(res, spec):
    """Best-ranked feature whose fitted sign matches the manifestation's documented direction.

    Falls back to the overall winner when no ranked feature agrees.
    """
    for row in res.table:
        total = sum(row["weights"].values())
        if total != 0 and (1 if total > 0 else -1) == spec.polarity(row["feature"]):
            return row["feature"], spec.polarity(row["feature"]), True
    return res.winner, res.sign, False


def build_scale(shape=None, pairing_cohort=None, config=None, selection=None,
                manifestations=None, progress=None):
    """Select a feature, polarity and task for every manifestation.

    Parameters
    ----------
    pairing_cohort : list of CohortSubject
        Intact synthetic children across grades used for task pairing.
    """
    items, audit = [], {}
    specs = [MANIFESTATIONS_BY_ID[m] for m in manifestations] if manifestations else MANIFESTATIONS
    intact = [(s.meta, s.recordings) for s in (pairing_cohort or []) if not s.knobs]
    for spec in specs:
        res, sel_audit = select_for_manifestation(spec.id, shape, config, selection)
        feature, weight, agrees = _direction_consistent(res, spec)
        pairing = pair_for_feature(spec.id, feature, weight, intact, config)
        slot = pairing.task
        items.append(ScaleItem(spec.id, feature, slot, weight))
        audit[spec.id] = {
            "feature": str(feature),
            "weight": weight,
            "direction_consistent": agrees,
            "ranking": [{"feature": str(r["feature"]), "mean_rank": r["mean_rank"],
                         "mean_abs_weight": r["mean_abs_weight"]} for r in res.table],
            "tasks": sel_audit,
            "pairing": {"task": scoring.slot_name(slot),
                        "rho": {scoring.slot_name(k): v for k, v in pairing.rho.items()},
                        "monotone": {scoring.slot_name(k): v for k, v in pairing.monotone.items()},
                        "fallback": pairing.fallback},
        }
        if progress:
            progress(spec.id, feature, slot, weight)
    return Scale(items, "selected on simulated recordings", audit)


__all__ = [
    "Scale", "default_scale", "default_norms", "extract_subject", "build_norm_table",
    "fit_components", "score_subject", "simulate_task", "select_for_manifestation",
    "pair_for_feature", "build_scale", "SimulationShape", "is_intact", "parse_feature_key",
    "TaskKind",
]
