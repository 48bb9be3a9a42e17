"""Command-line interface.

Exit codes: 0 ok, 1 usage error, 2 partial data failure, 3 missing norms or
feature-configuration mismatch.
"""

import argparse
import csv
import io
import json
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import modeling, pipeline, scoring, synth
from .catalog import (CATALOG_KEYS, FeatureConfig, extract_all, parse_feature_key,
                      vectors_from_csv, vectors_to_csv)
from .errors import ConfigMismatchError, GraphoscaleError, MissingNormsError
from .ink import DeviceProfile, SubjectMeta, TaskKind, read_recording
from .report import render_svg

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_NORMS = 0, 1, 2, 3

TASK_RE = re.compile(r"TSK(\d+)", re.I)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _err(msg):
    print(f"graphoscale: {msg}", file=sys.stderr)


def _write(text, out):
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _dump_json(obj):
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _task_of(path, default=None):
    m = TASK_RE.search(Path(path).stem)
    if m:
        idx = int(m.group(1))
        for t in TaskKind:
            if t.index == idx:
                return t
    return default


def _collect(inputs):
    """Recording files from files and directories, in sorted order."""
    files = []
    for p in map(Path, inputs):
        if p.is_dir():
            files += sorted(q for q in p.rglob("*.txt") if q.is_file())
        elif p.exists():
            files.append(p)
        else:
            raise UsageError(f"no such file or directory: {p}")
    return sorted(set(files), key=lambda q: str(q))


def _manifests(files, explicit=None):
    """Subject metadata from manifest files next to the subject directories."""
    metas = {}
    paths = [Path(explicit)] if explicit else sorted(
        {f.parent.parent / "manifest.csv" for f in files} | {f.parent / "manifest.csv" for f in files})
    for m in paths:
        if m.is_file():
            metas.update({sid: meta for sid, (meta, _) in synth.read_manifest(m).items()})
    return metas


def _config(path):
    return FeatureConfig.load(path) if path else FeatureConfig()


def _scale(path):
    return pipeline.Scale.load(path) if path else pipeline.default_scale()


def _norms(path):
    return scoring.NormTable.load(path) if path else pipeline.default_norms()


def _read_all(files, args, metas):
    """Parse recordings; return [(path, rec)] and the number of failures."""
    profile = DeviceProfile.load(args.device) if getattr(args, "device", None) else None
    out, failed = [], 0
    for f in files:
        task = _task_of(f, getattr(args, "task", None))
        if task is None:
            _err(f"{f}: cannot infer task from file name (use --task)")
            failed += 1
            continue
        meta = metas.get(f.parent.name)
        if meta is None and getattr(args, "grade", None) is not None:
            meta = SubjectMeta(getattr(args, "subject", None) or f.parent.name, args.grade)
        try:
            out.append((f, read_recording(f, profile, task=task, subject=meta)))
        except (GraphoscaleError, OSError) as exc:
            _err(f"{f}: {exc}")
            failed += 1
    return out, failed


# --------------------------------------------------------------------------
# subcommands


def cmd_extract(args):
    files = _collect(args.inputs)
    cfg = _config(args.config)
    keys = CATALOG_KEYS
    if args.scale:
        keys = sorted({i.feature for i in _scale(args.scale).items})
    recs, failed = _read_all(files, args, _manifests(files, args.manifest))
    vectors = [extract_all(rec, cfg, keys) for _, rec in recs]
    if args.format == "json":
        _write(_dump_json([v.to_json() for v in vectors]), args.output)
    else:
        _write(vectors_to_csv(vectors, keys), args.output)
    return EXIT_PARTIAL if failed else EXIT_OK


def _load_vectors(path):
    return vectors_from_csv(Path(path).read_text(encoding="utf-8"))


def _cohort_vectors(args, scale, cfg):
    """Feature vectors grouped per subject, from a features CSV or a cohort directory."""
    src = Path(args.cohort)
    failed = 0
    if src.is_file():
        vectors = _load_vectors(src)
        hashes = {v.config_hash for v in vectors if v.config_hash}
        if args.config and hashes and hashes != {cfg.hash}:
            raise ConfigMismatchError(
                f"features were extracted with {sorted(hashes)}, requested {cfg.hash}")
        if not args.config and len(hashes) == 1:
            cfg_hash = hashes.pop()
        else:
            cfg_hash = cfg.hash
    elif src.is_dir():
        files = _collect([src])
        recs, failed = _read_all(files, args, _manifests(files, args.manifest))
        keys = sorted({i.feature for i in scale.items})
        vectors = [extract_all(rec, cfg, keys) for _, rec in recs]
        cfg_hash = cfg.hash
    else:
        raise UsageError(f"no such file or directory: {src}")
    subjects = {}
    for v in vectors:
        if v.subject is None:
            raise UsageError("cohort rows need subject metadata (manifest.csv or subject columns)")
        subjects.setdefault(v.subject.id, (v.subject, {}))[1][v.task] = v
    ids = sorted(subjects)
    metas = [subjects[i][0] for i in ids]
    return [subjects[i][1] for i in ids], metas, cfg_hash, failed


def _overrides(specs, by, reason):
    out = {}
    for s in specs or []:
        m = re.fullmatch(r"([\w-]+):(\d+)=([-+0-9.eE]+)", s)
        if not m:
            raise UsageError(f"bad --override-threshold {s!r}; expected MANIFESTATION:GRADE=VALUE")
        if not by or not reason:
            raise UsageError("--override-threshold needs --override-by and --override-reason")
        out.setdefault(int(m.group(2)), {})[m.group(1)] = {
            "value": float(m.group(3)), "by": by, "reason": reason}
    return out


def cmd_fit_norms(args):
    scale = _scale(args.scale)
    cfg = _config(args.config)
    groups, metas, cfg_hash, failed = _cohort_vectors(args, scale, cfg)
    if args.grade is not None:
        keep = [i for i, m in enumerate(metas) if m.grade in args.grade]
        groups, metas = [groups[i] for i in keep], [metas[i] for i in keep]
    if not metas:
        raise UsageError("no subjects in the cohort")
    overrides = _overrides(args.override_threshold, args.override_by, args.override_reason)
    cfg_for_hash = _HashOnly(cfg_hash)
    table = pipeline.build_norm_table(groups, metas, scale, cfg_for_hash,
                                      min_intact=args.min_intact, overrides=overrides,
                                      components=not args.no_components,
                                      provenance=args.provenance)
    _write(table.dumps(), args.output)
    return EXIT_PARTIAL if failed else EXIT_OK


class _HashOnly:
    """Stands in for a FeatureConfig when only its hash is known."""

    def __init__(self, h):
        self.hash = h


def cmd_components(args):
    table = _norms(args.norms)
    scale = pipeline.Scale([scoring.ScaleItem(e.manifestation, e.feature, e.task, e.weight)
                            for e in table.entries if e.grade == table.grades[-1]])
    vectors = _load_vectors(args.features)
    subjects = {}
    for v in vectors:
        if v.config_hash and table.config_hash and v.config_hash != table.config_hash:
            raise ConfigMismatchError("features and norms use different feature configurations")
        subjects.setdefault(v.subject.id, (v.subject, {}))[1][v.task] = v
    ids = sorted(subjects)
    metas = [subjects[i][0] for i in ids]
    groups = [subjects[i][1] for i in ids]
    by_grade = {}
    for e in table.entries:
        by_grade.setdefault(e.grade, []).append(e)
    rows = pipeline._scaled_matrix(groups, metas, table, by_grade)
    intact = [pipeline.is_intact(m) for m in metas]
    models, fit, names = pipeline.fit_components(rows, metas, intact, table.grades, scale,
                                                 table.config_hash, seed=args.seed)
    out = {"format": "graphoscale-components", "version": 1, "manifestations": names,
           "components": [scoring._component_json(c) for c in models]}
    if fit is not None:
        out.update({"eigenvalues": [float(v) for v in fit.eigenvalues],
                    "permutation_thresholds": [float(v) for v in fit.thresholds],
                    "n_components": fit.n_components,
                    "loadings": [[float(v) for v in row] for row in fit.rotated]})
    if args.update_norms:
        table.components = models
        table.save(args.norms)
    _write(_dump_json(out), args.output)
    return EXIT_OK


def _select_from_csv(path, seed):
    """Rows: task, group, label, then feature columns."""
    rows = list(csv.reader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    if not rows or rows[0][:3] != ["task", "group", "label"]:
        raise UsageError("selection CSV must start with columns task,group,label")
    keys = [parse_feature_key(h) for h in rows[0][3:]]
    data = {}
    for r in rows[1:]:
        data.setdefault(r[0], []).append(r[1:])
    models, audit = {}, {}
    for task in sorted(data):
        arr = data[task]
        groups = np.array([a[0] for a in arr])
        y = np.array([int(a[1]) for a in arr])
        X = np.array([[float(v) for v in a[2:]] for a in arr])
        res = modeling.grid_search_logo(X, y, groups, modeling.SelectionConfig(seed=seed),
                                        features=keys)
        models[task] = res.model
        audit[task] = {"best_C": res.best_C, "mean_bacc": float(res.mean_bacc[res.best_index]),
                       "weights": {str(k): float(w) for k, w in zip(keys, res.model.weights)}}
    sel = modeling.select_feature(models)
    return {"winner": str(sel.winner), "sign": sel.sign,
            "ranking": [{"feature": str(r["feature"]), "mean_rank": r["mean_rank"],
                         "mean_abs_weight": r["mean_abs_weight"]} for r in sel.table],
            "tasks": audit}


def cmd_select(args):
    if args.features:
        out = {"format": "graphoscale-selection", "version": 1,
               "results": {"input": _select_from_csv(args.features, args.seed)}}
        _write(_dump_json(out), args.output)
        return EXIT_OK
    ids = args.manifestation or [m.id for m in pipeline.MANIFESTATIONS]
    shape = pipeline.SimulationShape(args.groups, args.intact, args.manifested, args.sim_grade,
                                     seed=args.seed)
    results = {}
    for mid in ids:
        if mid not in pipeline.MANIFESTATIONS_BY_ID:
            raise UsageError(f"unknown manifestation {mid!r}")
        sel, audit = pipeline.select_for_manifestation(mid, shape)
        results[mid] = {"winner": str(sel.winner), "sign": sel.sign,
                        "ranking": [{"feature": str(r["feature"]), "mean_rank": r["mean_rank"],
                                     "mean_abs_weight": r["mean_abs_weight"]} for r in sel.table],
                        "tasks": audit}
    _write(_dump_json({"format": "graphoscale-selection", "version": 1, "results": results}),
           args.output)
    return EXIT_OK


def cmd_score(args):
    table = _norms(args.norms)
    cfg = _config(args.config)
    failed = 0
    if args.features:
        vectors = _load_vectors(args.features)
    else:
        files = _collect(args.inputs)
        recs, failed = _read_all(files, args, _manifests(files, args.manifest))
        keys = sorted({e.feature for e in table.entries})
        vectors = [extract_all(rec, cfg, keys) for _, rec in recs]
    subjects = {}
    for v in vectors:
        sid = v.subject.id if v.subject else (args.subject or "subject")
        subjects.setdefault(sid, []).append(v)
    if not subjects:
        raise UsageError("nothing to score")
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    for sid in sorted(subjects):
        vecs = {v.task: v for v in subjects[sid]}
        grade = args.grade
        profile = scoring.assemble_profile(vecs, table, grade=grade, subject=sid)
        doc = profile.to_json()
        doc["steepness"] = table.steepness
        doc["provenance"] = table.provenance
        (out_dir / f"{sid}.json").write_text(_dump_json(doc), encoding="utf-8")
        if not args.json_only:
            (out_dir / f"{sid}.svg").write_text(render_svg(profile, table), encoding="utf-8")
        flags = ", ".join(profile.flags) or "none"
        print(f"{sid}: flags: {flags}")
    return EXIT_PARTIAL if failed else EXIT_OK


def _knob_counts(specs):
    out = {}
    for s in specs or []:
        knob, _, n = s.partition("=")
        if knob not in synth.KNOB_DEFAULTS:
            raise UsageError(f"unknown knob {knob!r}; choose from {', '.join(synth.KNOB_DEFAULTS)}")
        try:
            out[knob] = int(n or 1)
        except ValueError:
            raise UsageError(f"bad count in --inject {s!r}") from None
    return out


def cmd_synth(args):
    tasks = None
    if args.tasks:
        tasks = tuple(_task_of(t) for t in args.tasks.split(","))
        if None in tasks:
            raise UsageError(f"bad --tasks {args.tasks!r}")
    spec = synth.CohortSpec(tuple(args.grades), args.intact, _knob_counts(args.inject),
                            args.severity, tasks, args.seed)
    subjects = synth.generate_cohort(spec)
    synth.write_cohort(subjects, args.output)
    print(f"wrote {len(subjects)} subjects to {args.output}")
    return EXIT_OK


def cmd_hdc(args):
    text = Path(args.labels).read_text(encoding="utf-8") if args.labels != "-" else sys.stdin.read()
    rows = list(csv.DictReader(io.StringIO(text)))
    if not text.strip():
        _write("", args.output)
        return EXIT_OK
    header = next(csv.reader(io.StringIO(text)))
    if "oee" not in header:
        raise UsageError("labels CSV needs an 'oee' column")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header + ["hdc"])
    failed = 0
    for k, r in enumerate(rows, start=2):
        try:
            hpsq = r.get("hpsq")
            value = scoring.hdc(int(r["oee"]), int(hpsq) if hpsq not in (None, "") else None)
        except (ValueError, TypeError) as exc:
            _err(f"line {k}: {exc}")
            failed += 1
            continue
        w.writerow([r[h] for h in header] + [value])
    _write(buf.getvalue(), args.output)
    return EXIT_PARTIAL if failed else EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser():
    p = _Parser(prog="graphoscale", description="Handwriting-difficulty rating from pen recordings.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common_ink(sp):
        sp.add_argument("--config", help="feature configuration JSON")
        sp.add_argument("--device", help="device profile (key = value lines)")
        sp.add_argument("--manifest", help="cohort manifest CSV with subject labels")
        sp.add_argument("--task", type=lambda s: _task_of(s), help="task when not in file names")

    sp = sub.add_parser("extract", help="extract features from recordings")
    sp.add_argument("inputs", nargs="+", help="recording files or directories")
    common_ink(sp)
    sp.add_argument("--grade", type=int, help="grade for recordings without a manifest")
    sp.add_argument("--subject", help="subject id for recordings without a manifest")
    sp.add_argument("--scale", help="restrict to the features of this scale file")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("-o", "--output", help="output file (default: stdout)")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("fit-norms", help="fit grade-wise norm tables")
    sp.add_argument("cohort", help="features CSV or cohort directory with manifest.csv")
    common_ink(sp)
    sp.add_argument("--scale", help="scale JSON (default: the shipped scale)")
    sp.add_argument("--grade", type=int, nargs="+", help="grades to fit (default: all)")
    sp.add_argument("--min-intact", type=int, default=scoring.DEFAULT_MIN_INTACT)
    sp.add_argument("--override-threshold", action="append", metavar="MANIFESTATION:GRADE=VALUE",
                    help="manual threshold in scaled units (repeatable)")
    sp.add_argument("--override-by", help="who set the manual thresholds")
    sp.add_argument("--override-reason", help="why the thresholds were overridden")
    sp.add_argument("--no-components", action="store_true", help="skip component analysis")
    sp.add_argument("--provenance", default="", help="free-text provenance stored in the file")
    sp.add_argument("-o", "--output", help="output norm table (default: stdout)")
    sp.set_defaults(func=cmd_fit_norms)

    sp = sub.add_parser("components", help="principal components of scaled manifestations")
    sp.add_argument("features", help="features CSV of the cohort")
    sp.add_argument("--norms", help="norm table JSON (default: shipped)")
    sp.add_argument("--seed", type=int, default=modeling.SEED)
    sp.add_argument("--update-norms", action="store_true",
                    help="write the fitted components back into the norm table")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_components)

    sp = sub.add_parser("select", help="feature selection experiment")
    sp.add_argument("--features", help="CSV with task,group,label then feature columns")
    sp.add_argument("--manifestation", action="append", help="simulate this manifestation (repeatable)")
    sp.add_argument("--groups", type=int, default=4)
    sp.add_argument("--intact", type=int, default=20)
    sp.add_argument("--manifested", type=int, default=12)
    sp.add_argument("--sim-grade", type=int, default=4)
    sp.add_argument("--seed", type=int, default=modeling.SEED)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("score", help="score a child against norms")
    sp.add_argument("inputs", nargs="*", help="recording files or subject directories")
    common_ink(sp)
    sp.add_argument("--features", help="score rows of a features CSV instead of recordings")
    sp.add_argument("--norms", help="norm table JSON (default: shipped synthetic norms)")
    sp.add_argument("--grade", type=int, help="grade when no manifest is available")
    sp.add_argument("--subject", help="subject id when no manifest is available")
    sp.add_argument("--json-only", action="store_true", help="do not write SVG reports")
    sp.add_argument("-o", "--output", default=".", help="output directory")
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("synth", help="generate a synthetic cohort")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.add_argument("--grades", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    sp.add_argument("--intact", type=int, default=50, help="intact subjects per grade")
    sp.add_argument("--inject", action="append", metavar="KNOB=N",
                    help="subjects per grade with this knob (repeatable)")
    sp.add_argument("--severity", type=float, default=1.0)
    sp.add_argument("--tasks", help="comma-separated tasks, e.g. TSK1,TSK3")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("hdc", help="append the handwriting-disabilities criterion")
    sp.add_argument("labels", help="CSV with oee and hpsq columns ('-' for stdin)")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_hdc)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (MissingNormsError, ConfigMismatchError) as exc:
        _err(str(exc))
        return EXIT_NORMS
    except GraphoscaleError as exc:
        _err(str(exc))
        return EXIT_PARTIAL
    except ValueError as exc:
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
