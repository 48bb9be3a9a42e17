import numpy as np
import pytest

from graphoscale import geometry, synth
from graphoscale.catalog import extract_all, parse_feature_key
from graphoscale.ink import TaskKind, format_recording
from graphoscale.stats import ncv


def feats(rec, *names):
    keys = [parse_feature_key(n) for n in names]
    fv = extract_all(rec, keys=keys)
    return [fv.get(k) for k in keys]


def test_generate_deterministic():
    cfg = synth.SynthConfig(task=TaskKind.TSK9, seed=3)
    assert format_recording(synth.generate(cfg)) == format_recording(synth.generate(cfg))
    other = synth.SynthConfig(task=TaskKind.TSK9, seed=4)
    assert format_recording(synth.generate(cfg)) != format_recording(synth.generate(other))


@pytest.mark.parametrize("kw", [{"n_loops": 0}, {"speed": 0.0}, {"scale": -1.0},
                                {"dwell": -0.1}, {"n_words": 0}])
def test_inconsistent_geometry_rejected(kw):
    with pytest.raises(ValueError):
        synth.SynthConfig(task=TaskKind.TSK3, **kw)


def test_nominal_rate_and_lifts():
    rec = synth.generate(synth.SynthConfig(task=TaskKind.TSK10, seed=1))
    assert np.median(np.diff(rec.t)) == pytest.approx(1 / synth.FS, rel=1e-6)
    assert any(not s.on_surface for s in rec.strokes)
    assert any(s.on_surface for s in rec.strokes)


def test_equal_loops_have_equal_maxima():
    cfg = synth.SynthConfig(task=TaskKind.TSK3, n_loops=8, timing_jitter=0.0, seed=0)
    es = geometry.vertical_extrema(synth.generate(cfg))
    assert len(es.maxima) == 8
    _, lmax = geometry.extrema_heights(es)
    assert ncv(lmax) < 1e-2  # sampled apices, exact geometry


def test_tremor_raises_mpstf():
    base = synth.SynthConfig(task=TaskKind.TSK1, seed=2)
    tremor = synth.SynthConfig(task=TaskKind.TSK1, seed=2, tremor_amplitude=0.5)
    (a,) = feats(synth.generate(base), "ON: MPSTF")
    (b,) = feats(synth.generate(tremor), "ON: MPSTF")
    assert b > a


def test_slow_doubles_duration_exactly():
    rec = synth.generate(synth.SynthConfig(task=TaskKind.TSK9, seed=5))
    slow = synth.apply_manifestation(rec, "slow", 2.0)
    d0, h0 = feats(rec, "DUR", "ON: SHEIGHT (median)")
    d1, h1 = feats(slow, "DUR", "ON: SHEIGHT (median)")
    assert d1 == pytest.approx(2 * d0, rel=1e-12)
    assert h1 == h0


def test_long_in_air_triples_air_duration():
    rec = synth.generate(synth.SynthConfig(task=TaskKind.TSK9, seed=5))
    air = synth.apply_manifestation(rec, "long-in-air", 3.0)
    a0, r0, on0 = feats(rec, "AIR: DUR", "DURR", "ON: DUR")
    a1, r1, on1 = feats(air, "AIR: DUR", "DURR", "ON: DUR")
    assert a1 == pytest.approx(3 * a0, rel=1e-9)
    assert on1 == pytest.approx(on0, rel=1e-9)
    assert r1 < r0


def test_uneven_amplitude_always_raises_lmax_ncv():
    wins = 0
    for seed in range(100):
        rec = synth.generate(synth.SynthConfig(task=TaskKind.TSK3, seed=seed))
        (a,) = feats(rec, "ON: V-LMAX (ncv)")
        (b,) = feats(synth.apply_manifestation(rec, "uneven-amplitude", 0.2, seed=seed),
                     "ON: V-LMAX (ncv)")
        wins += b > a
    assert wins == 100


def test_unknown_knob_and_negative_severity():
    rec = synth.generate(synth.SynthConfig(task=TaskKind.TSK3))
    with pytest.raises(ValueError, match="unknown manifestation knob"):
        synth.apply_manifestation(rec, "wobbly")
    with pytest.raises(ValueError):
        synth.apply_manifestation(rec, "slow", -1)


def test_every_manifestation_has_a_knob():
    from graphoscale.catalog import MANIFESTATIONS
    for m in MANIFESTATIONS:
        assert synth.knob_for_manifestation(m.id) in synth.KNOBS
    with pytest.raises(KeyError):
        synth.knob_for_manifestation("nope")


@pytest.mark.parametrize("knob", synth.KNOBS)
def test_knobs_deterministic_and_valid(knob):
    rec = synth.generate(synth.SynthConfig(task=TaskKind.TSK9, seed=8))
    a = synth.apply_manifestation(rec, knob, seed=4)
    b = synth.apply_manifestation(rec, knob, seed=4)
    assert format_recording(a) == format_recording(b)
    assert np.all(np.diff(a.t) > 0)
    assert format_recording(a) != format_recording(rec)


def test_maturity_trends():
    rng = np.random.default_rng(0)
    young = [synth.maturity_config(TaskKind.TSK3, 0, rng, 0) for _ in range(30)]
    old = [synth.maturity_config(TaskKind.TSK3, 4, rng, 0) for _ in range(30)]
    assert np.mean([c.speed for c in old]) > np.mean([c.speed for c in young])
    assert np.mean([c.timing_jitter for c in old]) < np.mean([c.timing_jitter for c in young])


def test_cohort_determinism_and_labels(tmp_path):
    spec = synth.CohortSpec(grades=(1, 3), intact_per_grade=2, injected={"slow": 1},
                            tasks=(TaskKind.TSK3, TaskKind.TSK8, TaskKind.TSK10), seed=9)
    a = synth.write_cohort(synth.generate_cohort(spec), tmp_path / "a")
    b = synth.write_cohort(synth.generate_cohort(spec), tmp_path / "b")
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for f in files_a:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    manifest = synth.read_manifest(a / "manifest.csv")
    assert len(manifest) == 6
    for sid, (meta, knobs) in manifest.items():
        assert (meta.oee >= 3) == bool(knobs)
        hw = {1: "TSK8", 3: "TSK10"}[meta.grade]
        assert (a / sid / f"{hw}.txt").exists()
        assert (a / sid / "TSK3.txt").exists()


# knob orthogonality over the shipped scale features, 20 seeds per knob.
# Shift is |injected - intact| / max(|intact|, intact IQR), median over seeds.

ORTHO_GRADE = 3
ORTHO_SEEDS = 20
COUPLED = {
    "slow": "time dilation also doubles in-air stroke durations",
    "dysfluent": "positional tremor inflates extremum-height variability",
    "monotone": "flattening speed moves velocity slopes whose intact level is near zero",
    "uniform-amplitude": "rescaling strokes changes speed trends whose intact level is near zero",
    "line-drift": "baseline wander moves maxima and minima of the same task together",
}


@pytest.fixture(scope="module")
def ortho_baseline():
    from graphoscale import pipeline, scoring
    from graphoscale.stats import iqr

    scale = pipeline.default_scale()
    items = [(i.manifestation, i.feature, scoring.resolve_task(i.task, ORTHO_GRADE))
             for i in scale.items]

    def measure(knobs, seed):
        s = synth.generate_subject("o", ORTHO_GRADE, knobs, seed=seed)
        vecs = {}
        for _, f, t in items:
            vecs.setdefault(t, []).append(f)
        vecs = {t: extract_all(s.recordings[t], keys=ks) for t, ks in vecs.items()}
        return {m: vecs[t].get(f) for m, f, t in items}

    base = [measure((), seed) for seed in range(ORTHO_SEEDS)]
    spread = {m: iqr([b[m] for b in base]) for m, _, _ in items}
    return measure, base, spread


@pytest.mark.slow
@pytest.mark.parametrize("knob", [
    pytest.param(k, marks=pytest.mark.xfail(reason=COUPLED[k], strict=True)) if k in COUPLED else k
    for k in synth.KNOBS])
def test_knob_orthogonality(knob, ortho_baseline):
    measure, base, spread = ortho_baseline
    shifts = {}
    injected = [measure((knob,), seed) for seed in range(ORTHO_SEEDS)]
    for m in spread:
        rel = []
        for i, b in zip(injected, base):
            if i[m] is None or b[m] is None:
                continue
            den = max(abs(b[m]), spread[m])
            rel.append(abs(i[m] - b[m]) / den if den > 0 else (0.0 if i[m] == b[m] else np.inf))
        shifts[m] = float(np.median(rel))
    targets = synth.KNOB_TARGETS[knob]
    moved = min(shifts[m] for m in targets)
    # relative change is undefined where intact children show no spread
    others = {m: v for m, v in shifts.items() if m not in targets and spread[m] > 1e-6}
    worst = max(others, key=others.get)
    assert moved >= 3 * others[worst], (moved, worst, others[worst])
