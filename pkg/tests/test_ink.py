import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graphoscale.errors import InsufficientDataError, IntegrityError, ParseError
from graphoscale.ink import (DeviceProfile, InkRecording, StrokeKind, TaskKind, format_recording,
                             handwriting_task_for_grade, parse_recording, resample_uniform,
                             segment_strokes)


def make(x, t=None, pen=None, **kw):
    n = len(x)
    t = np.arange(n) / 133.0 if t is None else t
    pen = np.ones(n, dtype=int) if pen is None else pen
    z = np.zeros(n)
    return InkRecording(x=x, y=kw.get("y", z), t=t, pen_state=pen, pressure=kw.get("p", z + 100),
                        tilt=z + 50, azimuth=z + 200)


def test_empty_file():
    with pytest.raises(InsufficientDataError):
        parse_recording("")


def test_three_lines_verbatim():
    text = "3\n1 2 0.0 1 10 20 300\n1.5 2.5 0.01 1 11 21 301\n2 3 0.02 0 12 22 0\n"
    rec = parse_recording(text)
    assert len(rec) == 3
    assert list(rec.x) == [1, 1.5, 2] and list(rec.pressure) == [300, 301, 0]
    assert list(rec.azimuth) == [10, 11, 12] and list(rec.tilt) == [20, 21, 22]


def test_tick_profile():
    text = "5\n" + "".join(f"0 0 {k} 1 0 0 1\n" for k in range(5))
    rec = parse_recording(text, DeviceProfile(t_scale_s=1 / 133))
    assert np.allclose(rec.t, np.arange(5) / 133, atol=1e-15)


@pytest.mark.parametrize("text,line", [
    ("2\n0 0 0 1 0 0 1\n", 1),
    ("1\n0 0 0 2 0 0 1\n", 2),
    ("1\n0 0 zero 1 0 0 1\n", 2),
    ("1\n0 0 0 1 0 0\n", 2),
    ("x\n", 1),
])
def test_malformed(text, line):
    with pytest.raises(ParseError) as exc:
        parse_recording(text)
    assert exc.value.line == line


def test_decreasing_timestamps():
    with pytest.raises(IntegrityError):
        parse_recording("3\n0 0 0 1 0 0 1\n0 0 2 1 0 0 1\n0 0 1 1 0 0 1\n")


def test_duplicate_timestamp_keeps_last():
    rec = parse_recording("3\n0 0 0 1 0 0 1\n5 0 0.5 1 0 0 1\n7 0 0.5 1 0 0 1\n")
    assert list(rec.x) == [0, 7]


def test_device_profile_text():
    p = DeviceProfile.from_text("# tablet\nx_scale_mm = 0.01\ny_scale_mm: 0.02\n")
    assert (p.x_scale_mm, p.y_scale_mm, p.t_scale_s) == (0.01, 0.02, 1.0)
    with pytest.raises(ParseError):
        DeviceProfile.from_text("bogus = 1")


def test_segmentation_examples():
    rec = make(np.arange(5.0), pen=[1, 1, 0, 0, 1])
    s = segment_strokes(rec)
    assert [(k.start, k.stop, k.kind) for k in s] == [
        (0, 2, StrokeKind.ON_SURFACE), (2, 4, StrokeKind.IN_AIR), (4, 5, StrokeKind.ON_SURFACE)]
    assert len(segment_strokes(make(np.arange(4.0)))) == 1


def test_segmentation_random_against_runlength(rng):
    pen = rng.integers(0, 2, 1000)
    rec = make(np.zeros(1000), pen=pen)
    runs = 1 + sum(1 for a, b in zip(pen[:-1], pen[1:]) if a != b)
    strokes = rec.strokes
    assert len(strokes) == runs
    assert strokes[0].start == 0 and strokes[-1].stop == 1000
    for a, b in zip(strokes[:-1], strokes[1:]):
        assert a.stop == b.start and a.kind != b.kind
    for s in strokes:
        assert np.all(pen[s.start:s.stop] == (1 if s.on_surface else 0))


def test_resample_identity():
    rec = make(np.sin(np.arange(50) / 7.0), t=np.arange(50) / 133.0)
    out = resample_uniform(rec, 133.0)
    assert np.max(np.abs(out.x - rec.x)) < 1e-12


def test_resample_linear():
    rec = make(np.array([0.0, 133.0]), t=np.array([0.0, 1.0]))
    out = resample_uniform(rec, 133.0)
    assert np.allclose(out.x, np.arange(134), atol=1e-9)


def test_resample_jittered_sine(rng):
    t = np.sort(np.arange(0, 2, 1 / 400.0) + rng.uniform(-4e-4, 4e-4, 800))
    t = np.clip(t, 0, None)
    rec = make(np.sin(2 * np.pi * 1.5 * t), t=t)
    out = resample_uniform(rec, 133.0)
    assert np.max(np.abs(out.x - np.sin(2 * np.pi * 1.5 * out.t))) < 1e-3


def test_resample_never_bridges_strokes():
    pen = np.array([1] * 20 + [0] * 20 + [1] * 20)
    rec = make(np.arange(60.0), t=np.arange(60) / 100.0, pen=pen)
    out = resample_uniform(rec, 133.0)
    for s in out.strokes:
        assert len(set(out.pen_state[s.start:s.stop])) == 1
    assert len(out.strokes) == 3


def test_handwriting_task_by_grade():
    assert handwriting_task_for_grade(0) is None
    assert handwriting_task_for_grade(1) is TaskKind.TSK8
    assert handwriting_task_for_grade(2) is TaskKind.TSK9
    assert handwriting_task_for_grade(3) is TaskKind.TSK10
    assert handwriting_task_for_grade(4) is TaskKind.TSK10
    assert TaskKind.parse("tsk7") is TaskKind.TSK7 and TaskKind.parse("3") is TaskKind.TSK3


records = st.lists(
    st.tuples(st.floats(-500, 500), st.floats(-500, 500), st.floats(0.001, 0.1), st.integers(0, 1),
              st.floats(0, 360), st.floats(0, 90), st.integers(0, 1023)),
    min_size=2, max_size=40)


@given(records)
def test_parse_format_fixed_point(rows):
    t = [float(v) for v in np.cumsum([r[2] for r in rows])]
    text = f"{len(rows)}\n" + "".join(
        f"{r[0]!r} {r[1]!r} {ti!r} {r[3]} {r[4]!r} {r[5]!r} {r[6]}\n" for r, ti in zip(rows, t))
    first = parse_recording(text)
    again = parse_recording(format_recording(first))
    assert format_recording(again) == format_recording(first)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=60))
def test_trailing_duplicate_state_keeps_segmentation(pen):
    n = len(pen)
    rec = make(np.arange(n, dtype=float), pen=pen)
    longer = make(np.arange(n + 1, dtype=float), pen=pen + [pen[-1]])
    a = [(s.start, s.kind) for s in rec.strokes]
    b = [(s.start, s.kind) for s in longer.strokes]
    assert a == b


@given(st.lists(st.integers(0, 1), min_size=2, max_size=40), st.floats(0.001, 100))
def test_units_commute_with_segmentation(pen, scale):
    n = len(pen)
    text = f"{n}\n" + "".join(f"{k} {k} {k} {b} 0 0 1\n" for k, b in enumerate(pen))
    raw = parse_recording(text)
    mm = parse_recording(text, DeviceProfile(scale, scale, scale / 10))
    assert [(s.start, s.stop, s.kind) for s in raw.strokes] == [
        (s.start, s.stop, s.kind) for s in mm.strokes]
