import csv
import io
import json
from importlib import resources

import jsonschema
import pytest
from referencing import Registry, Resource

from graphoscale import cli, pipeline
from graphoscale.catalog import parse_feature_key
from graphoscale.scoring import HANDWRITING_SLOT, ScaleItem
from graphoscale.ink import TaskKind

ITEMS = [
    ("higher-duration", "DUR", HANDWRITING_SLOT, 1),
    ("low-velocity", "ON: G-VEL (median)", TaskKind.TSK3, -1),
    ("amplitude-instability", "ON: V-LMAX (ncv)", TaskKind.TSK3, 1),
    ("visuospatial-deficits", "AIR: DUR", HANDWRITING_SLOT, 1),
    ("unstable-pressure", "PRESS (ncv)", TaskKind.TSK3, 1),
    ("uniform-amplitude", "ON: SHEIGHT (ncv)", HANDWRITING_SLOT, -1),
]


SCHEMAS = {f.name: json.loads(f.read_text())
           for f in resources.files("graphoscale").joinpath("schemas").iterdir()
           if f.name.endswith(".schema.json")}
REGISTRY = Registry().with_resources(
    (name, Resource.from_contents(doc)) for name, doc in SCHEMAS.items())


def validate(doc, name):
    schema = SCHEMAS[f"{name}.schema.json"]
    cls = jsonschema.validators.validator_for(schema)
    cls.check_schema(schema)
    cls(schema, registry=REGISTRY).validate(doc)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scale = pipeline.Scale([ScaleItem(m, parse_feature_key(f), t, w) for m, f, t, w in ITEMS],
                           "cli test scale")
    (root / "scale.json").write_text(scale.dumps())
    assert cli.main(["synth", "-o", str(root / "cohort"), "--grades", "2", "3", "--intact", "22",
                     "--inject", "slow=2", "--tasks", "TSK3,TSK9,TSK10", "--seed", "5"]) == 0
    assert cli.main(["extract", str(root / "cohort"), "--scale", str(root / "scale.json"),
                     "-o", str(root / "features.csv")]) == 0
    assert cli.main(["fit-norms", str(root / "features.csv"), "--scale", str(root / "scale.json"),
                     "--min-intact", "10", "--provenance", "synthetic test cohort",
                     "-o", str(root / "norms.json")]) == 0
    return root


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["--help"])
    assert exc.value.code == 0
    assert "extract" in capsys.readouterr().out


def test_synth_is_deterministic(tmp_path, capsys):
    args = ["synth", "--grades", "1", "--intact", "2", "--tasks", "TSK3,TSK8", "--seed", "3"]
    assert run(capsys, *args, "-o", tmp_path / "a")[0] == 0
    assert run(capsys, *args, "-o", tmp_path / "b")[0] == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.txt"))
    assert len(files) == 4
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    code, _, err = run(capsys, "synth", "-o", tmp_path / "c", "--inject", "wobble=1")
    assert code == 1 and "unknown knob" in err


def test_extract_three_files_deterministic(workspace, tmp_path, capsys):
    files = sorted((workspace / "cohort").rglob("TSK3.txt"))[:3]
    code, out1, _ = run(capsys, "extract", *files)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out1)))
    assert len(rows) == 4
    code, out2, _ = run(capsys, "extract", *files)
    assert out1 == out2


def test_extract_corrupt_file(workspace, tmp_path, capsys):
    good = sorted((workspace / "cohort").rglob("TSK3.txt"))[0]
    bad_dir = tmp_path / "bad"
    bad_dir.mkdir()
    bad = bad_dir / "TSK3.txt"
    bad.write_text("3\n1 2 oops\n")
    code, out, err = run(capsys, "extract", good, bad, "--scale", workspace / "scale.json")
    assert code == 2
    assert str(bad) in err
    assert len(list(csv.reader(io.StringIO(out)))) == 2


def test_extract_json_schema(workspace, capsys):
    files = sorted((workspace / "cohort").rglob("TSK9.txt"))[:2]
    code, out, _ = run(capsys, "extract", *files, "--format", "json")
    assert code == 0
    validate(json.loads(out), "features")


def test_norms_schema_and_content(workspace):
    doc = json.loads((workspace / "norms.json").read_text())
    validate(doc, "norms")
    assert doc["provenance"] == "synthetic test cohort"
    assert {e["grade"] for e in doc["entries"]} == {2, 3}


def test_scale_schema(workspace):
    validate(json.loads((workspace / "scale.json").read_text()), "scale")


def test_score_profiles(workspace, tmp_path, capsys):
    cohort = workspace / "cohort"
    intact = cohort / "g3-intact-000"
    slow = cohort / "g3-slow-000"
    code, out, _ = run(capsys, "score", intact, slow, "--norms", workspace / "norms.json",
                       "-o", tmp_path)
    assert code == 0
    p_slow = json.loads((tmp_path / "g3-slow-000.json").read_text())
    validate(p_slow, "profile")
    flagged = [m for m in p_slow["manifestations"] if m["flag"]]
    assert flagged and all(m["display"] > 0.5 for m in flagged)
    assert {"higher-duration", "low-velocity"} <= {m["id"] for m in flagged}
    assert (tmp_path / "g3-slow-000.svg").read_text().startswith("<svg")
    assert "g3-slow-000: flags:" in out


def test_score_intact_has_no_flags(workspace, tmp_path, capsys):
    # the median intact child of grade 3 by duration
    cohort = workspace / "cohort"
    code, _, _ = run(capsys, "score", cohort, "--norms", workspace / "norms.json",
                     "-o", tmp_path, "--json-only")
    assert code == 0
    assert not list(tmp_path.glob("*.svg"))
    clean = 0
    for f in tmp_path.glob("g*-intact-*.json"):
        doc = json.loads(f.read_text())
        if not any(m["flag"] for m in doc["manifestations"]):
            clean += 1
            assert all(m["display"] < 0.5 for m in doc["manifestations"]
                       if m["display"] is not None)
    assert clean > 0


def test_score_is_deterministic(workspace, tmp_path, capsys):
    subject = workspace / "cohort" / "g2-intact-001"
    for d in ("a", "b"):
        assert run(capsys, "score", subject, "--norms", workspace / "norms.json",
                   "-o", tmp_path / d)[0] == 0
    for name in ("g2-intact-001.json", "g2-intact-001.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_norms_exit_3(workspace, tmp_path, capsys):
    files = sorted((workspace / "cohort" / "g2-intact-000").glob("*.txt"))
    code, _, err = run(capsys, "score", *files, "--norms", workspace / "norms.json",
                       "--grade", "4", "-o", tmp_path, "--manifest", tmp_path / "none.csv")
    assert code == 3 and "grade 4" in err


def test_config_mismatch_exit_3(workspace, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"stop_velocity": 7.0}))
    code, _, err = run(capsys, "fit-norms", workspace / "features.csv", "--scale",
                       workspace / "scale.json", "--config", cfg, "-o", tmp_path / "n.json")
    assert code == 3 and "extracted with" in err


def test_override_audit(workspace, tmp_path, capsys):
    base = ["fit-norms", workspace / "features.csv", "--scale", workspace / "scale.json",
            "--min-intact", "10", "--no-components", "-o", tmp_path / "n.json",
            "--override-threshold", "low-velocity:3=0.9"]
    code, _, err = run(capsys, *base)
    assert code == 1 and "--override-by" in err
    code, _, _ = run(capsys, *base, "--override-by", "rater A", "--override-reason", "pilot")
    assert code == 0
    doc = json.loads((tmp_path / "n.json").read_text())
    validate(doc, "norms")
    e = next(e for e in doc["entries"] if e["grade"] == 3 and e["manifestation"] == "low-velocity")
    assert e["threshold"] == 0.9
    assert e["override"]["by"] == "rater A" and e["override"]["reason"] == "pilot"


def test_components_command(workspace, tmp_path, capsys):
    norms = tmp_path / "norms.json"
    norms.write_bytes((workspace / "norms.json").read_bytes())
    code, out, _ = run(capsys, "components", workspace / "features.csv", "--norms", norms)
    assert code == 0
    doc = json.loads(out)
    validate(doc, "components")
    for c in doc["components"]:
        assert abs(sum(m["weight"] for m in c["members"]) - 1) < 1e-9


def test_select_from_csv(tmp_path, capsys):
    import numpy as np
    rng = np.random.default_rng(0)
    lines = ["task,group,label,DUR,ON: G-VEL (median),PRESS (ncv)"]
    for task in ("TSK8", "TSK9"):
        for g in range(4):
            for i in range(12):
                y = int(i >= 8)
                lines.append(f"{task},{g},{y},{rng.normal() + 3 * y:.6f},{rng.normal():.6f},"
                             f"{rng.normal():.6f}")
    src = tmp_path / "sel.csv"
    src.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "select", "--features", src)
    assert code == 0
    doc = json.loads(out)
    validate(doc, "selection")
    assert doc["results"]["input"]["winner"] == "DUR"
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert run(capsys, "select", "--features", bad)[0] == 1


def test_hdc_command(tmp_path, capsys):
    src = tmp_path / "labels.csv"
    src.write_text("subject,oee,hpsq\na,3,25\nb,2,30\nc,4,18\nd,4,19\n")
    code, out, _ = run(capsys, "hdc", src)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["hdc"] for r in rows] == ["2", "0", "2", "3"]
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(capsys, "hdc", empty) == (0, "", "")
    broken = tmp_path / "broken.csv"
    broken.write_text("subject,oee,hpsq\na,7,1\nb,3,1\n")
    code, out, err = run(capsys, "hdc", broken)
    assert code == 2 and "line 2" in err and out.count("\n") == 2
    nocol = tmp_path / "nocol.csv"
    nocol.write_text("subject,x\na,1\n")
    assert run(capsys, "hdc", nocol)[0] == 1
