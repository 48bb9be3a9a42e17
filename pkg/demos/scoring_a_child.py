"""Score a synthetic child against the shipped norms.

One intact child and one child rendered slowly are scored for grade 3; the
profiles are printed and SVG reports are written next to this script's
output directory.  Run: python3 demos/scoring_a_child.py [outdir]
"""

import sys
from pathlib import Path

from graphoscale import pipeline, synth
from graphoscale.report import render_svg


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-reports")
    out.mkdir(exist_ok=True)
    scale, table = pipeline.default_scale(), pipeline.default_norms()
    print(table.provenance)
    print("each threshold is an intact 95th percentile, so intact children are flagged now and then")
    for sid, knobs in (("intact-child", ()), ("slow-child", ("slow",))):
        child = synth.generate_subject(sid, 3, knobs, seed=101)
        vectors = pipeline.extract_subject(child.recordings, scale, 3)
        profile = pipeline.score_subject(vectors, table, child.meta)
        print(f"\n{sid}: flagged {profile.flags or 'nothing'}")
        for m in profile.manifestations:
            score = "  n/a" if m.score is None else f"{m.score:5.2f}"
            print(f"  {m.manifestation:30s} {score}  {'*' if m.flag else ''}")
        for c in profile.components:
            score = "  n/a" if c.score is None else f"{c.score:5.2f}"
            print(f"  [{c.id}] {c.label:27s} {score}")
        (out / f"{sid}.svg").write_text(render_svg(profile, table), encoding="utf-8")
    print("\nreports in", out)


if __name__ == "__main__":
    main()
