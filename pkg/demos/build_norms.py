"""Fit the package's default norm table on a synthetic cohort.

Medians and thresholds come from the intact children; a few children per
knob are added so the component analysis sees correlated manifestations.

The shipped norms are placeholders for demonstration and tests; clinical use
needs norms fitted on real recordings (``graphoscale fit-norms``).
Run after build_scale.py: python3 demos/build_norms.py [--intact N] [--out PATH]
"""

import argparse
import time
from pathlib import Path

from graphoscale import pipeline, synth

OUT = Path(__file__).resolve().parents[1] / "src" / "graphoscale" / "data" / "norms.json"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--intact", type=int, default=40, help="intact children per grade")
    ap.add_argument("--injected", type=int, default=2, help="children per knob and grade")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    scale = pipeline.default_scale()
    spec = synth.CohortSpec(grades=(0, 1, 2, 3, 4), intact_per_grade=args.intact,
                             injected={k: args.injected for k in synth.KNOBS}, seed=args.seed)
    t = time.time()
    vectors, metas = [], []
    for sid, grade, knobs, seed in synth.cohort_plan(spec):
        s = synth.generate_subject(sid, grade, knobs, spec.severity, spec.tasks, seed)
        vectors.append(pipeline.extract_subject(s.recordings, scale, grade))
        metas.append(s.meta)
    print(f"extracted {len(metas)} children in {time.time() - t:.0f}s", flush=True)
    table = pipeline.build_norm_table(
        vectors, metas, scale,
        provenance=f"synthetic cohort ({args.intact} intact and {args.injected} per knob in each "
                   f"grade, seed {args.seed}); "
                   "not clinical norms")
    args.out.write_text(table.dumps(), encoding="utf-8")
    for c in table.components:
        members = ", ".join(f"{m.manifestation} {m.weight:.2f}" for m in c.members)
        print(f"grade {c.grade} {c.id}: {members}")
    print("wrote", args.out)


if __name__ == "__main__":
    main()
