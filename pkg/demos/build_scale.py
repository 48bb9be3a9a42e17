"""Select feature, polarity and task for every manifestation on simulated data.

Writes the package's default scale (``src/graphoscale/data/scale.json``).
Run: python3 demos/build_scale.py [--out PATH]
"""

import argparse
import json
import time
from pathlib import Path

from graphoscale import pipeline, synth
from graphoscale.catalog import MANIFESTATIONS

OUT = Path(__file__).resolve().parents[1] / "src" / "graphoscale" / "data" / "scale.json"
CACHE = Path("/tmp/graphoscale-scale-cache.json")


def pairing_cohort():
    spec = synth.CohortSpec(grades=(0, 1, 2, 3, 4), intact_per_grade=25, seed=7)
    return synth.generate_cohort(spec)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=OUT)
    ap.add_argument("--fresh", action="store_true", help="ignore cached selections")
    args = ap.parse_args()
    cache = {} if args.fresh or not CACHE.exists() else json.loads(CACHE.read_text())
    ids = [m.id for m in MANIFESTATIONS]
    cohort = pairing_cohort()
    items, audit = [], {}
    for mid in ids:
        t = time.time()
        if mid in cache:
            one = pipeline.Scale.from_json(cache[mid])
        else:
            one = pipeline.build_scale(pairing_cohort=cohort, manifestations=[mid])
            cache[mid] = json.loads(one.dumps())
            CACHE.write_text(json.dumps(cache))
        item = one.items[0]
        items.append(item)
        audit[mid] = one.audit[mid]
        print(f"{mid:32s} {str(item.feature):28s} {item.to_json()['task']:5s} {item.weight:+d}"
              f"  {time.time() - t:.0f}s", flush=True)
    scale = pipeline.Scale(items, "selected on simulated recordings (synthetic cohort)", audit)
    args.out.write_text(scale.dumps(), encoding="utf-8")
    print("wrote", args.out)


if __name__ == "__main__":
    main()
