"""A tour of the feature catalog on two synthetic recordings.

Renders a spiral and a grade-3 paragraph copy, then prints a handful of
features from each family.  Run: python3 demos/features_tour.py
"""

from graphoscale import synth
from graphoscale.catalog import K, extract_all
from graphoscale.ink import TaskKind

SHOW = {
    TaskKind.TSK1: ["DUR", "ON: DUR", "ON: G-VEL (median)", "ON: G-VEL (95p)", "NCP",
                    "SPI", "TGHTNS", "SWVI", "DoS", "MDS"],
    TaskKind.TSK10: ["DUR", "DURR", "AIR: DUR", "NINT", "ON: G-VEL (iqr)", "ON: SHEIGHT (ncv)",
                     "ON: NIEI", "PRESS (ncv)", "TILT (ncv)", "ON: MPSSF"],
}


def main():
    for task, keys in SHOW.items():
        rec = synth.generate(synth.SynthConfig(task=task, seed=7))
        print(f"{task.name}: {len(rec)} samples, {rec.duration:.1f} s")
        vec = extract_all(rec, keys=[K(k) for k in keys])
        for k in keys:
            v = vec.get(K(k))
            print(f"  {k:22s} {v:10.4g}" if v is not None else f"  {k:22s} {vec.reason(K(k)).value}")
        print()

    # a tremor of 9 Hz moves power into the tremor band
    for amp in (0.0, 0.3):
        rec = synth.generate(synth.SynthConfig(task=TaskKind.TSK3, seed=7, tremor_amplitude=amp,
                                               tremor_frequency=9.0))
        vec = extract_all(rec, keys=[K("ON: MPSTF"), K("ON: MPSSF")])
        print(f"tremor {amp} mm: MPSTF {vec.get(K('ON: MPSTF')):.3g}  "
              f"MPSSF {vec.get(K('ON: MPSSF')):.3g}")


if __name__ == "__main__":
    main()
