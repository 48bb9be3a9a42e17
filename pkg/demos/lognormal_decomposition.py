"""Decompose a speed profile into lognormal strokes.

Builds a speed curve from three known lognormals, fits it back, and then fits
every stroke of a synthetic loop recording.
Run: python3 demos/lognormal_decomposition.py
"""

import numpy as np

from graphoscale import synth
from graphoscale.ink import TaskKind
from graphoscale.kinematics import Profile
from graphoscale.siglognormal import LognormalComponent, fit_recording, fit_sigma_lognormal

TRUE = [LognormalComponent(10.0, 0.00, -1.5, 0.30),
        LognormalComponent(6.0, 0.25, -1.6, 0.25),
        LognormalComponent(8.0, 0.55, -1.4, 0.35)]


def main():
    t = np.arange(0, 1.6, 1 / 133.0)
    v = sum(c.speed(t) for c in TRUE)
    fit = fit_sigma_lognormal(Profile(v, t, "speed"))
    print(f"synthetic profile: {fit.nb_log} components, SNR {fit.snr_db:.1f} dB")
    for c in fit.components:
        print(f"  D={c.D:6.3f}  t0={c.t0:6.3f}  mu={c.mu:6.3f}  sigma={c.sigma:5.3f}"
              f"  peak at {c.peak_time:.3f} s")

    rec = synth.generate(synth.SynthConfig(task=TaskKind.TSK3, seed=3))
    rf = fit_recording(rec)
    print(f"\nupper loops: {len(rf.strokes)} strokes, {rf.nb_log} lognormals, "
          f"pooled SNR {rf.snr_db:.1f} dB")


if __name__ == "__main__":
    main()
