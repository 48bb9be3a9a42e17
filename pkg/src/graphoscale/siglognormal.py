"""
Sigma-lognormal decomposition of stroke speed profiles.

A stroke's speed is modelled as a sum of lognormal pulses

    v(t) = D / (sigma * sqrt(2 pi) * (t - t0)) * exp(-(ln(t - t0) - mu)^2 / (2 sigma^2))

for ``t > t0``.  Pulses are extracted greedily: the tallest residual peak is
located, its parameters are estimated in closed form from the peak and the
two half-height crossings, refined by bounded least squares on the residual,
then jointly polished together with the components that overlap it.

Fits run in normalised units (time from the stroke start on an exact grid,
speed divided by its maximum), so the decomposition is equivariant to time
shifts and amplitude scaling.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateStatisticError, InsufficientDataError
from .kinematics import Profile, Scope, velocity

SNR_CAP_DB = 90.0
_HALF = math.sqrt(2.0 * math.log(2.0))
_SQRT_2PI = math.sqrt(2.0 * math.pi)

SIGMA_BOUNDS = (0.02, 2.0)
MU_BOUNDS = (-8.0, 4.0)
FINAL_POLISH_LIMIT = 12


@dataclass(frozen=True)
class LognormalComponent:
    D: float
    t0: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.D > 0:
            raise ValueError("D must be positive")

    def speed(self, t):
        return lognormal_speed(np.asarray(t, dtype=float), self.D, self.t0, self.mu, self.sigma)

    @property
    def peak_time(self):
        return self.t0 + math.exp(self.mu - self.sigma ** 2)


@dataclass(frozen=True)
class FitConfig:
    residual_fraction: float = 0.01
    min_peak_fraction: float = 0.01
    max_components: int = 60
    max_evaluations: int = 200
    min_samples: int = 10


@dataclass(frozen=True, eq=False)
class SigmaLognormalFit:
    components: tuple
    reconstructed: Profile
    snr_db: float
    signal_energy: float = 0.0
    residual_energy: float = 0.0

    @property
    def nb_log(self):
        return len(self.components)


def lognormal_speed(t, D, t0, mu, sigma):
    tau = t - t0
    out = np.zeros_like(t, dtype=float)
    pos = tau > 0
    lt = np.log(tau[pos])
    out[pos] = D / (sigma * _SQRT_2PI * tau[pos]) * np.exp(-((lt - mu) ** 2) / (2 * sigma ** 2))
    return out


def _speed_and_jac(t, p):
    """Model and Jacobian for flat parameters ``[D, t0, mu, sigma] * k``."""
    k = p.size // 4
    v = np.zeros_like(t)
    jac = np.zeros((t.size, p.size))
    for c in range(k):
        D, t0, mu, sigma = p[4 * c:4 * c + 4]
        tau = t - t0
        # pulses are negligible beyond mu + 8 sigma in log-time
        pos = (tau > 0) & (tau < math.exp(min(mu + 8.0 * sigma, 30.0)))
        tp = tau[pos]
        u = (np.log(tp) - mu) / sigma
        vc = D / (sigma * _SQRT_2PI * tp) * np.exp(-0.5 * u * u)
        v[pos] += vc
        jac[pos, 4 * c] = vc / D
        jac[pos, 4 * c + 1] = vc * (1.0 + u / sigma) / tp
        jac[pos, 4 * c + 2] = vc * u / sigma
        jac[pos, 4 * c + 3] = vc * (u * u - 1.0) / sigma
    return v, jac


def snr(original, reconstructed):
    """Reconstruction SNR in dB, capped at ``SNR_CAP_DB`` for a perfect fit."""
    v = np.asarray(getattr(original, "values", original), dtype=float)
    vh = np.asarray(getattr(reconstructed, "values", reconstructed), dtype=float)
    if v.shape != vh.shape:
        raise ValueError("profiles must have equal length")
    return _snr_from_energies(float(np.sum(v * v)), float(np.sum((v - vh) ** 2)))


def _snr_from_energies(signal, residual):
    if signal <= 0:
        raise DegenerateStatisticError("SNR undefined for a zero-energy signal")
    if residual <= 0:
        return SNR_CAP_DB
    return min(SNR_CAP_DB, 10.0 * math.log10(signal / residual))


def snr_per_nblog(fit):
    """SNR divided by the number of components; None when there are none."""
    if fit.nb_log == 0:
        return None
    return fit.snr_db / fit.nb_log


def _crossing(r, t, p, half, step):
    """Time where ``r`` first drops to ``half`` walking from ``p`` by ``step``.

    Returns None when a local minimum (or the signal end) is met first.
    """
    i = p
    n = r.size
    while 0 <= i + step < n:
        j = i + step
        if r[j] <= half:
            # linear interpolation between i and j
            frac = (r[i] - half) / (r[i] - r[j])
            return t[i] + frac * (t[j] - t[i])
        if r[j] > r[i]:
            return None
        i = j
    return None


def _window(r, p, level):
    n = r.size
    a = p
    while a > 0 and r[a - 1] > level and r[a - 1] <= r[a]:
        a -= 1
    b = p
    while b < n - 1 and r[b + 1] > level and r[b + 1] <= r[b]:
        b += 1
    return max(a - 1, 0), min(b + 2, n)


def _estimate(r, t, p, default_sigma=0.3):
    vp = r[p]
    tp = t[p]
    if 0 < p < r.size - 1:
        # parabolic refinement of the peak location
        y0, y1, y2 = r[p - 1], r[p], r[p + 1]
        den = y0 - 2 * y1 + y2
        if den < 0:
            off = 0.5 * (y0 - y2) / den
            tp = tp + off * (t[p + 1] - t[p])
            vp = y1 - 0.25 * (y0 - y2) * off
    half = 0.5 * vp
    ta = _crossing(r, t, p, half, -1)
    tb = _crossing(r, t, p, half, +1)
    sigma = t0 = None
    if ta is not None and tb is not None:
        den = ta + tb - 2 * tp
        if den > 1e-9 * (tb - ta):
            cand = (ta * tb - tp * tp) / den
            if cand < min(ta, tp):
                s = math.log((tb - cand) / (ta - cand)) / (2 * _HALF)
                if SIGMA_BOUNDS[0] < s < 1.5:
                    sigma, t0 = s, cand
    if sigma is None:
        if ta is not None and tb is not None:
            width = tb - ta
        elif ta is not None:
            width = 2 * (tp - ta)
        elif tb is not None:
            width = 2 * (tb - tp)
        else:
            width = max(t[-1] - t[0], t[1] - t[0]) / 4
        width = max(width, t[1] - t[0])
        sigma = default_sigma
        t0 = tp - width / (2 * math.sinh(sigma * _HALF))
    mu = math.log(tp - t0) + sigma ** 2
    D = vp * sigma * _SQRT_2PI * math.exp(mu - 0.5 * sigma ** 2)
    return np.array([D, t0, mu, sigma])


def _bounds(params, t):
    k = params.size // 4
    lo, hi = [], []
    span = t[-1] - t[0]
    for c in range(k):
        D, t0, mu, sigma = params[4 * c:4 * c + 4]
        peak = t0 + math.exp(mu - sigma ** 2)
        lo += [1e-9, t[0] - 2.0 - span, MU_BOUNDS[0], SIGMA_BOUNDS[0]]
        hi += [np.inf, max(peak, t[0]) + 0.5 * span + 1.0, MU_BOUNDS[1], SIGMA_BOUNDS[1]]
    lo, hi = np.array(lo), np.array(hi)
    return lo, hi


def _refine(params, t, target, max_nfev):
    lo, hi = _bounds(params, t)
    x0 = np.clip(params, lo + 1e-12, hi - 1e-12)
    x0[1::4] = np.minimum(x0[1::4], hi[1::4] - 1e-9)

    def fun(p):
        return _speed_and_jac(t, p)[0] - target

    def jac(p):
        return _speed_and_jac(t, p)[1]

    try:
        # trf step-size internals overflow harmlessly near the bounds; results are checked below
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = least_squares(fun, x0, jac=jac, bounds=(lo, hi), method="trf", max_nfev=max_nfev,
                                x_scale="jac", ftol=1e-10, xtol=1e-10, gtol=1e-10)
    except (ValueError, FloatingPointError):
        return params
    if not np.all(np.isfinite(res.x)):
        return params
    return res.x


def _model(t, comps):
    if not comps:
        return np.zeros_like(t)
    return _speed_and_jac(t, np.concatenate(comps))[0]


def _support(t, comps, reach=4.0):
    """Index range where any of ``comps`` carries appreciable speed."""
    start = min(c[1] for c in comps)
    stop = max(c[1] + math.exp(min(c[2] + reach * c[3], 30.0)) for c in comps)
    lo = int(np.searchsorted(t, start, side="left"))
    hi = int(np.searchsorted(t, stop, side="right"))
    if hi - lo < 4 * len(comps) + 2:
        return 0, t.size
    return lo, hi


def _with_polish(comps, new, v, t, a, b, cfg):
    """Add ``new`` and jointly refine it with the components overlapping it."""
    cand = comps + [new]
    peak_new = new[1] + math.exp(new[2] - new[3] ** 2)
    width = max(t[b - 1] - t[a], 3 * (t[1] - t[0]))
    near = [i for i, c in enumerate(cand)
            if abs(c[1] + math.exp(c[2] - c[3] ** 2) - peak_new) <= 3 * width]
    if len(near) > 1:
        fixed = [c for i, c in enumerate(cand) if i not in near]
        lo, hi = _support(t, [cand[i] for i in near])
        target = v[lo:hi] - _model(t[lo:hi], fixed)
        polished = _refine(np.concatenate([cand[i] for i in near]), t[lo:hi], target,
                           cfg.max_evaluations)
        for j, i in enumerate(near):
            cand[i] = polished[4 * j:4 * j + 4]
    return cand


def _decompose(v, t, cfg):
    """Greedy extraction on a normalised profile; returns list of parameter arrays."""
    energy = float(np.sum(v * v))
    comps = []
    model = np.zeros_like(v)
    res_energy = energy
    while len(comps) < cfg.max_components:
        if res_energy < cfg.residual_fraction * energy:
            break
        r = v - model
        p = int(np.argmax(r))
        if r[p] < cfg.min_peak_fraction * v.max():
            break
        est = _estimate(r, t, p)
        a, b = _window(r, p, 0.02 * r[p])
        if b - a >= 6:
            local = _refine(est, t[a:b], r[a:b], cfg.max_evaluations)
        else:
            local = est
        accepted = None
        for new, polish in ((local, True), (local, False), (est, False)):
            cand = _with_polish(comps, new, v, t, a, b, cfg) if polish else comps + [new]
            cand_model = _model(t, cand)
            cand_energy = float(np.sum((v - cand_model) ** 2))
            if cand_energy < res_energy:
                accepted = cand, cand_model, cand_energy
                break
        if accepted is None:
            break
        comps, model, res_energy = accepted
    if 1 < len(comps) <= FINAL_POLISH_LIMIT:
        polished = _refine(np.concatenate(comps), t, v, cfg.max_evaluations)
        pm = _model(t, [polished])
        if float(np.sum((v - pm) ** 2)) < res_energy:
            comps = [polished[4 * i:4 * i + 4] for i in range(len(comps))]
            model = pm
    return comps, model


def fit_sigma_lognormal(speed, config=None):
    """Decompose a single-stroke, uniformly sampled speed profile.

    Parameters
    ----------
    speed : Profile
        Speed of one stroke (at least ``config.min_samples`` samples).
    config : FitConfig, optional

    Returns
    -------
    SigmaLognormalFit
        Components sorted by onset.  An all-zero profile yields no components
        and an SNR of 0 dB.
    """
    cfg = config or FitConfig()
    v = np.asarray(speed.values, dtype=float)
    t = np.asarray(speed.t, dtype=float)
    if v.size < cfg.min_samples:
        raise InsufficientDataError(f"sigma-lognormal fit needs {cfg.min_samples}+ samples")
    steps = np.diff(t)
    dt = float(t[-1] - t[0]) / (v.size - 1)
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-3 * dt:
        raise ValueError("sigma-lognormal fit requires uniform sampling")
    # exact local grid makes the fit independent of the absolute time origin
    dt = float(f"{dt:.12g}")
    tl = np.arange(v.size) * dt
    vmax = float(v.max())
    if vmax <= 0:
        recon = Profile(np.zeros_like(v), t, "speed-reconstruction", speed.scope)
        return SigmaLognormalFit((), recon, 0.0, 0.0, 0.0)
    vn = v / vmax
    comps, model = _decompose(vn, tl, cfg)
    out = sorted(
        (LognormalComponent(float(c[0] * vmax), float(c[1] + t[0]), float(c[2]), float(c[3]))
         for c in comps),
        key=lambda c: c.t0,
    )
    signal = float(np.sum(vn * vn))
    residual = float(np.sum((vn - model) ** 2))
    recon = Profile(model * vmax, t, "speed-reconstruction", speed.scope)
    return SigmaLognormalFit(tuple(out), recon, _snr_from_energies(signal, residual),
                             signal * vmax ** 2, residual * vmax ** 2)


@dataclass(frozen=True)
class RecordingFit:
    """Stroke-wise fits pooled over a recording."""

    strokes: tuple = field(default_factory=tuple)

    @property
    def nb_log(self):
        return sum(f.nb_log for f in self.strokes)

    @property
    def snr_db(self):
        signal = sum(f.signal_energy for f in self.strokes)
        residual = sum(f.residual_energy for f in self.strokes)
        if signal <= 0:
            return 0.0
        return _snr_from_energies(signal, residual)


def fit_recording(rec, config=None):
    """Fit every on-surface stroke with enough samples; SNR pooled by energy."""
    cfg = config or FitConfig()
    g, _, _ = velocity(rec, Scope.ON_SURFACE)
    fits = []
    for t, v in g.segments():
        if v.size < cfg.min_samples:
            continue
        fits.append(fit_sigma_lognormal(Profile(v, t, "velocity-G"), cfg))
    if not fits:
        raise InsufficientDataError("no on-surface stroke long enough for a sigma-lognormal fit")
    return RecordingFit(tuple(fits))
