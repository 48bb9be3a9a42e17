"""Information-theoretic and spectral features of speed profiles."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import welch

from . import stats
from .errors import InsufficientDataError

SPEED_BAND = (0.0, 5.0)  # Hz
TREMOR_BAND = (5.0, 12.0)  # Hz
ENTROPY_BINS = 16
WELCH_SEGMENT = 128
LZC_MIN_SAMPLES = 16
PSD_MIN_SAMPLES = 256


@dataclass(frozen=True, eq=False)
class Spectrum:
    freqs: np.ndarray
    psd: np.ndarray

    def band(self, lo, hi):
        """PSD values with ``lo <= f < hi``."""
        sel = (self.freqs >= lo) & (self.freqs < hi)
        return self.psd[sel]


def _values(v):
    return np.asarray(getattr(v, "values", v), dtype=float)


def lz76_phrase_count(bits):
    """Number of phrases of the Lempel-Ziv (1976) parsing (Kaspar-Schuster scheme)."""
    s = np.asarray(bits)
    n = s.size
    if n == 0:
        return 0
    if n == 1:
        return 1
    c, i, k, l, k_max = 1, 0, 1, 1, 1
    while True:
        if s[i + k - 1] == s[l + k - 1]:
            k += 1
            if l + k > n:
                c += 1
                break
        else:
            k_max = max(k, k_max)
            i += 1
            if i == l:
                c += 1
                l += k_max
                if l + 1 > n:
                    break
                i, k, k_max = 0, 1, 1
            else:
                k = 1
    return c


def lzc(v):
    """Normalised Lempel-Ziv complexity of the median-binarised signal.

    ``c(n) * log2(n) / n``; a constant signal gives 0.
    """
    x = _values(v)
    if x.size < LZC_MIN_SAMPLES:
        raise InsufficientDataError(f"LZC needs {LZC_MIN_SAMPLES}+ samples")
    if np.all(x == x[0]):
        return 0.0
    bits = (x > stats.median(x)).astype(np.int8)
    n = bits.size
    return lz76_phrase_count(bits) * math.log2(n) / n


def shannon_entropy(v, bins=ENTROPY_BINS):
    """Entropy in bits of an equal-width histogram over ``[min, max]``."""
    x = _values(v)
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if x.size < bins:
        raise InsufficientDataError(f"entropy with {bins} bins needs {bins}+ samples")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return 0.0
    counts, _ = np.histogram(x, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / x.size
    return float(-np.sum(p * np.log2(p)))


def spectrum(v, fs):
    """Welch periodogram: Hann window, 128-sample segments, 50% overlap."""
    x = _values(v)
    if x.size < PSD_MIN_SAMPLES:
        raise InsufficientDataError(f"PSD needs {PSD_MIN_SAMPLES}+ samples")
    f, pxx = welch(x, fs=fs, window="hann", nperseg=WELCH_SEGMENT,
                   noverlap=WELCH_SEGMENT // 2, detrend="constant", scaling="density")
    return Spectrum(f, pxx)


def psd_medians(speed, fs, speed_band=SPEED_BAND, tremor_band=TREMOR_BAND):
    """MPSSF and MPSTF: median PSD over the speed and tremor bands."""
    spec = spectrum(speed, fs)
    sb = spec.band(*speed_band)
    tb = spec.band(*tremor_band)
    if sb.size == 0 or tb.size == 0:
        raise InsufficientDataError("frequency band empty at this sampling rate")
    return {"MPSSF": stats.median(sb), "MPSTF": stats.median(tb)}
