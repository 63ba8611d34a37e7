"""Waveform generation and spectral metrology.

All spectra are one-sided power spectral densities in V^2/Hz. The DC and
Nyquist bins carry no doubling factor, every other bin is doubled, so that
``sum(psd) * df`` equals the windowed mean-square of the input.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

WINDOWS = ("rectangular", "hann")


@dataclass(frozen=True)
class SampleStream:
    """Uniformly sampled real waveform (volts, differential)."""

    rate_hz: float
    samples: np.ndarray
    label: str = ""

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if not self.rate_hz > 0:
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if x.ndim != 1 or x.size < 1:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz


@dataclass(frozen=True)
class Spectrum:
    """One-sided PSD with window metadata.

    ``n_avg`` is the number of non-overlapping segments that were averaged.
    """

    df_hz: float
    psd: np.ndarray
    n_fft: int
    window: str
    enbw_bins: float
    n_avg: int = 1

    def __post_init__(self):
        if self.psd.size != self.n_fft // 2 + 1:
            raise ValueError("psd length must be n_fft/2 + 1")
        if np.any(self.psd < 0):
            raise ValueError("psd values must be non-negative")

    @property
    def rate_hz(self) -> float:
        return self.df_hz * self.n_fft

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.psd.size) * self.df_hz


@dataclass(frozen=True)
class AnalysisSettings:
    """Knobs for turning a waveform into an SNR figure."""

    n_fft: int = 65536
    window: str = "hann"
    bw_hz: float = 1000.0
    signal_halfwidth: int = 3
    dc_bins: int = 2


@dataclass(frozen=True)
class SnrResult:
    snr_db: float
    enob_bits: float
    signal_bin: int
    signal_bins: tuple[int, int]
    dc_bins: int
    n_noise_bins: int
    signal_power: float
    noise_power: float
    resolved: bool
    extra_excluded: tuple[int, ...] = field(default=())

    def as_dict(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "enob_bits": self.enob_bits,
            "signal_bin": self.signal_bin,
            "signal_bins": list(self.signal_bins),
            "signal_halfwidth_bins": (self.signal_bins[1] - self.signal_bins[0]) // 2,
            "dc_bins_excluded": self.dc_bins,
            "n_noise_bins": self.n_noise_bins,
            "signal_power_v2": self.signal_power,
            "noise_power_v2": self.noise_power,
            "resolved": self.resolved,
        }


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def gen_sine(amp_v: float, freq_hz: float, rate_hz: float, n: int,
             phase_rad: float = 0.0, label: str = "sine") -> SampleStream:
    """``amp_v * sin(2*pi*freq_hz*k/rate_hz + phase_rad)`` for k in [0, n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= freq_hz < rate_hz / 2:
        raise ValueError(
            f"freq_hz={freq_hz} outside [0, rate/2) for rate {rate_hz} (aliased stimulus)")
    k = np.arange(n)
    return SampleStream(rate_hz, amp_v * np.sin(2 * np.pi * freq_hz * k / rate_hz + phase_rad),
                        label)


def square_wave(n: int, rate_hz: float, freq_hz: float, offset_samples: int = 0) -> np.ndarray:
    """+/-1 square wave, 50% duty, starting at +1 at ``offset_samples``.

    The half period must be a whole number of samples.
    """
    half = rate_hz / (2 * freq_hz)
    h = int(round(half))
    if h < 1 or abs(half - h) > 1e-9 * half:
        raise ValueError(f"rate {rate_hz} is not an even multiple of {freq_hz}")
    k = np.arange(n) - offset_samples
    return np.where((k // h) % 2 == 0, 1.0, -1.0)


def window_vector(name: str, n: int) -> np.ndarray:
    if name == "rectangular":
        return np.ones(n)
    if name == "hann":
        # periodic form: ENBW is exactly 1.5 bins
        return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    raise ValueError(f"unknown window {name!r}; expected one of {WINDOWS}")


def periodogram(x: SampleStream, n_fft: int, window: str = "hann") -> Spectrum:
    """Averaged one-sided periodogram over non-overlapping segments.

    Leftover samples beyond the last full segment are dropped.
    """
    n = len(x)
    if not _is_pow2(n_fft):
        raise ValueError(f"n_fft={n_fft} is not a power of two")
    if n_fft > n:
        raise ValueError(f"n_fft={n_fft} exceeds stream length {n}")
    w = window_vector(window, n_fft)
    n_avg = n // n_fft
    acc = np.zeros(n_fft // 2 + 1)
    # chunked so long streams don't allocate one giant complex array
    chunk = max(1, (1 << 22) // n_fft)
    for start in range(0, n_avg, chunk):
        stop = min(n_avg, start + chunk)
        seg = x.samples[start * n_fft:stop * n_fft].reshape(stop - start, n_fft)
        acc += np.sum(np.abs(np.fft.rfft(seg * w, axis=1)) ** 2, axis=0)
    acc /= n_avg
    psd = acc / (x.rate_hz * np.sum(w ** 2))
    psd[1:-1] *= 2.0
    enbw = n_fft * np.sum(w ** 2) / np.sum(w) ** 2
    return Spectrum(df_hz=x.rate_hz / n_fft, psd=psd, n_fft=n_fft, window=window,
                    enbw_bins=float(enbw), n_avg=n_avg)


def _band_bins(s: Spectrum, f_lo: float, f_hi: float) -> np.ndarray:
    nyq = s.rate_hz / 2
    if not (0 <= f_lo < f_hi <= nyq * (1 + 1e-12)):
        raise ValueError(f"band [{f_lo}, {f_hi}] invalid for Nyquist {nyq}")
    k_lo = int(math.ceil(f_lo / s.df_hz - 1e-9))
    k_hi = int(math.floor(f_hi / s.df_hz + 1e-9))
    return np.arange(k_lo, min(k_hi, s.psd.size - 1) + 1)


def band_power(s: Spectrum, f_lo: float, f_hi: float,
               excluded_bins: Iterable[int] = ()) -> float:
    """Integrated power (V^2) over bins whose centre lies in [f_lo, f_hi]."""
    bins = _band_bins(s, f_lo, f_hi)
    excl = set(int(b) for b in excluded_bins)
    keep = np.array([b for b in bins if b not in excl], dtype=int)
    if keep.size == 0:
        raise ValueError("empty band after exclusions")
    return float(np.sum(s.psd[keep]) * s.df_hz)


def enob_from_snr(snr_db: float) -> float:
    """(SNR - 1.76)/6.02, rounded to 0.1 bit."""
    return round((snr_db - 1.76) / 6.02, 1)


def snr_enob(s: Spectrum, sig_freq_hz: float, bw_hz: float, *,
             signal_halfwidth: int = 3, dc_bins: int = 2,
             exclude_freqs_hz: Sequence[float] = ()) -> SnrResult:
    """In-band SNR of a single tone.

    Signal power is summed over ``signal bin +/- signal_halfwidth``. Noise is
    summed over bins ``dc_bins .. bw_hz`` minus the signal bins and minus the
    bins nearest to ``exclude_freqs_hz`` (harmonic-exclusion hook).
    A tone whose power does not exceed the noise expected in the same number
    of bins comes back with ``resolved=False``.
    """
    nyq = s.rate_hz / 2
    if not 0 < sig_freq_hz < bw_hz <= nyq * (1 + 1e-12):
        raise ValueError("need 0 < sig_freq_hz < bw_hz <= rate/2")
    k0 = int(round(sig_freq_hz / s.df_hz))
    lo = max(k0 - signal_halfwidth, dc_bins)
    hi = min(k0 + signal_halfwidth, s.psd.size - 1)
    sig_bins = np.arange(lo, hi + 1)
    sig_p = float(np.sum(s.psd[sig_bins]) * s.df_hz)

    extra = tuple(int(round(f / s.df_hz)) for f in exclude_freqs_hz)
    k_hi = int(math.floor(bw_hz / s.df_hz + 1e-9))
    noise_bins = [k for k in range(dc_bins, k_hi + 1)
                  if not lo <= k <= hi and k not in extra]
    if not noise_bins:
        raise ValueError("no noise bins left in band; increase n_fft")
    noise_p = float(np.sum(s.psd[noise_bins]) * s.df_hz)

    expected_noise_in_sig = noise_p / len(noise_bins) * sig_bins.size
    resolved = sig_p > expected_noise_in_sig and noise_p > 0
    if noise_p > 0 and sig_p > 0:
        snr = 10 * math.log10(sig_p / noise_p)
    elif sig_p > 0:
        snr = math.inf
    else:
        snr = -math.inf
    enob = enob_from_snr(snr) if math.isfinite(snr) else snr
    return SnrResult(snr_db=snr, enob_bits=enob, signal_bin=k0, signal_bins=(lo, hi),
                     dc_bins=dc_bins, n_noise_bins=len(noise_bins), signal_power=sig_p,
                     noise_power=noise_p, resolved=resolved, extra_excluded=extra)


def measure_snr(x: SampleStream, sig_freq_hz: float,
                analysis: AnalysisSettings = AnalysisSettings()) -> tuple[SnrResult, Spectrum]:
    n_fft = min(analysis.n_fft, 1 << int(math.floor(math.log2(len(x)))))
    spec = periodogram(x, n_fft, analysis.window)
    res = snr_enob(spec, sig_freq_hz, analysis.bw_hz,
                   signal_halfwidth=analysis.signal_halfwidth, dc_bins=analysis.dc_bins)
    return res, spec


def tone_amplitude(s: Spectrum, freq_hz: float, halfwidth: int = 3) -> float:
    """Peak amplitude of a tone recovered from its leakage bins."""
    k0 = int(round(freq_hz / s.df_hz))
    lo, hi = max(k0 - halfwidth, 0), min(k0 + halfwidth, s.psd.size - 1)
    return math.sqrt(2 * np.sum(s.psd[lo:hi + 1]) * s.df_hz)


def psd_slope_db_per_decade(s: Spectrum, f_lo: float, f_hi: float,
                            n_bands: int = 24) -> float:
    """Least-squares slope of the PSD in dB per decade over [f_lo, f_hi].

    The PSD is first averaged in log-spaced bands so that isolated spurs and
    the dense high-frequency bins don't dominate the fit.
    """
    edges = np.logspace(math.log10(f_lo), math.log10(f_hi), n_bands + 1)
    f = s.freqs
    fc, level = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (f >= a) & (f < b)
        if not np.any(m):
            continue
        p = np.mean(s.psd[m])
        if p <= 0:
            continue
        fc.append(math.sqrt(a * b))
        level.append(10 * math.log10(p))
    if len(fc) < 3:
        raise ValueError("too few populated bands for a slope fit")
    slope, _ = np.polyfit(np.log10(fc), level, 1)
    return float(slope)


def write_spectrum_csv(s: Spectrum, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "psd_v2_per_hz", "psd_dbv2_per_hz"])
        for f, p in zip(s.freqs, s.psd):
            w.writerow([f"{f:.12g}", f"{p:.12g}", f"{10 * math.log10(max(p, 1e-300)):.12g}"])


def read_spectrum_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]
