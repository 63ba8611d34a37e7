"""Device-noise model of the chopped DDA R-C integrator.

Closed-form output and input-referred PSDs (resistor thermal noise plus DDA
thermal and 1/f noise, with or without chopping, for equal or skewed port
gains) and time-domain synthesis of statistically matching noise for
injection into the loop simulator.

The chopped closed forms keep only the first chopper harmonic: the DDA noise
is shaped by the integrator at ``f - f_ch`` and scaled by 8/pi^2. The
synthesised noise is chopped by a true square wave, so it carries all the
harmonics.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, signal

from .linmodel import IntegratorParams
from .loopsim import ct_stage_filter
from .sigproc import SampleStream, Spectrum, periodogram, square_wave

K_BOLTZMANN = 1.380649e-23
COMPONENTS = ("resistor_thermal", "dda_thermal", "dda_flicker")


@dataclass(frozen=True)
class NoiseParams:
    integ: IntegratorParams = field(
        default_factory=lambda: IntegratorParams(1e6, 1e6, 100e3, 20e-12))
    temp_k: float = 300.0
    s_dda_th: float = 1e-16
    fc_hz: float = 10e3
    f_ch_hz: float = 1e6

    def __post_init__(self):
        if not (self.temp_k > 0 and self.s_dda_th > 0 and self.fc_hz > 0 and self.f_ch_hz > 0):
            raise ValueError("temp_k, s_dda_th, fc_hz and f_ch_hz must be positive")
        if not self.fc_hz < self.f_ch_hz:
            raise ValueError("fc_hz must be below f_ch_hz")

    @property
    def R(self) -> float:
        return self.integ.R

    @property
    def resistor_psd(self) -> float:
        """8kTR: thermal noise of the two input resistors (V^2/Hz)."""
        return 8 * K_BOLTZMANN * self.temp_k * self.integ.R

    def replace(self, **kw) -> "NoiseParams":
        d = {f: getattr(self, f) for f in ("integ", "temp_k", "s_dda_th", "fc_hz", "f_ch_hz")}
        d.update(kw)
        return NoiseParams(**d)


@dataclass(frozen=True)
class NoiseRealization:
    """Input-referred noise at the sensor port and its labelled parts."""

    input_referred: SampleStream
    components: dict

    def __post_init__(self):
        if set(self.components) != set(COMPONENTS):
            raise ValueError(f"components must be exactly {COMPONENTS}")
        total = sum(self.components[c].samples for c in COMPONENTS)
        if not np.allclose(total, self.input_referred.samples, rtol=1e-12, atol=1e-300):
            raise ValueError("components do not sum to input_referred")


def _freqs(f_hz, allow_zero: bool = False):
    f = np.asarray(f_hz, dtype=float)
    if np.any(f < 0) or (not allow_zero and np.any(f == 0)):
        raise ValueError("f_hz must be > 0 (the flicker term diverges at DC)")
    return f


def _offset(f, p: NoiseParams, df_hz: float | None):
    d = np.abs(f - p.f_ch_hz)
    if df_hz is not None:
        d = np.maximum(d, df_hz / 2)
    elif np.any(d == 0):
        raise ValueError("f_hz == f_ch_hz: pass df_hz to clamp the flicker singularity")
    return d


def out_psd(p: NoiseParams, f_hz, chopped: bool, df_hz: float | None = None):
    """Device-noise PSD at the integrator output (V^2/Hz).

    Evaluates the skewed-gain forms; with ``A_i == A_f`` they are identical
    to the equal-gain ones. For the chopped form ``|f - f_ch|`` is clamped
    to ``df_hz/2`` when ``df_hz`` is given.
    """
    f = _freqs(f_hz)
    A_i, A_f, rc = p.integ.A_i, p.integ.A_f, p.integ.rc
    tau = (A_f + 1) * rc
    w = 2 * np.pi * f
    res = p.resistor_psd * A_f ** 2 / (1 + (w * tau) ** 2)
    if chopped:
        d = _offset(f, p, df_hz)
        wd = 2 * np.pi * (f - p.f_ch_hz)
        dda = (8 / np.pi ** 2 * p.s_dda_th * (1 + p.fc_hz / d)
               * A_i ** 2 * (1 + (wd * rc) ** 2) / (1 + (wd * tau) ** 2))
    else:
        dda = p.s_dda_th * (1 + p.fc_hz / f) * A_i ** 2 * (1 + (w * rc) ** 2) / (1 + (w * tau) ** 2)
    out = res + dda
    return float(out) if np.ndim(f_hz) == 0 else out


def in_psd(p: NoiseParams, f_hz, chopped: bool, df_hz: float | None = None):
    """Device-noise PSD referred to the non-inverting (sensor) port (V^2/Hz).

    This is ``out_psd / |H_i(f)|^2``. Unchopped it reduces to
    ``8kTR (A_f/A_i)^2 / (1 + (2 pi f RC)^2) + S_dda_th (1 + f_c/f)``.
    """
    f = _freqs(f_hz)
    A_i, A_f, rc = p.integ.A_i, p.integ.A_f, p.integ.rc
    tau = (A_f + 1) * rc
    w = 2 * np.pi * f
    res = p.resistor_psd * A_f ** 2 / (A_i ** 2 * (1 + (w * rc) ** 2))
    if chopped:
        d = _offset(f, p, df_hz)
        wd = 2 * np.pi * (f - p.f_ch_hz)
        dda = (8 / np.pi ** 2 * (1 + p.fc_hz / d) * p.s_dda_th
               * (1 + (wd * rc) ** 2) * (1 + (w * tau) ** 2)
               / ((1 + (wd * tau) ** 2) * (1 + (w * rc) ** 2)))
    else:
        dda = p.s_dda_th * (1 + p.fc_hz / f)
    out = res + dda
    return float(out) if np.ndim(f_hz) == 0 else out


def in_psd_chopped_input(p: NoiseParams, f_hz):
    """In-band input-referred PSD when the DDA noise is chopped at the input.

    This is what the loop simulator realises: chopping moves the 1/f noise
    to odd multiples of f_ch and leaves the white floor in place, so for
    ``f << f_ch`` only the resistor term and ``S_dda_th`` remain.
    """
    f = _freqs(f_hz, allow_zero=True)
    A_i, A_f, rc = p.integ.A_i, p.integ.A_f, p.integ.rc
    out = p.resistor_psd * (A_f / A_i) ** 2 / (1 + (2 * np.pi * f * rc) ** 2) + p.s_dda_th
    return float(out) if np.ndim(f_hz) == 0 else out


# --- synthesis --------------------------------------------------------------

def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def synth_thermal(psd: float, rate_hz: float, n: int, seed) -> SampleStream:
    """White Gaussian noise with one-sided PSD ``psd``: variance psd*rate/2."""
    if psd < 0:
        raise ValueError("psd must be >= 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    x = _rng(seed).standard_normal(n) * math.sqrt(psd * rate_hz / 2)
    return SampleStream(rate_hz, x, "thermal")


def synth_flicker(s_th: float, fc_hz: float, rate_hz: float, n: int, seed) -> SampleStream:
    """Gaussian 1/f noise with one-sided PSD ``s_th * fc / f`` for f >= rate/n.

    White Gaussian spectral lines are scaled to the target PSD and inverse
    transformed; the DC line is zero.
    """
    if n < 2 or n & (n - 1):
        raise ValueError("n must be a power of two >= 2")
    if not 0 < fc_hz < rate_hz / 2:
        raise ValueError("fc_hz must lie in (0, rate/2)")
    if s_th < 0:
        raise ValueError("s_th must be >= 0")
    rng = _rng(seed)
    k = np.arange(n // 2 + 1)
    f = k * rate_hz / n
    target = np.zeros(k.size)
    target[1:] = s_th * fc_hz / f[1:]
    # rfft lines of white noise with one-sided PSD S have E|X|^2 = S*rate*n/2,
    # except the Nyquist line which is real with variance S*rate*n
    spec = (rng.standard_normal(k.size) + 1j * rng.standard_normal(k.size)) / math.sqrt(2)
    spec *= np.sqrt(target * rate_hz * n / 2)
    spec[0] = 0.0
    spec[-1] = rng.standard_normal() * math.sqrt(target[-1] * rate_hz * n)
    return SampleStream(rate_hz, np.fft.irfft(spec, n), "flicker")


def chop_modulate(x: SampleStream, f_ch_hz: float, phase: str = "zero") -> SampleStream:
    """Multiply by a 50 % duty +/-1 square wave at ``f_ch_hz``.

    ``phase='half'`` delays the square wave by half of its own half-period,
    i.e. the toggles fall in the middle of each clock phase.
    """
    if phase not in ("zero", "half"):
        raise ValueError("phase must be 'zero' or 'half'")
    if f_ch_hz > x.rate_hz / 2:
        raise ValueError("f_ch_hz must be <= rate/2")
    half = x.rate_hz / (2 * f_ch_hz)
    h = int(round(half))
    offset = 0
    if phase == "half":
        if h % 2:
            raise ValueError("phase 'half' needs an even number of samples per half-period")
        offset = h // 2
    sq = square_wave(len(x), x.rate_hz, f_ch_hz, offset_samples=offset)
    return SampleStream(x.rate_hz, x.samples * sq, x.label)


def _resistor_stream(p: NoiseParams, rate_hz: float, n: int, seed) -> np.ndarray:
    """Resistor noise referred to the sensor port.

    The 8kTR source at the input resistors reaches the output through
    A_f/(1 + s tau); divided by H_i that is -(A_f/A_i)/(1 + sRC), realised
    here as an exact first-order filter on white noise.
    """
    w = synth_thermal(p.resistor_psd, rate_hz, n, seed).samples
    a = math.exp(-1.0 / (rate_hz * p.integ.rc))
    g = -(p.integ.A_f / p.integ.A_i)
    return signal.lfilter([g * (1 - a)], [1.0, -a], w)


def synth_device_noise(p: NoiseParams, rate_hz: float, n: int, seed) -> NoiseRealization:
    """All three input-referred noise sources, each from its own child seed."""
    ss = np.random.SeedSequence(seed)
    s_res, s_th, s_fl = ss.spawn(3)
    comps = {
        "resistor_thermal": SampleStream(rate_hz, _resistor_stream(p, rate_hz, n, s_res),
                                         "resistor_thermal"),
        "dda_thermal": SampleStream(rate_hz, synth_thermal(p.s_dda_th, rate_hz, n, s_th).samples,
                                    "dda_thermal"),
        "dda_flicker": SampleStream(rate_hz, synth_flicker(p.s_dda_th, p.fc_hz, rate_hz, n,
                                                           s_fl).samples, "dda_flicker"),
    }
    total = sum(comps[c].samples for c in COMPONENTS)
    return NoiseRealization(SampleStream(rate_hz, total, "input_referred"), comps)


def simulated_out_psd(p: NoiseParams, chopped: bool, rate_hz: float, n_fft: int,
                      n_avg: int, seed, components=COMPONENTS) -> Spectrum:
    """Periodogram of synthesised noise driven through the open-loop CT stage.

    The selected components are summed at the sensor port (DDA parts
    chopped with toggles mid-phase when ``chopped``), passed through the
    DDA integrator with the feedback port grounded, and Hann-averaged over
    ``n_avg`` segments of ``n_fft``.
    """
    unknown = set(components) - set(COMPONENTS)
    if unknown:
        raise ValueError(f"unknown components {sorted(unknown)}")
    n = n_fft * n_avg
    n_syn = 1 << (n - 1).bit_length()
    real = synth_device_noise(p, rate_hz, n_syn, seed)
    dda = np.zeros(n_syn)
    for c in ("dda_thermal", "dda_flicker"):
        if c in components:
            dda += real.components[c].samples
    if chopped:
        dda = chop_modulate(SampleStream(rate_hz, dda), p.f_ch_hz, "half").samples
    v = dda + (real.components["resistor_thermal"].samples if "resistor_thermal" in components
               else 0.0)
    y = ct_stage_filter(v[:n], 0.0, rate_hz, p.integ)
    return periodogram(SampleStream(rate_hz, y, "ct_out"), n_fft, "hann")


def band_average_db(f: np.ndarray, psd: np.ndarray, edges) -> np.ndarray:
    """Mean PSD (dB) in each ``[edges[i], edges[i+1])`` band."""
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (f >= lo) & (f < hi)
        if not np.any(m):
            raise ValueError(f"no bins in band [{lo}, {hi})")
        out.append(10 * np.log10(np.mean(psd[m])))
    return np.array(out)


# --- calibration --------------------------------------------------------------

def integrated_in_band(p: NoiseParams, bw_hz: float, form: str = "chopped",
                       f_lo_hz: float = 0.0) -> float:
    """Integral of the input-referred PSD over [f_lo, bw] (V^2).

    ``form`` is 'chopped' (first-harmonic closed form), 'unchopped' or
    'chopped_input' (see ``in_psd_chopped_input``).
    """
    if form == "chopped":
        fn = lambda f: in_psd(p, f, True)
    elif form == "unchopped":
        if f_lo_hz <= 0:
            raise ValueError("unchopped 1/f noise needs f_lo_hz > 0")
        fn = lambda f: in_psd(p, f, False)
    elif form == "chopped_input":
        fn = lambda f: in_psd_chopped_input(p, f)
    else:
        raise ValueError(f"unknown form {form!r}")
    lo = max(f_lo_hz, 1e-9 * bw_hz)
    val, _ = integrate.quad(fn, lo, bw_hz, epsabs=0, epsrel=1e-10, limit=400)
    return val


def noise_budget(sig_amp_v: float, snr_db: float) -> float:
    """In-band noise power (V^2) giving ``snr_db`` for a sine of ``sig_amp_v``."""
    return sig_amp_v ** 2 / 2 / 10 ** (snr_db / 10)


def calibrate_dda_thermal(p: NoiseParams, budget_v2: float, bw_hz: float,
                          form: str = "chopped", f_lo_hz: float = 0.0) -> NoiseParams:
    """Solve S_dda_th (fc held) so the in-band noise integral hits the budget.

    The integral is affine in S_dda_th, so two evaluations determine it.
    """
    base = integrated_in_band(p.replace(s_dda_th=1e-300), bw_hz, form, f_lo_hz)
    unit = integrated_in_band(p.replace(s_dda_th=1.0), bw_hz, form, f_lo_hz) - base
    s = (budget_v2 - base) / unit
    if not s > 0:
        raise ValueError(f"resistor noise alone ({base:.4g} V^2) exceeds the budget {budget_v2:.4g}")
    return p.replace(s_dda_th=s)


def load_calibration(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def params_from_calibration(cal: dict) -> NoiseParams:
    g = cal["integrator"]
    return NoiseParams(IntegratorParams(g["A_i"], g["A_f"], g["R_ohm"], g["C_f"]),
                       temp_k=cal["temp_k"], s_dda_th=cal["s_dda_th_v2_per_hz"],
                       fc_hz=cal["fc_hz"], f_ch_hz=cal["f_ch_hz"])


def write_psd_sweep_csv(path: str | Path, p: NoiseParams, f_hz, chopped: bool,
                        df_hz: float | None = None) -> None:
    """``freq_hz,out_psd,in_psd`` for one chopping setting."""
    f = np.asarray(f_hz, dtype=float)
    o = out_psd(p, f, chopped, df_hz)
    i = in_psd(p, f, chopped, df_hz)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "out_psd", "in_psd"])
        for row in zip(f, o, i):
            w.writerow([f"{v:.12g}" for v in row])
