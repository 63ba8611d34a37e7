"""Closed-form s- and z-domain models of the modulator loop.

These are the analytic references the time-domain simulator is checked
against: the two-port DDA R-C integrator response, the signal/noise transfer
functions of the second-order loop, and a linearised SQNR prediction.
"""

from __future__ import annotations

import cmath
import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate


class ResonanceError(ArithmeticError):
    """Transfer-function denominator vanished at the evaluation point."""


@dataclass(frozen=True)
class IntegratorParams:
    """DDA R-C integrator: per-port DC gains plus the R-C network.

    A_i is the gain from the non-inverting (sensor) port, A_f from the
    inverting (feedback) port. The skew ratio n = A_i/A_f >= 1.
    """

    A_i: float
    A_f: float
    R: float
    C: float

    def __post_init__(self):
        if not (self.A_f > 0 and self.A_i >= self.A_f):
            raise ValueError(f"need A_i >= A_f > 0, got A_i={self.A_i}, A_f={self.A_f}")
        if not (self.R > 0 and self.C > 0):
            raise ValueError("R and C must be positive")

    @property
    def rc(self) -> float:
        return self.R * self.C

    @property
    def tau(self) -> float:
        """Loop time constant (A_f + 1)RC; the feedback port sets the pole."""
        return (self.A_f + 1) * self.R * self.C

    @property
    def skew(self) -> float:
        return self.A_i / self.A_f

    @property
    def pole_rad_s(self) -> float:
        return 1.0 / self.tau

    @property
    def zero_rad_s(self) -> float:
        return 1.0 / self.rc


@dataclass(frozen=True)
class LoopParams:
    G: float = 0.5
    N: float = 1.0
    n: float = 1.0

    def __post_init__(self):
        if not 0 < self.G <= 1:
            raise ValueError("G must be in (0, 1]")
        if self.N < 1 or self.n < 1:
            raise ValueError("N and n must be >= 1")


def dda_integrator_response(p: IntegratorParams, f_hz):
    """Port transfer functions (H_i, H_f) at s = j*2*pi*f.

    H_i = A_i(1 + sRC)/(1 + (A_f+1)sRC),  H_f = -A_f/(1 + (A_f+1)sRC).
    Accepts scalars or arrays.
    """
    f = np.asarray(f_hz, dtype=float)
    if np.any(f < 0):
        raise ValueError("f_hz must be >= 0")
    s = 2j * np.pi * f
    den = 1 + s * p.tau
    h_i = p.A_i * (1 + s * p.rc) / den
    h_f = -p.A_f / den
    if np.ndim(f_hz) == 0:
        return complex(h_i), complex(h_f)
    return h_i, h_f


def _check_unit_circle(z: complex) -> None:
    if abs(abs(z) - 1) > 1e-9:
        raise ValueError(f"z must lie on the unit circle, |z|={abs(z)}")


def stf_ntf_eq3(lp: LoopParams, z: complex) -> tuple[complex, complex]:
    """STF and NTF of the loop with a DT-equivalent first stage and n = 1."""
    _check_unit_circle(z)
    if lp.n != 1:
        raise ValueError("this form holds for n = 1 only; use stf_ntf or stf_ntf_eq4")
    G, N = lp.G, lp.N
    zi = 1 / z
    terms = ((G * G - G + N) * zi ** 2, (G - 2 * N) * zi, N)
    den = sum(terms)
    if abs(den) <= 1e-12 * sum(abs(t) for t in terms):
        raise ResonanceError(f"denominator vanishes at z={z}")
    return G * G * N * zi ** 2 / den, N * (1 - zi) ** 2 / den


def stf_ntf_eq4(lp: LoopParams, z: complex) -> tuple[complex, complex]:
    """Low-frequency (z ~ 1) approximation with skew gain n."""
    _check_unit_circle(z)
    zi = 1 / z
    gain = lp.n * lp.N
    return gain * zi ** 2, (1 - zi) ** 2 * gain / lp.G ** 2


def stf_ntf(lp: LoopParams, z: complex) -> tuple[complex, complex]:
    """Exact STF/NTF for any n.

    Two delaying integrators with pre-gain G; the first stage sees the DAC
    through 1/(N n), the second through 1/N. Equals ``stf_ntf_eq3`` for
    n = 1 and tends to ``stf_ntf_eq4`` as z -> 1.
    """
    _check_unit_circle(z)
    G, N, n = lp.G, lp.N, lp.n
    zi = 1 / z
    terms = (N * n * (1 - zi) ** 2, G * G * zi ** 2, n * G * zi * (1 - zi))
    den = sum(terms)
    if abs(den) <= 1e-12 * sum(abs(t) for t in terms):
        raise ResonanceError(f"denominator vanishes at z={z}")
    return n * N * G * G * zi ** 2 / den, N * n * (1 - zi) ** 2 / den


def sqnr_predict(lp: LoopParams, osr: float, amp_dbfs: float,
                 sig_freq_norm: float | None = None) -> float:
    """Linearised SQNR (dB) with white additive quantisation error.

    The 1-bit quantiser has step 2 (levels +/-1), so the error is uniform
    with power 1/3 spread over [0, fs/2]. ``amp_dbfs`` is referenced to the
    quantiser level, i.e. the N = 1 full scale, which is what makes the
    prediction independent of N. ``sig_freq_norm`` is f_sig/fs and defaults
    to the middle of the band.
    """
    if osr < 8:
        raise ValueError("osr must be >= 8")
    nu_b = 1.0 / (2 * osr)
    nu_sig = nu_b / 2 if sig_freq_norm is None else sig_freq_norm
    amp = 10 ** (amp_dbfs / 20)

    def ntf2(nu):
        return abs(stf_ntf(lp, cmath.exp(2j * math.pi * nu))[1]) ** 2

    delta = 2.0
    # one-sided error PSD delta^2/12/(fs/2); frequencies normalised to fs
    s_e = delta ** 2 / 12 / 0.5
    noise, _ = integrate.quad(ntf2, 0.0, nu_b, epsabs=0, epsrel=1e-10, limit=200)
    noise *= s_e
    stf = stf_ntf(lp, cmath.exp(2j * math.pi * nu_sig))[0]
    return 10 * math.log10(abs(stf) ** 2 * amp ** 2 / 2 / noise)


def write_response_csv(path: str | Path, f_hz, h) -> None:
    """``freq_hz,mag_db,phase_deg`` table for one transfer function."""
    h = np.asarray(h)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz", "mag_db", "phase_deg"])
        for f, v in zip(np.asarray(f_hz), h):
            w.writerow([f"{f:.12g}", f"{20 * math.log10(max(abs(v), 1e-300)):.12g}",
                        f"{math.degrees(cmath.phase(v)):.12g}"])
