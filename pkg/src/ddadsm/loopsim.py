"""Sample-accurate time-domain simulation of the hybrid CT/DT modulator.

Per sampling period T_s:

* the CT first stage (DDA R-C integrator) is advanced in ``substeps`` exact
  zero-order-hold updates, driven by the input plus injected device noise on
  the sensor port and the NRZ DAC level on the feedback port;
* the chopper, when enabled, flips the sign of the DDA noise injection at
  the middle of each sampling clock phase (T/4 and 3T/4 for f_ch = fs);
* the SC second stage samples the first-stage output one sub-step after
  T/2 and integrates it against its own DAC tap;
* the 1-bit quantiser fires at the end of the period and the DAC holds the
  result for the next full period.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy import signal

from .linmodel import IntegratorParams
from .sigproc import SampleStream, square_wave


@dataclass(frozen=True)
class ModulatorConfig:
    fs_hz: float = 1e6
    substeps: int = 16
    G: float = 0.5
    R: float = 100e3
    C: float = 20e-12
    A_i: float = 1e6
    A_f: float = 1e6
    vfb_mv: float = 100.0
    chopper_on: bool = False
    f_ch_hz: float | None = None
    seed: int = 0
    duration_samples: int = 1 << 20
    clip_factor: float = 10.0

    def __post_init__(self):
        if not self.fs_hz > 0:
            raise ValueError("fs_hz must be positive")
        if self.substeps < 4 or self.substeps % 2:
            raise ValueError("substeps must be even and >= 4")
        if not self.vfb_mv > 0:
            raise ValueError("vfb_mv must be positive")
        if self.duration_samples < 1:
            raise ValueError("duration_samples must be >= 1")
        if not 0 < self.G <= 1:
            raise ValueError("G must be in (0, 1]")
        # equal unity-gain frequencies of the two integrators: 1/RC = G*fs
        ugf_ct, ugf_dt = 1.0 / (self.R * self.C), self.G * self.fs_hz
        if abs(ugf_ct - ugf_dt) > 1e-9 * ugf_dt:
            raise ValueError(
                f"1/(R*C) = {ugf_ct:.6g} rad/s must equal G*fs = {ugf_dt:.6g}")
        self.integrator  # validates A_i, A_f
        if self.chopper_on:
            square_wave(1, self.fs_hz * self.substeps, self.chop_hz)

    @property
    def integrator(self) -> IntegratorParams:
        return IntegratorParams(self.A_i, self.A_f, self.R, self.C)

    @property
    def chop_hz(self) -> float:
        return self.fs_hz if self.f_ch_hz is None else self.f_ch_hz

    @property
    def vfb_v(self) -> float:
        return self.vfb_mv * 1e-3

    @property
    def substep_rate_hz(self) -> float:
        return self.fs_hz * self.substeps

    def replace(self, **kw) -> "ModulatorConfig":
        d = asdict(self)
        d.update(kw)
        return ModulatorConfig(**d)


@dataclass(frozen=True)
class BitStream:
    rate_hz: float
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.int8)
        if b.ndim != 1 or not np.all((b == 1) | (b == -1)):
            raise ValueError("bits must be a 1-D sequence over {-1, +1}")
        object.__setattr__(self, "bits", b)

    def __len__(self):
        return self.bits.size

    def as_stream(self, vfb_v: float = 1.0, label: str = "q") -> SampleStream:
        return SampleStream(self.rate_hz, self.bits * float(vfb_v), label)


@dataclass
class ModTrace:
    w1: SampleStream | None
    w2: SampleStream
    q: BitStream
    overload_events: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


# --- single-step primitives ----------------------------------------------

def ct_stage_coeffs(p: IntegratorParams, dt: float) -> tuple[float, float, float, float]:
    """(decay, b_i, b_f, direct) for the exact ZOH update of the CT stage.

    x' = decay*x + b_i*v_i + b_f*v_f,   out = direct*v_i + x'
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    decay = math.exp(-dt / p.tau)
    g = -math.expm1(-dt / p.tau)
    direct = p.A_i / (p.A_f + 1)
    return decay, g * p.A_f * direct, -g * p.A_f, direct


def ct_stage_step(x: float, v_i: float, v_f: float, dt: float,
                  p: IntegratorParams) -> tuple[float, float]:
    """Advance the one-state realisation of the DDA integrator by ``dt``.

    Inputs are held constant over the step, which makes the update exact.
    Returns ``(new_state, output_volts)``.
    """
    decay, b_i, b_f, direct = ct_stage_coeffs(p, dt)
    x_new = decay * x + b_i * v_i + b_f * v_f
    return x_new, direct * v_i + x_new


def ct_stage_filter(v_i: np.ndarray, v_f: np.ndarray | float, rate_hz: float,
                    p: IntegratorParams, x0: float = 0.0) -> np.ndarray:
    """Vectorised ``ct_stage_step`` over a whole piecewise-constant record."""
    decay, b_i, b_f, direct = ct_stage_coeffs(p, 1.0 / rate_hz)
    v_i = np.asarray(v_i, dtype=float)
    drive = b_i * v_i + b_f * np.broadcast_to(np.asarray(v_f, dtype=float), v_i.shape)
    x, _ = signal.lfilter([1.0], [1.0, -decay], drive, zi=[decay * x0])
    return direct * v_i + x


def dt_stage_step(w2_prev: float, u_sampled: float, v_fb: float, G: float) -> float:
    """Delaying SC integrator: w2 = w2_prev + G*(u - v_fb)."""
    return w2_prev + G * (u_sampled - v_fb)


def quantize_and_dac(w2: float, vfb_amp: float) -> tuple[int, float]:
    """1-bit quantiser and NRZ DAC level; w2 == 0 resolves to +1."""
    bit = 1 if w2 >= 0 else -1
    return bit, bit * vfb_amp


# --- full loop -------------------------------------------------------------

def _as_substep_matrix(x: SampleStream, cfg: ModulatorConfig, n: int, what: str) -> np.ndarray:
    S = cfg.substeps
    if math.isclose(x.rate_hz, cfg.substep_rate_hz, rel_tol=1e-12):
        if len(x) < n * S:
            raise ValueError(f"{what} too short: {len(x)} < {n * S} substep samples")
        return x.samples[:n * S].reshape(n, S)
    if math.isclose(x.rate_hz, cfg.fs_hz, rel_tol=1e-12):
        if len(x) < n:
            raise ValueError(f"{what} too short: {len(x)} < {n} samples")
        return np.broadcast_to(x.samples[:n, None], (n, S))
    raise ValueError(f"{what} rate {x.rate_hz} must be fs or fs*substeps")


def chopper_wave(cfg: ModulatorConfig, n_substeps: int) -> np.ndarray:
    """Chopper sign per sub-step; toggles at the middle of each clock phase."""
    return square_wave(n_substeps, cfg.substep_rate_hz, cfg.chop_hz,
                       offset_samples=cfg.substeps // 4)


def simulate(cfg: ModulatorConfig, inp: SampleStream, noise=None,
             keep_w1: bool = True) -> ModTrace:
    """Run the modulator for ``cfg.duration_samples`` periods.

    ``inp`` is sampled at fs (held across sub-steps) or at fs*substeps.
    ``noise`` is an optional ``NoiseRealization`` at the sub-step rate; its
    ``resistor_thermal`` component enters the sensor port directly and the
    DDA components are chopped when ``cfg.chopper_on``.

    States that exceed ``clip_factor * vfb`` are clipped and the period index
    is recorded in ``overload_events``. With ``keep_w1=False`` the sub-step
    trace of the first stage is not materialised.
    """
    n, S = cfg.duration_samples, cfg.substeps
    p = cfg.integrator
    vfb = cfg.vfb_v
    clip = cfg.clip_factor * vfb
    G = cfg.G

    vi = _as_substep_matrix(inp, cfg, n, "input")
    if noise is not None:
        comp = noise.components
        res = _as_substep_matrix(comp["resistor_thermal"], cfg, n, "noise")
        dda = (_as_substep_matrix(comp["dda_thermal"], cfg, n, "noise")
               + _as_substep_matrix(comp["dda_flicker"], cfg, n, "noise"))
        if cfg.chopper_on:
            dda = dda * chopper_wave(cfg, n * S).reshape(n, S)
        vi = vi + res + dda

    decay, b_i, b_f, direct = ct_stage_coeffs(p, 1.0 / cfg.substep_rate_hz)
    m = S // 2 + 1  # first sub-step boundary after mid-period
    powers = decay ** np.arange(S - 1, -1, -1)
    w_end = b_i * powers
    w_mid = b_i * powers[S - m:]
    in_end = vi @ w_end
    in_mid = vi[:, :m] @ w_mid + direct * vi[:, m - 1]
    fb_end = b_f * powers.sum()
    fb_mid = b_f * powers[S - m:].sum()
    a_end, a_mid = decay ** S, decay ** m

    x_start = np.empty(n)
    vf_arr = np.empty(n)
    w2_arr = np.empty(n)
    bits = np.empty(n, dtype=np.int8)
    events = []

    x, w2 = 0.0, 0.0
    bit, vf = quantize_and_dac(w2, vfb)
    in_mid_l, in_end_l = in_mid.tolist(), in_end.tolist()
    for k in range(n):
        x_start[k] = x
        vf_arr[k] = vf
        u = a_mid * x + in_mid_l[k] + fb_mid * vf
        x = a_end * x + in_end_l[k] + fb_end * vf
        w2 = w2 + G * (u - vf)
        if u > clip or u < -clip or x > clip or x < -clip or w2 > clip or w2 < -clip:
            events.append(k)
            x = min(max(x, -clip), clip)
            w2 = min(max(w2, -clip), clip)
        w2_arr[k] = w2
        bit = 1 if w2 >= 0 else -1
        vf = bit * vfb
        bits[k] = bit

    w1 = None
    if keep_w1:
        w1m = np.empty((n, S))
        xs = x_start.copy()
        fb = b_f * vf_arr
        for j in range(S):
            xs = decay * xs + b_i * vi[:, j] + fb
            w1m[:, j] = direct * vi[:, j] + xs
        w1 = SampleStream(cfg.substep_rate_hz, w1m.ravel(), "w1")

    return ModTrace(w1=w1, w2=SampleStream(cfg.fs_hz, w2_arr, "w2"),
                    q=BitStream(cfg.fs_hz, bits),
                    overload_events=np.asarray(events, dtype=np.int64))


def sine_input(cfg: ModulatorConfig, amp_v: float, freq_hz: float,
               at_substep_rate: bool = False) -> SampleStream:
    """Sine stimulus long enough for ``cfg``; optionally at the sub-step rate."""
    if at_substep_rate:
        rate, n = cfg.substep_rate_hz, cfg.duration_samples * cfg.substeps
    else:
        rate, n = cfg.fs_hz, cfg.duration_samples
    if not 0 <= freq_hz < rate / 2:
        raise ValueError(f"freq_hz={freq_hz} outside [0, rate/2) for rate {rate}")
    k = np.arange(n)
    return SampleStream(rate, amp_v * np.sin(2 * np.pi * freq_hz * k / rate), "vin")


def dc_input(cfg: ModulatorConfig, level_v: float) -> SampleStream:
    return SampleStream(cfg.fs_hz, np.full(cfg.duration_samples, float(level_v)), "vin")


# --- file formats ----------------------------------------------------------

def write_bitstream(path: str | Path, q: BitStream) -> None:
    """Header ``rate_hz=<value>`` then '0'/'1' characters, 64 per line."""
    chars = np.where(q.bits > 0, ord("1"), ord("0")).astype(np.uint8).tobytes().decode("ascii")
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(f"rate_hz={q.rate_hz!r}\n")
        for i in range(0, len(chars), 64):
            fh.write(chars[i:i + 64])
            fh.write("\n")


def read_bitstream(path: str | Path) -> BitStream:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip()
        key, _, val = header.partition("=")
        if key != "rate_hz" or not val:
            raise ValueError(f"bad bitstream header {header!r}")
        body = "".join(line.strip() for line in fh)
    raw = np.frombuffer(body.encode("ascii"), dtype=np.uint8)
    if np.any((raw != ord("0")) & (raw != ord("1"))):
        raise ValueError("bitstream body must contain only '0' and '1'")
    return BitStream(float(val), np.where(raw == ord("1"), 1, -1).astype(np.int8))


def write_trace_csv(path: str | Path, tr: ModTrace) -> None:
    """Per-period trace: index, w2 (V), q, overload flag."""
    flags = np.zeros(len(tr.q), dtype=bool)
    flags[tr.overload_events] = True
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "w2_v", "q", "overload"])
        for i, (v, b, f) in enumerate(zip(tr.w2.samples, tr.q.bits, flags)):
            w.writerow([i, f"{v:.12g}", int(b), int(f)])
