"""Cascaded integrator-comb (sinc^K) decimation of the 1-bit modulator output.

The integrators run at the modulator rate in 64-bit two's-complement
arithmetic. Intermediate wrap-around is harmless because the combs undo it
exactly, as long as the true output fits in the register: the growth is
``stages * log2(osr) + 1`` bits, i.e. 28 bits for sinc^3 at OSR 500.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .loopsim import BitStream
from .sigproc import SampleStream


@dataclass(frozen=True)
class DecimConfig:
    osr: int = 500
    stages: int = 3

    def __post_init__(self):
        if int(self.osr) != self.osr or self.osr < 2:
            raise ValueError("osr must be an integer >= 2")
        if int(self.stages) != self.stages or self.stages < 1:
            raise ValueError("stages must be a positive integer")
        if self.register_bits > 63:
            raise ValueError("word growth exceeds a 64-bit accumulator")

    @property
    def register_bits(self) -> int:
        return math.ceil(self.stages * math.log2(self.osr)) + 1


def _cic(x: np.ndarray, cfg: DecimConfig) -> np.ndarray:
    y = x.astype(np.int64)
    with np.errstate(over="ignore"):
        for _ in range(cfg.stages):
            y = np.cumsum(y, dtype=np.int64)
        y = y[cfg.osr - 1::cfg.osr]
        for _ in range(cfg.stages):
            y = np.diff(y, prepend=np.int64(0))
    return y.astype(float) / float(cfg.osr) ** cfg.stages


def cic_decimate(q: BitStream | np.ndarray, cfg: DecimConfig = DecimConfig(),
                 rate_hz: float | None = None) -> SampleStream:
    """Decimate an integer sequence (normally the +/-1 bitstream) by ``osr``.

    Output sample ``m`` is the filter output at input index ``(m+1)*osr - 1``;
    the first ``stages - 1`` outputs are the start-up transient.
    """
    if isinstance(q, BitStream):
        x, rate = q.bits, q.rate_hz
    else:
        x = np.asarray(q)
        if rate_hz is None:
            raise ValueError("rate_hz is required for a raw array")
        rate = rate_hz
        if not np.issubdtype(x.dtype, np.integer):
            if not np.all(x == np.round(x)):
                raise ValueError("input must be integer valued")
    if x.size < cfg.osr * cfg.stages:
        raise ValueError(f"need at least osr*stages = {cfg.osr * cfg.stages} samples")
    return SampleStream(rate / cfg.osr, _cic(x, cfg), "cic")


def cic_impulse_response(cfg: DecimConfig) -> np.ndarray:
    """Length ``stages*(osr-1)+1`` impulse response before downsampling (unit dc gain)."""
    h = np.ones(1)
    box = np.ones(cfg.osr)
    for _ in range(cfg.stages):
        h = np.convolve(h, box)
    return h / float(cfg.osr) ** cfg.stages


def cic_frequency_response(cfg: DecimConfig, f_hz, rate_hz: float):
    """|sin(pi f osr/fs) / (osr sin(pi f/fs))|^stages, unity at dc."""
    nu = np.asarray(f_hz, dtype=float) / rate_hz
    num = np.sin(np.pi * nu * cfg.osr)
    den = cfg.osr * np.sin(np.pi * nu)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(np.abs(den) < 1e-300, 1.0, np.abs(num / np.where(den == 0, 1, den)))
    out = r ** cfg.stages
    return float(out) if np.ndim(f_hz) == 0 else out


def write_decimated_csv(path: str | Path, y: SampleStream) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "value"])
        for i, v in enumerate(y.samples):
            w.writerow([i, f"{v:.12g}"])
