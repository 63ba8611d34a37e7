"""Figures of merit, dynamic-range sweeps and comparison tables."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

from .loopsim import ModulatorConfig, simulate, sine_input
from .sigproc import AnalysisSettings, measure_snr

DEFAULT_TONE_HZ = 7 * 1e6 / 8192  # 854.49 Hz, coherent for any n_fft >= 8192 at 1 MHz


def fom_walden(power_w: float, enob_bits: float, nyquist_sps: float) -> float:
    """Energy per conversion step in pJ: P / (2^ENOB * f_Nyq) * 1e12."""
    if not (power_w > 0 and nyquist_sps > 0):
        raise ValueError("power_w and nyquist_sps must be positive")
    if enob_bits < 0:
        raise ValueError("enob_bits must be >= 0")
    return power_w / (2.0 ** enob_bits * nyquist_sps) * 1e12


def fom_schreier(dr_db: float, bw_hz: float, power_w: float) -> float:
    """DR + 10 log10(BW / P), in dB."""
    if not (bw_hz > 0 and power_w > 0):
        raise ValueError("bw_hz and power_w must be positive")
    return dr_db + 10 * math.log10(bw_hz / power_w)


def dynamic_range_db(a_max: float, a_min: float) -> float:
    """20 log10(a_max / a_min) for two amplitudes in the same unit."""
    if not (a_max > 0 and a_min > 0):
        raise ValueError("amplitudes must be positive")
    return 20 * math.log10(a_max / a_min)


# --- comparison table ----------------------------------------------------------

@dataclass(frozen=True)
class ConverterRecord:
    label: str
    power_w: float
    bw_hz: float
    nyquist_sps: float
    enob_bits: float | None = None
    dr_db: float | None = None
    printed_fom_w: float | None = None
    printed_fom_s: float | None = None

    def __post_init__(self):
        if not (self.power_w > 0 and self.nyquist_sps > 0 and self.bw_hz > 0):
            raise ValueError(f"{self.label}: power_w, bw_hz and nyquist_sps must be positive")

    @property
    def fom_w(self) -> float | None:
        if self.enob_bits is None:
            return None
        return fom_walden(self.power_w, self.enob_bits, self.nyquist_sps)

    @property
    def fom_s(self) -> float | None:
        if self.dr_db is None:
            return None
        return fom_schreier(self.dr_db, self.bw_hz, self.power_w)


def _opt_float(s: str) -> float | None:
    s = s.strip()
    return float(s) if s else None


def read_records_csv(path_or_text: str | Path, *, text: bool = False) -> list[ConverterRecord]:
    """Records from ``label,power_w,bw_hz,nyquist_sps,enob_bits,dr_db[,printed_fom_w,printed_fom_s]``.

    Empty cells mean "not reported".
    """
    fh = io.StringIO(path_or_text) if text else open(path_or_text, encoding="utf-8", newline="")
    with fh:
        rows = list(csv.DictReader(fh))
    recs = []
    for r in rows:
        recs.append(ConverterRecord(
            label=r["label"], power_w=float(r["power_w"]), bw_hz=float(r["bw_hz"]),
            nyquist_sps=float(r["nyquist_sps"]),
            enob_bits=_opt_float(r.get("enob_bits", "")),
            dr_db=_opt_float(r.get("dr_db", "")),
            printed_fom_w=_opt_float(r.get("printed_fom_w", "") or ""),
            printed_fom_s=_opt_float(r.get("printed_fom_s", "") or "")))
    return recs


def survey_records() -> list[ConverterRecord]:
    """The shipped comparison-survey fixture."""
    text = resources.files("ddadsm").joinpath("data/survey.csv").read_text(encoding="utf-8")
    return read_records_csv(text, text=True)


TABLE_COLUMNS = ("label", "power_w", "bw_hz", "nyquist_sps", "enob_bits", "dr_db",
                 "fom_w_pj", "fom_s_db", "printed_fom_w", "printed_fom_s")


def comparison_table(records: Sequence[ConverterRecord]) -> list[dict]:
    """Rows with recomputed FOMs, best FOM_S first, then by label.

    Records without a DR sort after all others. Missing inputs give ``None``
    in the corresponding FOM cell.
    """
    if not records:
        raise ValueError("records must be non-empty")

    def key(r):
        fs = r.fom_s
        return (fs is None, -(fs or 0.0), r.label)

    rows = []
    for r in sorted(records, key=key):
        rows.append({
            "label": r.label, "power_w": r.power_w, "bw_hz": r.bw_hz,
            "nyquist_sps": r.nyquist_sps, "enob_bits": r.enob_bits, "dr_db": r.dr_db,
            "fom_w_pj": r.fom_w, "fom_s_db": r.fom_s,
            "printed_fom_w": r.printed_fom_w, "printed_fom_s": r.printed_fom_s,
        })
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in rows:
        w.writerow([_cell(r[c]) for c in TABLE_COLUMNS])
    return buf.getvalue()


def table_text(rows: list[dict]) -> str:
    """Fixed-width rendering; missing values are shown as '-'."""
    cells = [list(TABLE_COLUMNS)] + [[_cell(r[c]) or "-" for c in TABLE_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for row in cells:
        parts = [row[0].ljust(widths[0])] + [v.rjust(wd) for v, wd in zip(row[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines) + "\n"


# --- dynamic-range sweep ---------------------------------------------------------

@dataclass(frozen=True)
class DrPoint:
    amp_dbfs: float
    snr_db: float
    resolved: bool
    overloads: int


@dataclass
class DrCurve:
    points: list[DrPoint]
    full_scale_v: float
    dr_db: float | None = field(default=None)
    peak_snr_db: float | None = field(default=None)
    peak_amp_dbfs: float | None = field(default=None)
    knee_amp_dbfs: float | None = field(default=None)
    min_amp_dbfs: float | None = field(default=None)

    def __post_init__(self):
        amps = [p.amp_dbfs for p in self.points]
        if any(b <= a for a, b in zip(amps, amps[1:])):
            raise ValueError("amplitudes must be strictly increasing")
        self._analyse()

    def _analyse(self, knee_db: float = 6.0):
        good = [p for p in self.points if p.resolved and math.isfinite(p.snr_db)]
        if not good:
            return
        peak = max(good, key=lambda p: p.snr_db)
        self.peak_snr_db, self.peak_amp_dbfs = peak.snr_db, peak.amp_dbfs
        near = [p for p in good if p.snr_db >= peak.snr_db - knee_db]
        above = [p for p in good if p.snr_db > 0]
        self.knee_amp_dbfs = max(p.amp_dbfs for p in near)
        if above:
            self.min_amp_dbfs = min(p.amp_dbfs for p in above)
            self.dr_db = self.knee_amp_dbfs - self.min_amp_dbfs

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["amp_dbfs", "snr_db"])
        for p in self.points:
            w.writerow([f"{p.amp_dbfs:.12g}", f"{p.snr_db:.12g}" if p.resolved else ""])
        return buf.getvalue()


def _sweep_point(args) -> DrPoint:
    cfg, amp_dbfs, freq_hz, analysis, noise = args
    amp_v = cfg.vfb_v * 10 ** (amp_dbfs / 20)
    nz = None
    if noise is not None:
        from .noisemodel import synth_device_noise
        nz = synth_device_noise(noise, cfg.substep_rate_hz,
                                cfg.duration_samples * cfg.substeps, cfg.seed)
    tr = simulate(cfg, sine_input(cfg, amp_v, freq_hz), nz, keep_w1=False)
    res, _ = measure_snr(tr.q.as_stream(cfg.vfb_v), freq_hz, analysis)
    return DrPoint(amp_dbfs, res.snr_db, res.resolved, int(tr.overload_events.size))


def dr_sweep(cfg: ModulatorConfig, amps_dbfs: Sequence[float],
             analysis: AnalysisSettings = AnalysisSettings(),
             freq_hz: float = DEFAULT_TONE_HZ, noise=None,
             workers: int | None = None) -> DrCurve:
    """SNR versus input level with dBFS referred to ``cfg.vfb_mv``.

    Every point runs an independent simulation with the same seed, so the
    curve does not depend on ``workers``. ``dr_db`` spans from the smallest
    resolved level with SNR > 0 dB to the largest level within 6 dB of the
    peak SNR (the overload knee).
    """
    amps = [float(a) for a in amps_dbfs]
    if len(amps) < 3:
        raise ValueError("need at least 3 amplitudes")
    if any(b <= a for a, b in zip(amps, amps[1:])):
        raise ValueError("amplitudes must be strictly increasing")
    jobs = [(cfg, a, freq_hz, analysis, noise) for a in amps]
    if workers == 1:
        pts = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            pts = list(ex.map(_sweep_point, jobs))
    return DrCurve(points=pts, full_scale_v=cfg.vfb_v)
