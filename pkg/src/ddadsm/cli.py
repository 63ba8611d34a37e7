"""Command-line entry point.

Subcommands ``simulate``, ``noise-psd``, ``linmodel``, ``sweep`` and ``fom``.
Configuration is a flat JSON object whose physical keys carry their unit in
the name (``fs_hz``, ``vfb_mv``, ...). Unknown keys are rejected. Every
command writes into a fresh temporary directory that is renamed onto
``--out`` only after all artifacts are complete, together with
``config.json`` (the fully resolved configuration, usable as ``--config``)
and ``manifest.json`` (tool version plus SHA-256 of each artifact).

Exit codes: 0 success, 1 invalid configuration or arguments, 2 the
simulation overloaded in more than ``overload_max_fraction`` of periods.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .decim import DecimConfig, cic_decimate, write_decimated_csv
from .linmodel import (IntegratorParams, LoopParams, dda_integrator_response, sqnr_predict,
                       stf_ntf, write_response_csv)
from .loopsim import ModulatorConfig, simulate, sine_input, write_bitstream
from .metrics import (DEFAULT_TONE_HZ, comparison_table, dr_sweep, read_records_csv,
                      survey_records, table_csv, table_text)
from .noisemodel import NoiseParams, synth_device_noise, write_psd_sweep_csv
from .sigproc import AnalysisSettings, measure_snr, write_spectrum_csv


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    # modulator
    "fs_hz": 1e6,
    "substeps": 16,
    "G": 0.5,
    "r_ohm": 100e3,
    "c_f": 20e-12,
    "a_i": 1e6,
    "a_f": 1e6,
    "vfb_mv": 100.0,
    "chopper_on": False,
    "f_ch_hz": 1e6,
    "duration_samples": 1 << 20,
    "clip_factor": 10.0,
    "overload_max_fraction": 0.01,
    # stimulus
    "amp_dbfs": -3.0,
    "sig_freq_hz": DEFAULT_TONE_HZ,
    # device noise
    "noise_on": False,
    "temp_k": 300.0,
    "s_dda_th_v2_per_hz": 1e-16,
    "fc_hz": 10e3,
    # analysis
    "n_fft": 65536,
    "window": "hann",
    "bw_hz": 1000.0,
    "signal_halfwidth_bins": 3,
    "dc_bins": 2,
    "osr": 500,
    "cic_stages": 3,
    # sweeps and tables
    "sweep_amps_dbfs": [-120.0, -100.0, -80.0, -60.0, -40.0, -20.0, -10.0, -6.0, -3.0, -1.5, 0.0, 1.0],
    "sweep_workers": 0,
    "psd_f_min_hz": 1.0,
    "psd_f_max_hz": 1e6,
    "psd_points": 400,
    "psd_df_hz": 1.0,
    "lin_f_min_hz": 0.1,
    "lin_f_max_hz": 1e6,
    "lin_points": 400,
    "lin_N": 1.0,
    "records_csv": "",
    "seed": 0,
}

_INT_KEYS = {"substeps", "duration_samples", "n_fft", "signal_halfwidth_bins", "dc_bins",
             "osr", "cic_stages", "sweep_workers", "psd_points", "lin_points", "seed"}
_BOOL_KEYS = {"chopper_on", "noise_on"}
_STR_KEYS = {"window", "records_csv"}
_LIST_KEYS = {"sweep_amps_dbfs"}


def resolve_config(raw: dict, seed: int | None = None) -> dict:
    """Merge ``raw`` over the defaults with type checks; unknown keys are an error."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    cfg = dict(DEFAULTS)
    for k, v in raw.items():
        if k in _BOOL_KEYS:
            if not isinstance(v, bool):
                raise ConfigError(f"{k} must be true or false")
        elif k in _INT_KEYS:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{k} must be an integer")
        elif k in _STR_KEYS:
            if not isinstance(v, str):
                raise ConfigError(f"{k} must be a string")
        elif k in _LIST_KEYS:
            if not isinstance(v, list) or not all(
                    isinstance(a, (int, float)) and not isinstance(a, bool) for a in v):
                raise ConfigError(f"{k} must be a list of numbers")
            v = [float(a) for a in v]
        else:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{k} must be a finite number")
            v = float(v)
        cfg[k] = v
    if seed is not None:
        if seed < 0 or seed >= 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg["seed"] = seed
    return cfg


def modulator_config(cfg: dict) -> ModulatorConfig:
    return ModulatorConfig(
        fs_hz=cfg["fs_hz"], substeps=cfg["substeps"], G=cfg["G"], R=cfg["r_ohm"],
        C=cfg["c_f"], A_i=cfg["a_i"], A_f=cfg["a_f"], vfb_mv=cfg["vfb_mv"],
        chopper_on=cfg["chopper_on"], f_ch_hz=cfg["f_ch_hz"], seed=cfg["seed"],
        duration_samples=cfg["duration_samples"], clip_factor=cfg["clip_factor"])


def noise_params(cfg: dict) -> NoiseParams:
    return NoiseParams(IntegratorParams(cfg["a_i"], cfg["a_f"], cfg["r_ohm"], cfg["c_f"]),
                       temp_k=cfg["temp_k"], s_dda_th=cfg["s_dda_th_v2_per_hz"],
                       fc_hz=cfg["fc_hz"], f_ch_hz=cfg["f_ch_hz"])


def analysis_settings(cfg: dict) -> AnalysisSettings:
    if cfg["window"] not in ("hann", "rectangular"):
        raise ConfigError("window must be 'hann' or 'rectangular'")
    return AnalysisSettings(n_fft=cfg["n_fft"], window=cfg["window"], bw_hz=cfg["bw_hz"],
                            signal_halfwidth=cfg["signal_halfwidth_bins"],
                            dc_bins=cfg["dc_bins"])


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


class _Outputs:
    """Collects artifacts in a temp dir and publishes them atomically."""

    def __init__(self, out: Path):
        self.out = out.resolve()
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=self.out.parent))

    def path(self, name: str) -> Path:
        return self.tmp / name

    def write_text(self, name: str, text: str) -> None:
        with open(self.tmp / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    def commit(self, command: str, cfg: dict) -> None:
        self.write_text("config.json", _dump_json(cfg))
        files = sorted(p.name for p in self.tmp.iterdir())
        hashes = {name: hashlib.sha256((self.tmp / name).read_bytes()).hexdigest()
                  for name in files}
        self.write_text("manifest.json", _dump_json(
            {"tool": "ddadsm", "version": __version__, "command": command,
             "config": cfg, "sha256": hashes}))
        old = None
        if self.out.exists():
            old = Path(tempfile.mkdtemp(prefix=".old-", dir=self.out.parent))
            os.rename(self.out, old / "prev")
        os.rename(self.tmp, self.out)
        if old is not None:
            shutil.rmtree(old)

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _freq_grid(lo: float, hi: float, n: int) -> np.ndarray:
    if not 0 < lo < hi or n < 2:
        raise ConfigError("frequency grid needs 0 < min < max and >= 2 points")
    return np.logspace(math.log10(lo), math.log10(hi), n)


def cmd_simulate(cfg: dict, out: _Outputs) -> int:
    mc = modulator_config(cfg)
    an = analysis_settings(cfg)
    amp_v = mc.vfb_v * 10 ** (cfg["amp_dbfs"] / 20)
    noise = None
    if cfg["noise_on"]:
        noise = synth_device_noise(noise_params(cfg), mc.substep_rate_hz,
                                   mc.duration_samples * mc.substeps, mc.seed)
    tr = simulate(mc, sine_input(mc, amp_v, cfg["sig_freq_hz"]), noise, keep_w1=False)
    res, spec = measure_snr(tr.q.as_stream(mc.vfb_v), cfg["sig_freq_hz"], an)
    write_bitstream(out.path("bitstream.txt"), tr.q)
    write_spectrum_csv(spec, out.path("psd.csv"))

    dcfg = DecimConfig(cfg["osr"], cfg["cic_stages"])
    y = cic_decimate(tr.q, dcfg)
    write_decimated_csv(out.path("decimated.csv"), y)

    frac = tr.overload_events.size / mc.duration_samples
    report = {
        "snr": res.as_dict(),
        "signal_amp_v": amp_v,
        "full_scale_v": mc.vfb_v,
        "n_fft": spec.n_fft,
        "n_avg": spec.n_avg,
        "window": spec.window,
        "enbw_bins": spec.enbw_bins,
        "ones_density": float(np.mean(tr.q.bits > 0)),
        "overload_events": int(tr.overload_events.size),
        "overload_fraction": frac,
        "sqnr_predict_db": sqnr_predict(LoopParams(G=mc.G), mc.fs_hz / (2 * an.bw_hz),
                                        cfg["amp_dbfs"], cfg["sig_freq_hz"] / mc.fs_hz),
    }
    out.write_text("report.json", _dump_json(report))
    return 2 if frac > cfg["overload_max_fraction"] else 0


def cmd_noise_psd(cfg: dict, out: _Outputs) -> int:
    p = noise_params(cfg)
    f = _freq_grid(cfg["psd_f_min_hz"], cfg["psd_f_max_hz"], cfg["psd_points"])
    write_psd_sweep_csv(out.path("noise_psd_unchopped.csv"), p, f, False)
    write_psd_sweep_csv(out.path("noise_psd_chopped.csv"), p, f, True, df_hz=cfg["psd_df_hz"])
    out.write_text("report.json", _dump_json({
        "resistor_psd_v2_per_hz": p.resistor_psd,
        "chopper_clamp_half_bin_hz": cfg["psd_df_hz"] / 2,
    }))
    return 0


def cmd_linmodel(cfg: dict, out: _Outputs) -> int:
    ip = IntegratorParams(cfg["a_i"], cfg["a_f"], cfg["r_ohm"], cfg["c_f"])
    f = _freq_grid(cfg["lin_f_min_hz"], cfg["lin_f_max_hz"], cfg["lin_points"])
    h_i, h_f = dda_integrator_response(ip, f)
    write_response_csv(out.path("integrator_hi.csv"), f, h_i)
    write_response_csv(out.path("integrator_hf.csv"), f, h_f)

    lp = LoopParams(G=cfg["G"], N=cfg["lin_N"], n=ip.skew)
    nyq = cfg["fs_hz"] / 2
    fz = f[f < nyq]
    tf = [stf_ntf(lp, complex(math.cos(2 * math.pi * v / cfg["fs_hz"]),
                              math.sin(2 * math.pi * v / cfg["fs_hz"]))) for v in fz]
    write_response_csv(out.path("stf.csv"), fz, [t[0] for t in tf])
    write_response_csv(out.path("ntf.csv"), fz, [t[1] for t in tf])

    pole_hz = ip.pole_rad_s / (2 * math.pi)
    zero_hz = ip.zero_rad_s / (2 * math.pi)
    out.write_text("poles_zeros.csv",
                   f"name,freq_hz\npole,{pole_hz:.12g}\nzero,{zero_hz:.12g}\n")
    out.write_text("report.json", _dump_json({
        "pole_hz": pole_hz, "zero_hz": zero_hz,
        "pole_rad_s": ip.pole_rad_s, "zero_rad_s": ip.zero_rad_s,
        "hf_gain_hi": ip.A_i / (ip.A_f + 1),
    }))
    return 0


def cmd_sweep(cfg: dict, out: _Outputs) -> int:
    mc = modulator_config(cfg)
    an = analysis_settings(cfg)
    noise = noise_params(cfg) if cfg["noise_on"] else None
    workers = cfg["sweep_workers"] or None
    curve = dr_sweep(mc, cfg["sweep_amps_dbfs"], an, cfg["sig_freq_hz"], noise, workers)
    out.write_text("dr_curve.csv", curve.to_csv())
    out.write_text("report.json", _dump_json({
        "full_scale_v": curve.full_scale_v,
        "dr_db": curve.dr_db,
        "peak_snr_db": curve.peak_snr_db,
        "peak_amp_dbfs": curve.peak_amp_dbfs,
        "knee_amp_dbfs": curve.knee_amp_dbfs,
        "min_amp_dbfs": curve.min_amp_dbfs,
        "knee_rule": "largest level within 6 dB of peak SNR",
        "points": [{"amp_dbfs": p.amp_dbfs, "snr_db": p.snr_db, "resolved": p.resolved,
                    "overload_events": p.overloads} for p in curve.points],
    }))
    return 0


def cmd_fom(cfg: dict, out: _Outputs) -> int:
    recs = read_records_csv(cfg["records_csv"]) if cfg["records_csv"] else survey_records()
    rows = comparison_table(recs)
    out.write_text("comparison.csv", table_csv(rows))
    out.write_text("comparison.txt", table_text(rows))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "noise-psd": cmd_noise_psd,
    "linmodel": cmd_linmodel,
    "sweep": cmd_sweep,
    "fom": cmd_fom,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    # flags are accepted before or after the subcommand; the subcommand copy
    # must not overwrite a value given before it
    def d(v):
        return argparse.SUPPRESS if suppress else v
    p.add_argument("--config", type=Path, default=d(None), help="flat JSON configuration file")
    p.add_argument("--seed", type=int, default=d(None), help="RNG seed (overrides the config)")
    p.add_argument("--out", type=Path, default=d(Path("out")), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ddadsm", description=__doc__.splitlines()[0])
    _global_flags(ap, suppress=False)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        _global_flags(sub.add_parser(name), suppress=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {}
        if args.config is not None:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        cfg = resolve_config(raw, args.seed)
    except (OSError, json.JSONDecodeError, ConfigError) as e:
        print(f"ddadsm: config error: {e}", file=sys.stderr)
        return 1

    out = _Outputs(args.out)
    try:
        code = COMMANDS[args.command](cfg, out)
    except (ConfigError, ValueError) as e:
        out.discard()
        print(f"ddadsm: {args.command}: {e}", file=sys.stderr)
        return 1
    except BaseException:
        out.discard()
        raise
    out.commit(args.command, cfg)
    if code == 2:
        print("ddadsm: simulation overloaded beyond overload_max_fraction", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
