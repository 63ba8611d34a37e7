"""Regenerate src/ddadsm/data/noise_calibration.json.

Solves the DDA thermal-noise density so that the in-band input-referred
noise of the chopped integrator equals the budget implied by the target SNR
for the target input amplitude. The flicker corner is held fixed.
"""

import json
from pathlib import Path

from ddadsm.linmodel import IntegratorParams
from ddadsm.noisemodel import NoiseParams, calibrate_dda_thermal, noise_budget

TARGET_SNR_DB = 80.1
SIG_AMP_V = 70.71e-3
BW_HZ = 1000.0
A = 1000.0

base = NoiseParams(IntegratorParams(A, A, 100e3, 20e-12), temp_k=300.0,
                   s_dda_th=1e-16, fc_hz=10e3, f_ch_hz=1e6)
budget = noise_budget(SIG_AMP_V, TARGET_SNR_DB)
closed_form = calibrate_dda_thermal(base, budget, BW_HZ, "chopped")
chopped_input = calibrate_dda_thermal(base, budget, BW_HZ, "chopped_input")

out = {
    "procedure": ("fc_hz held fixed; s_dda_th_v2_per_hz solved so that the integral of the "
                  "chopped first-harmonic input-referred PSD over [0, bw_hz] equals "
                  "budget_v2 = signal_amp_v^2/2 / 10^(target_snr_db/10)"),
    "generated_by": "tools/make_noise_calibration.py",
    "target_snr_db": TARGET_SNR_DB,
    "signal_amp_v": SIG_AMP_V,
    "bw_hz": BW_HZ,
    "budget_v2": budget,
    "integrator": {"A_i": A, "A_f": A, "R_ohm": 100e3, "C_f": 20e-12},
    "temp_k": 300.0,
    "fc_hz": 10e3,
    "f_ch_hz": 1e6,
    "s_dda_th_v2_per_hz": closed_form.s_dda_th,
    "alt_chopped_input_s_dda_th_v2_per_hz": chopped_input.s_dda_th,
}
path = Path(__file__).resolve().parents[1] / "src" / "ddadsm" / "data" / "noise_calibration.json"
path.write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
print(json.dumps(out, indent=2))
