import cmath
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddadsm.linmodel import (IntegratorParams, LoopParams, ResonanceError,
                             dda_integrator_response, sqnr_predict, stf_ntf, stf_ntf_eq3,
                             stf_ntf_eq4, write_response_csv)


def unit(nu):
    return cmath.exp(2j * math.pi * nu)


def test_integrator_dc_gains():
    p = IntegratorParams(1000, 1000, 100e3, 20e-12)
    h_i, h_f = dda_integrator_response(p, 0.0)
    assert h_i == pytest.approx(1000)
    assert h_f == pytest.approx(-1000)


def test_pole_and_zero_frequencies():
    # 60 dB gain, integrator UGF 5e4 rad/s
    p = IntegratorParams(1000, 1000, 1e5, 200e-12)
    assert p.rc == pytest.approx(2e-5)
    assert p.pole_rad_s == pytest.approx(49.95, abs=0.01)
    assert p.zero_rad_s == pytest.approx(5e4)


def test_high_frequency_limit():
    p = IntegratorParams(1000, 1000, 1e5, 200e-12)
    f = 1e6 / (2 * math.pi * p.rc)
    h_i, _ = dda_integrator_response(p, f)
    assert abs(h_i) == pytest.approx(1000 / 1001, rel=1e-6)


def test_skewed_ports_use_feedback_pole():
    p = IntegratorParams(4000, 1000, 1e5, 20e-12)
    f = np.array([0.0, 10.0, 1e3])
    h_i, h_f = dda_integrator_response(p, f)
    s = 2j * np.pi * f
    np.testing.assert_allclose(h_i, 4000 * (1 + s * p.rc) / (1 + 1001 * s * p.rc))
    np.testing.assert_allclose(h_f, -1000 / (1 + 1001 * s * p.rc))


def test_minus_20db_per_decade_between_pole_and_zero():
    p = IntegratorParams(1000, 1000, 1e5, 200e-12)
    fp, fz = p.pole_rad_s / 2 / math.pi, p.zero_rad_s / 2 / math.pi
    f = np.logspace(math.log10(10 * fp), math.log10(0.1 * fz), 50)
    h_i, _ = dda_integrator_response(p, f)
    slope = np.polyfit(np.log10(f), 20 * np.log10(np.abs(h_i)), 1)[0]
    assert slope == pytest.approx(-20, abs=0.5)


def test_invalid_params():
    with pytest.raises(ValueError):
        IntegratorParams(100, 1000, 1, 1)
    with pytest.raises(ValueError):
        LoopParams(G=1.5)
    with pytest.raises(ValueError):
        dda_integrator_response(IntegratorParams(1, 1, 1, 1), -1.0)


def test_unit_skew_form_at_dc():
    for N in (1, 2, 5):
        stf, ntf = stf_ntf_eq3(LoopParams(0.5, N), 1 + 0j)
        assert ntf == 0
        assert stf == pytest.approx(N)


def _unit_skew_mp(G, N, nu):
    mpmath.mp.dps = 40
    z = mpmath.expjpi(2 * mpmath.mpf(nu))
    zi = 1 / z
    G, N = mpmath.mpf(G), mpmath.mpf(N)
    d = (G * G - G + N) * zi ** 2 + (G - 2 * N) * zi + N
    return complex(G * G * N * zi ** 2 / d), complex(N * (1 - zi) ** 2 / d)


def test_unit_skew_form_against_arbitrary_precision():
    stf, ntf = stf_ntf_eq3(LoopParams(0.5, 1), unit(0.001))
    stf_o, ntf_o = _unit_skew_mp("0.5", 1, "0.001")
    assert abs(stf - stf_o) < 1e-12 * abs(stf_o)
    assert abs(ntf - ntf_o) < 1e-12 * abs(ntf_o)


def test_unit_skew_form_rejects_skew_and_off_circle():
    with pytest.raises(ValueError):
        stf_ntf_eq3(LoopParams(0.5, 1, 2), 1 + 0j)
    with pytest.raises(ValueError):
        stf_ntf_eq3(LoopParams(), 0.5 + 0j)


def test_resonance_reported():
    # with G = 1, N = 1 the denominator is z^-2 - z^-1 + 1, zero at z = e^{j pi/3}
    with pytest.raises(ResonanceError):
        stf_ntf_eq3(LoopParams(1.0, 1.0), unit(1 / 6))


def test_low_frequency_form_values():
    stf, ntf = stf_ntf_eq4(LoopParams(0.5, 5, 2), 1 + 0j)
    assert stf == pytest.approx(10)
    assert ntf == 0


def test_low_frequency_form_approximates_unit_skew_form():
    lp = LoopParams(0.5, 1)
    for nu in np.logspace(-6, -3, 20):
        a = abs(stf_ntf_eq4(lp, unit(nu))[1])
        b = abs(stf_ntf_eq3(lp, unit(nu))[1])
        assert a == pytest.approx(b, rel=0.01)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(1, 10), st.floats(1e-5, 0.49))
def test_general_form_matches_unit_skew_form(G, N, nu):
    lp = LoopParams(G, N)
    try:
        ref = stf_ntf_eq3(lp, unit(nu))
    except ResonanceError:
        return
    got = stf_ntf(lp, unit(nu))
    assert got[0] == pytest.approx(ref[0], rel=1e-9, abs=1e-12)
    assert got[1] == pytest.approx(ref[1], rel=1e-9, abs=1e-12)


def test_general_form_tends_to_low_frequency_form():
    lp = LoopParams(0.5, 3, 4)
    nu = 1e-6
    g, a = stf_ntf(lp, unit(nu)), stf_ntf_eq4(lp, unit(nu))
    assert abs(g[0]) == pytest.approx(abs(a[0]), rel=1e-3)
    assert abs(g[1]) == pytest.approx(abs(a[1]), rel=1e-3)


@pytest.mark.parametrize("N", [1, 2])
def test_ntf_monotone_high_pass(N):
    lp = LoopParams(0.5, N)
    mags = [abs(stf_ntf_eq3(lp, unit(nu))[1]) for nu in np.linspace(1e-5, 0.05, 400)]
    assert np.all(np.diff(mags) >= 0)


def test_ntf_peaks_below_fs_over_20_for_large_n():
    # the loop poles move towards z = 1 as N grows, so the NTF develops a
    # resonance peak that enters (0, fs/20] for N >= 4
    nus = np.linspace(1e-5, 0.05, 2000)
    mags = np.array([abs(stf_ntf_eq3(LoopParams(0.5, 4), unit(v))[1]) for v in nus])
    assert np.any(np.diff(mags) < 0)
    assert nus[np.argmax(mags)] == pytest.approx(0.041, abs=0.002)


@pytest.mark.parametrize("N", [1, 3, 7])
def test_n_only_scales_gain(N):
    lp = LoopParams(0.5, N)
    stf0, ntf0 = stf_ntf(lp, 1 + 0j)
    assert ntf0 == 0 and stf0 == pytest.approx(N)
    # STF/NTF = G^2 z^-2/(1 - z^-1)^2 for every N
    for nu in (1e-4, 1e-3, 0.01, 0.2):
        stf, ntf = stf_ntf(lp, unit(nu))
        zi = 1 / unit(nu)
        assert stf / ntf == pytest.approx(0.25 * zi ** 2 / (1 - zi) ** 2, rel=1e-10)


def test_sqnr_osr_doubling():
    lp = LoopParams()
    d = sqnr_predict(lp, 1000, -3) - sqnr_predict(lp, 500, -3)
    assert d == pytest.approx(15.05, abs=0.2)


def test_sqnr_independent_of_n_and_linear_in_amplitude():
    a = sqnr_predict(LoopParams(0.5, 1), 500, -3)
    b = sqnr_predict(LoopParams(0.5, 4), 500, -3)
    # N cancels to first order; the residue comes from the in-band shape of D
    assert a == pytest.approx(b, abs=0.01)
    assert sqnr_predict(LoopParams(), 500, -13) == pytest.approx(a - 10, abs=1e-9)
    with pytest.raises(ValueError):
        sqnr_predict(LoopParams(), 4, -3)


def test_sqnr_reference_value():
    # independent closed form: noise = (1/3)*2 * int_0^{1/1000} |NTF|^2 with
    # |NTF| ~ |2 sin(pi nu)|^2/G^2 at low frequency
    nu_b = 1 / 1000
    noise = 2 / 3 * 16 / 0.5 ** 4 * (math.pi ** 4 * nu_b ** 5 / 5)
    approx = 10 * math.log10(10 ** (-3 / 10) / 2 / noise)
    assert sqnr_predict(LoopParams(), 500, -3) == pytest.approx(approx, abs=0.5)


def test_response_csv(tmp_path):
    p = IntegratorParams(1000, 1000, 1e5, 20e-12)
    f = np.logspace(0, 5, 11)
    h_i, _ = dda_integrator_response(p, f)
    path = tmp_path / "r.csv"
    write_response_csv(path, f, h_i)
    lines = path.read_text().splitlines()
    assert lines[0] == "freq_hz,mag_db,phase_deg"
    assert float(lines[1].split(",")[1]) == pytest.approx(20 * math.log10(abs(h_i[0])))
