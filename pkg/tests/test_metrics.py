import math

import pytest
from hypothesis import given, settings, strategies as st

from ddadsm.loopsim import ModulatorConfig
from ddadsm.linmodel import LoopParams, sqnr_predict
from ddadsm.metrics import (ConverterRecord, DrCurve, DrPoint, comparison_table, dr_sweep,
                            dynamic_range_db, fom_schreier, fom_walden, survey_records,
                            table_csv, table_text)
from ddadsm.sigproc import AnalysisSettings


def test_fom_walden_examples():
    assert fom_walden(99.2e-6, 13.1, 2e3) == pytest.approx(5.6, abs=0.05)
    assert fom_walden(940e-6, 13.8, 2e3) == pytest.approx(32.9, abs=0.1)
    assert fom_walden(1.0, 0.0, 1.0) == pytest.approx(1e12)


def test_fom_schreier_examples():
    assert round(fom_schreier(83, 256, 13.3e-6)) == 156
    assert fom_schreier(109, 1e3, 99.2e-6) == pytest.approx(179.0, abs=0.05)
    assert fom_schreier(0, 1, 1) == 0
    assert round(fom_schreier(68, 2e3, 96e-6)) == 141


def test_fom_input_checks():
    with pytest.raises(ValueError):
        fom_walden(0, 10, 1)
    with pytest.raises(ValueError):
        fom_schreier(80, 1e3, 0)


@settings(max_examples=50)
@given(st.floats(1e-6, 1), st.floats(0, 24), st.floats(1, 1e7), st.floats(0.01, 5))
def test_fom_monotonicity(p, enob, nyq, d):
    assert fom_walden(p, enob + d, nyq) < fom_walden(p, enob, nyq)
    assert fom_walden(p, enob, nyq * (1 + d)) < fom_walden(p, enob, nyq)
    assert fom_schreier(enob * 6 + d, nyq, p) > fom_schreier(enob * 6, nyq, p)
    assert fom_schreier(80, nyq * (1 + d), p) > fom_schreier(80, nyq, p)


def test_dynamic_range():
    assert round(dynamic_range_db(300e-3, 0.001e-3), 2) == 109.54


def test_survey_fixture_reproduces_printed_foms():
    for r in survey_records():
        if r.fom_s is not None:
            assert r.fom_s == pytest.approx(r.printed_fom_s, abs=1.0), r.label
        if r.fom_w is None:
            continue
        if r.label.startswith("Garcia"):
            # the printed 14.6 pJ does not follow from the printed inputs (11.7 pJ)
            assert r.fom_w == pytest.approx(11.72, abs=0.01)
        elif r.printed_fom_w >= 1000:
            # printed to three significant digits
            assert r.fom_w == pytest.approx(r.printed_fom_w, rel=0.005), r.label
        else:
            assert r.fom_w == pytest.approx(r.printed_fom_w, abs=0.2), r.label


def test_comparison_table_order_and_blanks():
    rows = comparison_table(survey_records())
    assert len(rows) == 9
    fs = [r["fom_s_db"] for r in rows if r["fom_s_db"] is not None]
    assert fs == sorted(fs, reverse=True)
    assert rows[-1]["label"].startswith("Xu") and rows[-1]["fom_s_db"] is None
    steiner = next(r for r in rows if r["label"].startswith("Steiner"))
    assert steiner["fom_w_pj"] is None
    csv_text = table_csv(rows)
    assert csv_text.splitlines()[0].startswith("label,power_w")
    assert ",," in next(l for l in csv_text.splitlines() if l.startswith("Steiner"))
    assert len(table_text(rows).splitlines()) == 10


def test_comparison_table_ties_and_single():
    a = ConverterRecord("b", 1e-3, 1e3, 2e3, 10, 80)
    b = ConverterRecord("a", 1e-3, 1e3, 2e3, 12, 80)
    assert [r["label"] for r in comparison_table([a, b])] == ["a", "b"]
    assert len(comparison_table([a])) == 1
    with pytest.raises(ValueError):
        comparison_table([])


def test_drcurve_rules():
    pts = [DrPoint(-100, -2, True, 0), DrPoint(-80, 15, True, 0), DrPoint(-40, 55, True, 0),
           DrPoint(-3, 92, True, 0), DrPoint(0, 88, True, 0), DrPoint(3, 10, True, 50)]
    c = DrCurve(pts, 0.1)
    assert c.peak_snr_db == 92 and c.peak_amp_dbfs == -3
    assert c.knee_amp_dbfs == 0 and c.min_amp_dbfs == -80
    assert c.dr_db == 80
    assert c.to_csv().splitlines()[0] == "amp_dbfs,snr_db"
    with pytest.raises(ValueError):
        DrCurve(list(reversed(pts)), 0.1)


def test_drcurve_excludes_unresolved():
    pts = [DrPoint(-90, 50, False, 0), DrPoint(-60, 20, True, 0), DrPoint(-20, 60, True, 0)]
    c = DrCurve(pts, 0.1)
    assert c.min_amp_dbfs == -60


@pytest.fixture(scope="module")
def ideal_sweep():
    cfg = ModulatorConfig(duration_samples=1 << 18)
    amps = [-60.0, -50.0, -40.0, -30.0, -20.0, -10.0, -6.0, -3.0, -1.5, 0.0, 2.0]
    return dr_sweep(cfg, amps, AnalysisSettings(n_fft=1 << 16))


def test_sweep_quantization_limited_slope(ideal_sweep):
    pts = [p for p in ideal_sweep.points if -60 <= p.amp_dbfs <= -20]
    s = [(b.snr_db - a.snr_db) / (b.amp_dbfs - a.amp_dbfs) for a, b in zip(pts, pts[1:])]
    assert sum(s) / len(s) == pytest.approx(1.0, abs=0.3)
    lin = [sqnr_predict(LoopParams(), 500, p.amp_dbfs) for p in pts]
    assert (lin[-1] - lin[0]) / 40 == pytest.approx(1.0, abs=1e-9)


def test_sweep_peak_near_minus_3_dbfs(ideal_sweep):
    assert abs(ideal_sweep.peak_amp_dbfs - (-3.0)) <= 3.0
    assert ideal_sweep.points[-1].overloads > 0


def test_sweep_parallel_matches_serial():
    cfg = ModulatorConfig(duration_samples=1 << 15)
    amps = [-40.0, -20.0, -6.0]
    a = dr_sweep(cfg, amps, AnalysisSettings(n_fft=1 << 15), workers=1)
    b = dr_sweep(cfg, amps, AnalysisSettings(n_fft=1 << 15), workers=2)
    assert [p.snr_db for p in a.points] == [p.snr_db for p in b.points]
    with pytest.raises(ValueError):
        dr_sweep(cfg, [-3.0, -6.0], AnalysisSettings())
