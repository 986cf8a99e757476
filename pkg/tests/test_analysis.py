import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmwphase.analysis import (
    AnalysisError,
    LargeCorrectionWarning,
    ZeemanPoint,
    calibrated_profiles,
    compensator_only_fit,
    complex_vb,
    corrected_visibility,
    extract_slope,
    fit_visibility_polynomial,
    fit_zeeman_dispersion,
    global_zeeman_fit,
    hmw_series,
    mean_half_difference,
    parity,
    parity_at,
    stray_correction,
)
from hmwphase.model import predict_parity_combination, zeeman_curve
from hmwphase.physics import ZeemanCalibration
from hmwphase.reduced import QUANTITIES, ReducedPoint

finite = st.floats(-1e3, 1e3, allow_nan=False)
SIGNS = ((1, 1), (-1, 1), (1, -1), (-1, -1))


@given(st.tuples(finite, finite, finite, finite))
def test_parity_algebra_reconstructs_values(vals):
    f = dict(zip(SIGNS, vals))
    c = parity(f, 800.0, 12.0)
    for sv, si in SIGNS:
        back = (c["M_B M_E"].value + sv * c["M_B D_E"].value + si * c["D_B M_E"].value
                + sv * si * c["D_B D_E"].value)
        assert back == pytest.approx(f[(sv, si)], abs=1e-12 * (1 + max(map(abs, vals))))
    assert c["M_E"].value + c["D_E"].value == pytest.approx(f[(1, 1)], abs=1e-9)


@given(finite, finite)
def test_mean_half_difference(a, b):
    m, d = mean_half_difference(a, b)
    assert m + d == pytest.approx(a, abs=1e-9) and m - d == pytest.approx(b, abs=1e-9)


def test_parity_propagates_errors_and_needs_all_signs():
    f = {s: (0.0, 1.0) for s in SIGNS}
    c = parity(f, 1.0, 1.0)
    assert c["D_B D_E"].sigma == pytest.approx(0.5)
    assert c["M_E"].sigma == pytest.approx(math.sqrt(0.5))
    with pytest.raises(KeyError):
        parity({(1, 1): 0.0}, 1.0, 1.0)


def test_corrected_visibility():
    assert corrected_visibility(0.9, 0.1) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        corrected_visibility(0.9, 0.6)


def test_stray_correction_modes(baseline):
    phi, corr = stray_correction(0.0, 800.0, 12.0, baseline)
    assert phi == corr != 0
    _, c_nmm = stray_correction(0.0, 800.0, 12.0, baseline, mode="nmm")
    assert abs(c_nmm) <= 3e-3
    with pytest.raises(ValueError):
        stray_correction(0.0, 800.0, 12.0, baseline, mode="x")
    big = baseline.replace(profiles=baseline.profiles.scaled(z=20.0))
    with pytest.warns(LargeCorrectionWarning):
        stray_correction(0.0, 800.0, 12.0, big)


def _exact_points(alpha, voltages=(400.0, 600.0, 800.0), currents=(4.0, 8.0, 12.0), sigma=1e-3):
    pts = []
    for V in voltages:
        for I in currents:
            for si in (1, -1):
                vals = dict(V_E=1.0, phi_E=0.0, V_B=1.0, phi_B=0.0, V_EB=1.0)
                s = {q: sigma for q in QUANTITIES}
                tw = ReducedPoint(-V, si * I, phi_EB=alpha * -V * si * I, sigma=s, **vals)
                pts.append(ReducedPoint(V, si * I, phi_EB=alpha * V * si * I, sigma=s, twin=tw,
                                        twin_cov={q: 0.0 for q in QUANTITIES}, **vals))
    return pts


def test_slope_of_exact_line():
    pts = _exact_points(-1.28e-6)
    s = hmw_series(pts)
    assert len(s.value) == 18
    r = extract_slope(s)
    assert r.alpha == pytest.approx(-1.28e-6, rel=1e-10)
    assert abs(r.beta) < 1e-12 and r.beta_consistent()
    assert r.n_points == 18 and r.dof == 16


def test_slope_cut_and_bootstrap():
    s = hmw_series(_exact_points(2e-6, currents=(4.0, 8.0, 12.0, 16.0)))
    assert extract_slope(s, cut=12.0).n_points == 18
    assert extract_slope(s, cut=12.0, above=True).n_points == 6
    r = extract_slope(s, bootstrap=50, seed=1)
    assert r.bootstrap_sigma is not None
    with pytest.raises(AnalysisError):
        extract_slope(s, cut=1.0)


def test_parity_at_uses_twins():
    pts = _exact_points(1e-6)
    c = parity_at(pts, "phi_EB", 800.0, 8.0)
    assert c["D_B D_E"].value == pytest.approx(1e-6 * 800 * 8)
    assert abs(c["D_B M_E"].value) < 1e-15


def test_hmw_series_needs_pairs():
    pt = _exact_points(1e-6)[0]
    with pytest.raises(AnalysisError):
        hmw_series([pt.with_(twin=None)])


def test_visibility_polynomial_exact():
    V = np.array([-800, -600, -400, -200, 200, 400, 600, 800], dtype=float)
    k = np.array([1.4e-5, 5e-8, 0.0, 6e-14])
    VE = 1 - sum(k[i] * V ** (i + 1) for i in range(4))
    p = fit_visibility_polynomial(V, VE, np.full(8, 1e-3))
    assert np.allclose(p.k, k, rtol=1e-9, atol=1e-20)
    with pytest.raises(AnalysisError):
        fit_visibility_polynomial(V[:4], VE[:4], np.full(4, 1e-3))


def test_calibrated_profiles_reproduce_moments():
    k2, k4 = 5.2e-8, 6.5e-14
    prof = calibrated_profiles(k2, k4, 0.05)
    # V_E ~ 1 - <d g> V^2 - <g^2> V^4 / 2 for zero-mean ramps
    assert prof.weights @ (prof.d * prof.g) == pytest.approx(k2, rel=1e-3)
    assert prof.weights @ prof.g**2 / 2 == pytest.approx(k4, rel=1e-3)
    with pytest.raises(AnalysisError):
        calibrated_profiles(k2, -1.0)


def test_zeeman_dispersion_fit_recovers_spread(baseline):
    rows = [(V, I, predict_parity_combination("ME_phase", V, I, baseline), 1e-4)
            for V in (400.0, 800.0) for I in (4.0, 8.0, 12.0, 16.0)]
    z, zs = fit_zeeman_dispersion(rows, baseline)
    assert z == pytest.approx(0.07, abs=1e-4)
    assert zs > 0


def test_complex_vb_matches_model_curve(clean):
    I = np.array([0.0, 3.0, 9.0, 18.0, 23.0])
    from hmwphase.physics import compensator_current

    vb = complex_vb(I, [compensator_current(i) for i in I], clean.zeeman, 0.0)
    assert np.allclose(vb, zeeman_curve(I, clean), atol=1e-12)
    assert isinstance(complex_vb(1.0, 0.0, clean.zeeman, 0.0), complex)


def _zeeman_points(cal, chi=0.0):
    pts = []
    for s, (Is, ICs) in enumerate([
        (np.linspace(-12, 12, 9), np.zeros(9)),
        (np.linspace(1, 23, 9), np.linspace(1, 23, 9) / 3),
        (np.zeros(8), np.linspace(-1.5, 1.5, 8)),
        (np.linspace(-20, -2, 9), np.full(9, 2.0)),
    ]):
        for i, ic in zip(Is, ICs):
            z = complex_vb(float(i), float(ic), cal, chi)
            pts.append(ZeemanPoint(f"s{s}", float(i), float(ic), z.real, z.imag, 0.01))
    return pts


def test_global_zeeman_fit_exact_data():
    truth = ZeemanCalibration()
    start = ZeemanCalibration(J0=-0.55, I0=0.25, A_J1=-0.42, A_J2=-650e-5, A_J3=-170e-6, I0C=0.03, A_J1C=1.40)
    fit = global_zeeman_fit(_zeeman_points(truth), guess=start)
    for k, s in fit.sigma.items():
        assert getattr(fit.calibration, k) == pytest.approx(getattr(truth, k), abs=1e-6)
        assert s > 0
    assert fit.chi2 < 1e-10
    assert all(abs(c) < 1e-6 for c in fit.chi.values())


def test_compensator_only_fit():
    truth = ZeemanCalibration()
    fit = compensator_only_fit(_zeeman_points(truth))
    assert fit.calibration.A_J1C == pytest.approx(truth.A_J1C, abs=1e-6)
    with pytest.raises(AnalysisError):
        compensator_only_fit(_zeeman_points(truth)[:5])
