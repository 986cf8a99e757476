import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hmwphase.physics import (
    PAIR_LABELS,
    RUN_LABELS,
    BeamModel,
    DispersionProfiles,
    FieldConfiguration,
    NoiseModel,
    Scenario,
    StarkCalibration,
    ZeemanCalibration,
    ac_phase,
    capacitor_voltages,
    compensator_current,
    j_coefficients,
    mean_stark_phase,
    moments,
    pair_weights,
    paper_profiles,
    run_configurations,
    simpson_grid,
    velocity_grid,
    velocity_phase,
    velocity_visibility,
    zeeman_coefficients,
    zeeman_phase,
)


def breit_rabi_series(m):
    x = sp.symbols("x")
    s = sp.series(sp.sqrt(1 + m * x + x**2), x, 0, 4).removeO()
    return [s.coeff(x, k) for k in (1, 2, 3)]


@pytest.mark.parametrize("m", PAIR_LABELS)
def test_zeeman_coefficients_follow_breit_rabi(m):
    a1, a2, a3 = (float(c) for c in breit_rabi_series(m))
    c1, c2, c3 = zeeman_coefficients(m)
    assert c1 == pytest.approx(a1, abs=1e-12)
    # quadratic term normalized so the m = 0 pair carries J2 itself
    assert c2 == pytest.approx(2 * a2, abs=1e-12)
    assert c3 == pytest.approx(a3, abs=1e-12)


def test_zeeman_coefficients_reject_unknown_pair():
    with pytest.raises(ValueError):
        zeeman_coefficients(3)


def test_zero_current_visibility_factor():
    J0 = ZeemanCalibration().J0
    J = j_coefficients(0.0, 0.0, ZeemanCalibration())
    assert J[0] == pytest.approx(J0, abs=1e-15)
    w = pair_weights(0.0)
    total = 0.0
    for m in PAIR_LABELS:
        e = complex(np.exp(1j * zeeman_phase(m, *J)))
        total += w[m][0] * e + w[m][1] * e.conjugate()
    assert total.imag == pytest.approx(0.0, abs=1e-15)
    assert total.real == pytest.approx((1 + math.cos(J0) + 2 * math.cos(J0 / 2)) / 4, abs=1e-12)
    assert total.real == pytest.approx(0.932, abs=0.002)


@given(st.floats(-0.99, 0.99))
def test_pair_weights_normalized(chi):
    w = pair_weights(chi)
    assert sum(a + b for a, b in w.values()) == pytest.approx(1.0, abs=1e-12)
    assert w[2][0] == w[2][1]


def test_pair_weights_reject_chi_out_of_range():
    with pytest.raises(ValueError):
        pair_weights(1.0)


@given(st.floats(-30, 30))
def test_compensator_policy(current):
    ic = compensator_current(current)
    assert 0 <= ic <= 5
    assert ic == pytest.approx(min(abs(current) / 3, 5))


def test_run_configurations_order():
    cfgs = run_configurations(800.0, -12.0, 6)
    assert [(c.voltage, c.current) for c in cfgs] == [
        (0, 0), (800, 0), (800, -12), (0, -12), (-800, -12), (-800, 0)
    ]
    assert len(run_configurations(800.0, 12.0, 4)) == 4
    assert RUN_LABELS[:4] == ("0,0", "V,0", "V,I", "0,I")
    with pytest.raises(ValueError):
        run_configurations(800.0, 12.0, 5)


def test_field_configuration_policy_sets_compensator():
    cfg = FieldConfiguration.with_policy(400.0, -9.0)
    assert cfg.compensator == pytest.approx(3.0)


def test_simpson_grid_integrates_cubic_exactly():
    y, w = simpson_grid(2e-3, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    # mean of y**2 over a uniform interval of height h is h**2 / 12
    assert w @ y**2 == pytest.approx((2e-3) ** 2 / 12, rel=1e-12)
    assert w @ y**3 == pytest.approx(0.0, abs=1e-20)


def test_profiles_are_zero_mean():
    p = paper_profiles()
    assert p.max_mean() < 1e-15
    with pytest.raises(ValueError, match="shape"):
        DispersionProfiles(p.y, p.weights, p.d[:-1], p.g, p.c, p.z)


def test_scenario_rejects_nonzero_mean_profile():
    p = paper_profiles()
    bad = DispersionProfiles(p.y, p.weights, p.d + 0.1, p.g, p.c, p.z)
    with pytest.raises(ValueError, match="zero mean"):
        Scenario(profiles=bad)


@pytest.mark.parametrize("kw", [{"V0": 1.2}, {"S_par": 0.5}, {"n_y": 10}])
def test_beam_model_validation(kw):
    with pytest.raises(ValueError):
        BeamModel(**kw)


def test_noise_and_stark_validation():
    with pytest.raises(ValueError):
        NoiseModel(fano=0.5)
    with pytest.raises(ValueError):
        StarkCalibration(phi_u_per_V2=1e-4, phi_l_per_V2=1e-4)
    with pytest.raises(ValueError):
        Scenario(chi=1.5)


@given(st.floats(-800, 800))
def test_capacitor_voltages_leave_residual(voltage):
    sc = Scenario()
    vu, vl = capacitor_voltages(voltage, sc.stark, sc.stark_residual_per_V2)
    assert (vu + vl) / 2 == pytest.approx(voltage, abs=1e-9)
    assert mean_stark_phase(voltage, sc) == pytest.approx(sc.stark_residual_per_V2 * voltage**2, abs=1e-9)


def test_ac_phase_is_current_odd_and_voltage_odd(baseline):
    for m in PAIR_LABELS:
        a = ac_phase(m, 600.0, 8.0, baseline)
        assert ac_phase(m, -600.0, 8.0, baseline) == pytest.approx(-a)
        assert ac_phase(m, 600.0, -8.0, baseline) == pytest.approx(-a)
    # laboratory field sets the axis at zero current
    assert ac_phase(2, 600.0, 0.0, baseline) == pytest.approx(
        baseline.lab_projection * baseline.ac_coupling * 600.0
    )


def test_velocity_grid_normalized():
    v, p = velocity_grid(1065.0, 9.25, 101)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(v > 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5))
def test_velocity_visibility_bounded(phase):
    z = velocity_visibility(phase, 1, BeamModel())
    assert abs(z) <= 1 + 1e-12


def test_velocity_phase_continuous_and_decaying():
    beam = BeamModel()
    mods, args = zip(*(velocity_phase(p, 1, beam) for p in np.linspace(0, 60, 121)))
    assert mods[0] == 1.0 and args[0] == 0.0
    assert np.all(np.abs(np.diff(args)) < 1.0)
    assert mods[-1] < mods[10]


def test_moments_vanish_without_dispersion():
    m = moments(DispersionProfiles.zero(), 800.0, -3.0, 2)
    assert m.SS == 0 and m.dS == 0 and m.SZ == 0 and m.ZZ == 0
