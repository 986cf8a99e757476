import cmath

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hmwphase.oracle import (
    CONVERGENCE_TOL,
    ComplexFringeAmplitude,
    brute_force_reduced,
    brute_force_signal,
    check_convergence,
    complex_amplitude,
)
from hmwphase.physics import FieldConfiguration, QuadratureError
from hmwphase.reduced import ReducedPoint, reduce_amplitudes, wrap


def test_oracle_converged_at_largest_grid_point(baseline):
    dm, da = check_convergence(FieldConfiguration.with_policy(800.0, 12.0), baseline)
    assert dm < CONVERGENCE_TOL and da < CONVERGENCE_TOL


def test_oracle_flags_unconverged_quadrature(baseline):
    with pytest.raises(QuadratureError):
        check_convergence(FieldConfiguration.with_policy(800.0, 12.0), baseline, tol=1e-16)


def test_signal_matches_raw_amplitude(baseline):
    cfg = FieldConfiguration.with_policy(-400.0, 8.0)
    z = complex_amplitude(cfg, baseline)
    s = brute_force_signal(cfg, baseline)
    assert s.value == pytest.approx(z, abs=1e-15)
    assert s.modulus >= 0


@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1.0))
def test_complex_fringe_amplitude_round_trip(z):
    a = ComplexFringeAmplitude.from_complex(z)
    assert a.value == pytest.approx(z, rel=1e-12, abs=1e-15)


def test_complex_fringe_amplitude_rejects_negative_modulus():
    with pytest.raises(ValueError):
        ComplexFringeAmplitude(-0.1, 0.0)


def _amps(phases, mods=None):
    labels = ("0,0", "V,0", "V,I", "0,I", "-V,I", "-V,0")
    mods = mods or [1.0] * len(phases)
    return {k: cmath.rect(m, p) for k, m, p in zip(labels, mods, phases)}


def test_reduce_amplitudes_definitions():
    amps = _amps([0.1, 0.3, 0.75, 0.2, -0.1, 0.05], [0.9, 0.8, 0.6, 0.7, 0.65, 0.85])
    p = reduce_amplitudes(amps, 800.0, 12.0)
    assert p.V_E == pytest.approx(0.8 / 0.9)
    assert p.V_B == pytest.approx(0.7 / 0.9)
    assert p.phi_E == pytest.approx(0.2)
    assert p.phi_B == pytest.approx(0.1)
    assert p.phi_EB == pytest.approx(0.75 - 0.3 - 0.2 + 0.1)
    assert p.V_EB == pytest.approx(0.6 * 0.9 / (0.8 * 0.7))
    assert p.twin is not None and p.twin.voltage == -800.0
    assert p.twin.phi_EB == pytest.approx(-0.1 - 0.05 - 0.2 + 0.1)


def test_reduce_amplitudes_four_configs_has_no_twin():
    amps = _amps([0.0, 0.1, 0.2, 0.3])
    assert reduce_amplitudes(amps, 400.0, 4.0).twin is None
    with pytest.raises(KeyError):
        reduce_amplitudes({"0,0": 1.0}, 400.0, 4.0)


@given(st.floats(-50, 50))
def test_wrap_range(x):
    w = wrap(x)
    assert -np.pi <= w <= np.pi
    assert np.isclose(np.exp(1j * w), np.exp(1j * x))


def test_brute_force_reduced_defect_free_hmw(clean):
    p = brute_force_reduced(800.0, 12.0, clean)
    assert p.phi_EB == pytest.approx(clean.alpha_hmw * 800 * 12, abs=1e-12)
    assert isinstance(p, ReducedPoint)
