"""Brute-force reference for the fringe amplitude.

Every sublevel is summed explicitly over the beam height and the velocity
distribution, with no expansion in the dispersions.  Slow, but it is the
ground truth that the analytic model is checked against, including the
collapse region where the model is only flagged.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .physics import (
    PAIR_LABELS,
    FieldConfiguration,
    RUN_LABELS,
    QuadratureError,
    ac_phase,
    hmw_linear_zeeman,
    hmw_phase,
    j_coefficients,
    mean_stark_phase,
    pair_weights,
    run_configurations,
    simpson_grid,
    velocity_grid,
    zeeman_phase,
)
from .reduced import reduce_amplitudes

#: Largest change allowed when both grids are refined.
CONVERGENCE_TOL = 1e-6

N_VELOCITY = 101


@dataclass(frozen=True)
class ComplexFringeAmplitude:
    """Fringe amplitude relative to the base visibility."""

    modulus: float
    argument: float

    def __post_init__(self):
        if not 0 <= self.modulus <= 1 + 1e-12:
            raise ValueError(f"modulus {self.modulus} outside [0, 1]")

    @property
    def value(self):
        return cmath.rect(self.modulus, self.argument)

    @classmethod
    def from_complex(cls, z):
        return cls(min(abs(z), 1.0), cmath.phase(z))


def complex_amplitude(cfg, scenario, n_y=None, n_v=N_VELOCITY):
    """Raw complex amplitude ``sum_sublevels w <exp(i phi)>_{y,v}``."""
    n_y = n_y or len(scenario.profiles.y)
    beam, prof = scenario.beam, scenario.profiles
    if n_y == len(prof.y):
        y, wy = prof.y, prof.weights
        d, g, c, z = prof.d, prof.g, prof.c, prof.z
    else:
        # resample the profiles on a finer Simpson grid
        y, wy = simpson_grid(prof.y[-1] - prof.y[0], n_y)
        d, g, c, z = (np.interp(y, prof.y, p) for p in (prof.d, prof.g, prof.c, prof.z))
    v, pv = velocity_grid(beam.vm, beam.S_par, n_v)
    r = beam.vm / v

    V, I, IC = cfg.voltage, cfg.current, cfg.compensator
    J1, J2, J3 = j_coefficients(I, IC, scenario.zeeman)
    J1h = hmw_linear_zeeman(I, scenario.zeeman)
    phi_s = mean_stark_phase(V, scenario)
    common_y = d + g * V**2 + c * V  # diffraction and Stark dispersion
    common = phi_s * r[:, None] + common_y[None, :] + hmw_phase(V, I, scenario.alpha_hmw)

    weights = pair_weights(scenario.chi)
    total = 0j
    for m in PAIR_LABELS:
        phz = zeeman_phase(m, J1, J2, J3)
        zr = phz * r**2 if scenario.zeeman_velocity_average else np.full_like(r, phz)
        member = zr[:, None] + (m / 2.0) * z[None, :] * J1h + ac_phase(m, V, I, scenario)
        w_first, w_second = weights[m]
        for w, sign in ((w_first, 1.0), (w_second, -1.0)):
            e = np.exp(1j * (common + sign * member))
            total += w * complex(pv @ e @ wy)
    return total


def brute_force_signal(cfg: FieldConfiguration, scenario, n_y=None, n_v=N_VELOCITY):
    """Exact relative fringe amplitude of one configuration.

    The modulus is relative to the base visibility ``V0``; the zero-field
    value with ``J0 != 0`` is therefore below 1.
    """
    n_y = n_y or len(scenario.profiles.y)
    z = complex_amplitude(cfg, scenario, n_y, n_v)
    if not np.isfinite(z.real) or not np.isfinite(z.imag):
        raise QuadratureError("non-finite oracle amplitude")
    return ComplexFringeAmplitude.from_complex(z)


def check_convergence(cfg, scenario, tol=CONVERGENCE_TOL):
    """Refine both grids once and return the changes ``(d_modulus, d_argument)``.

    Raises
    ------
    QuadratureError
        If either change exceeds ``tol``.
    """
    n_y = len(scenario.profiles.y)
    base = complex_amplitude(cfg, scenario, n_y, N_VELOCITY)
    fine = complex_amplitude(cfg, scenario, 2 * n_y - 1, 2 * N_VELOCITY)
    dm = abs(abs(fine) - abs(base))
    da = abs(cmath.phase(fine / base)) if abs(base) > 0 else 0.0
    if dm > tol or da > tol:
        raise QuadratureError(
            f"oracle not converged at {cfg}: d_modulus={dm:.2e}, d_argument={da:.2e}"
        )
    return dm, da


def brute_force_reduced(voltage, current, scenario, n_configs=6):
    """Exact reduced quantities at (V, I) from the oracle amplitudes."""
    amps = {
        label: complex_amplitude(cfg, scenario)
        for label, cfg in zip(RUN_LABELS, run_configurations(voltage, current, n_configs))
    }
    return reduce_amplitudes(amps, voltage, current)


def oracle_zeeman_curve(currents, scenario, policy=True):
    """Complex ``V_B(I)`` relative to the zero-current amplitude."""
    def amp(I):
        cfg = FieldConfiguration.with_policy(0.0, I) if policy else FieldConfiguration(0.0, I)
        return complex_amplitude(cfg, scenario)

    ref = amp(0.0)
    return np.array([amp(float(I)) / ref for I in np.atleast_1d(currents)])
