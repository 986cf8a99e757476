"""First-order analytic model of the stray phases and visibilities.

The summed fringe amplitude of the four sublevel pairs is written as
``D cos(...) + N sin(...)`` and the numerator/denominator are expanded in
moments of the spatial phase dispersions.  Terms that need both fields are
split by their parity under voltage reversal and current reversal; the
index order in names such as ``D_mp`` is (voltage, current) with ``p`` for
even and ``m`` for odd.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .physics import (
    PAIR_LABELS,
    FieldConfiguration,
    ac_phase,
    hmw_linear_zeeman,
    hmw_phase,
    j_coefficients,
    mean_stark_phase,
    moments,
    velocity_phase,
    velocity_visibility,
    zeeman_phase,
)

#: |D0| below which the first-order expansion is meaningless.
COLLAPSE_D0 = 0.05

PARITY_KEYS = ("pp", "mp", "pm", "mm")


class CollapseWarning(UserWarning):
    """The Zeeman denominator D0 is too close to zero for first order."""


@dataclass(frozen=True)
class PairState:
    """Mean phases and moments of one pair in one configuration."""

    m: int
    phi_z: float
    cos_z: float
    sin_z: float
    phi_ac: float
    mom: object


@dataclass(frozen=True)
class DNTerms:
    """Numerator/denominator decomposition, summed over the four pairs."""

    D0: float
    DZ: float
    NZ: float
    D: dict
    N: dict
    D0_B0: float
    D_AC_B0: float
    dS2: float
    dS3: float
    D_total: float
    N_total: float
    collapsed: bool

    @property
    def D_pm_sum(self):
        return sum(self.D.values())

    @property
    def N_pm_sum(self):
        return sum(self.N.values())

    @property
    def theta(self):
        """First-order stray phase N/D0."""
        return self.N_total / self.D0

    @property
    def theta_exact(self):
        return math.atan2(self.N_total, self.D_total)


@dataclass(frozen=True)
class ModelPrediction:
    """Predicted relative visibility (to V0) and fringe phase of one configuration."""

    visibility: float
    phase: float
    valid: bool
    theta_first: float
    theta_exact: float

    @property
    def trust(self):
        """Difference between the first-order and exact stray phase."""
        return self.theta_exact - self.theta_first


def _pair_states(voltage, current, compensator, scenario, ac_sign=1.0):
    cal = scenario.zeeman
    J1, J2, J3 = j_coefficients(current, compensator, cal)
    J1h = hmw_linear_zeeman(current, cal)
    states = []
    for m in PAIR_LABELS:
        phi = zeeman_phase(m, J1, J2, J3)
        if scenario.zeeman_velocity_average:
            z = velocity_visibility(phi, 2, scenario.beam)
            cz, sz = z.real, z.imag
        else:
            cz, sz = math.cos(phi), math.sin(phi)
        phi_ac = ac_sign * ac_phase(m, voltage, current, scenario)
        states.append(PairState(m, phi, cz, sz, phi_ac, moments(scenario.profiles, voltage, J1h, m)))
    return states


def _field_terms(states):
    """Formula values of D_pp + D_mm and N_pp + N_mm (plus contact parts)."""
    Dpp = Dmm = Npp = Nmm = 0.0
    for s in states:
        q, a, c, si = s.mom, s.phi_ac, s.cos_z, s.sin_z
        Dpp += (q.S2Z / 2 + q.dSZ) * si
        Dmm += (-1 + (q.dS2 + q.ZZ) / 2) * a * si + (
            q.Z3 / 6 + q.dSZ + (q.S2Z + q.d2Z) / 2
        ) * a * c
        Npp += q.SZ * si + q.SZ2 / 2 * c
        Nmm += (q.SZ + q.dZ) * a * c - (q.dS3 / 6 + (q.SZ2 + q.dZ2) / 2) * a * si
    return Dpp + Dmm, Npp + Nmm


def _project(values):
    """Parity projections from values at (+V,+I), (-V,+I), (+V,-I), (-V,-I)."""
    a, b, c, d = values
    return {
        "pp": ((a + d) + (b + c)) / 4,
        "mp": ((a - d) + (c - b)) / 4,
        "pm": ((a - d) + (b - c)) / 4,
        "mm": ((a + d) - (b + c)) / 4,
    }


def dn_terms(cfg: FieldConfiguration, scenario) -> DNTerms:
    """D/N decomposition for one configuration.

    The field-dependent sum is evaluated with the voltage and the AC sign
    reversed in turn and projected on the four parity classes; the Zeeman
    mean phases are held at the configuration's own value so that the
    current parity is carried by the AC phase.
    """
    V, I, IC = cfg.voltage, cfg.current, cfg.compensator
    variants = []
    for sv, si in ((1, 1), (-1, 1), (1, -1), (-1, -1)):
        st = _pair_states(V * sv, I, IC, scenario, ac_sign=si)
        variants.append(_field_terms(st))
    D = _project([v[0] for v in variants])
    N = _project([v[1] for v in variants])

    states = _pair_states(V, I, IC, scenario)
    D0 = sum(s.cos_z for s in states)
    DZ = sum(
        -s.mom.ZZ / 2 * s.cos_z + (s.mom.Z3 + 3 * s.mom.d2Z) / 6 * s.sin_z for s in states
    )
    NZ = sum(s.mom.dZ * s.sin_z + s.mom.dZ2 * s.cos_z for s in states)
    dS2 = states[0].mom.dS2
    dS3 = states[0].mom.dS3

    b0 = _pair_states(V, 0.0, 0.0, scenario)
    D0_B0 = sum(s.cos_z for s in b0)
    D_AC_B0 = -sum(s.phi_ac * s.sin_z for s in b0)

    D_total = (1 - dS2 / 2) * D0 + DZ + sum(D.values())
    N_total = dS3 / 6 * D0 + NZ + sum(N.values())
    collapsed = abs(D0) < COLLAPSE_D0
    if collapsed:
        warnings.warn(f"D0 = {D0:.3g} at I = {I:g} A: first-order model unreliable", CollapseWarning)
    return DNTerms(D0, DZ, NZ, D, N, D0_B0, D_AC_B0, dS2, dS3, D_total, N_total, collapsed)


def _stark_factor(voltage, scenario):
    phi = mean_stark_phase(voltage, scenario)
    return velocity_phase(phi, 1, scenario.beam)


def predict(cfg: FieldConfiguration, scenario) -> ModelPrediction:
    """Relative visibility ``D/4`` and fringe phase of one configuration."""
    t = dn_terms(cfg, scenario)
    mod, phi_s = _stark_factor(cfg.voltage, scenario)
    vis = mod * t.D_total / 4
    phase = (
        phi_s
        + hmw_phase(cfg.voltage, cfg.current, scenario.alpha_hmw)
        - t.dS3 / 6
        - (t.NZ + t.N_pm_sum) / t.D0
    )
    valid = (
        not t.collapsed
        and abs(t.N_total / t.D0) <= 0.3
        and abs(t.D_total - t.D0) <= 0.5 * abs(t.D0)
    )
    return ModelPrediction(vis, phase, valid, t.theta, t.theta_exact)


@dataclass(frozen=True)
class PredictedReduced:
    """Model values of the six reduced quantities at one (V, I)."""

    voltage: float
    current: float
    V_E: float
    phi_E: float
    V_B: float
    phi_B: float
    V_EB: float
    phi_EB: float
    valid: bool


def predict_reduced(voltage, current, scenario) -> PredictedReduced:
    """Reduced quantities from the first-order closed forms.

    ``V_EB = 1 + D+-/D0 - D_AC,B0/D0,B0`` and ``phi_EB = phi_HMW - N+-/D0``;
    ``V_E`` includes the AC asymmetry ``D_AC,B0/D0,B0``.
    """
    c00 = FieldConfiguration.with_policy(0.0, 0.0)
    cV0 = FieldConfiguration.with_policy(voltage, 0.0)
    c0I = FieldConfiguration.with_policy(0.0, current)
    cVI = FieldConfiguration.with_policy(voltage, current)
    p00, pV0, p0I = predict(c00, scenario), predict(cV0, scenario), predict(c0I, scenario)
    tVI = dn_terms(cVI, scenario)
    tV0 = dn_terms(cV0, scenario)
    mod, _ = _stark_factor(voltage, scenario)
    m = moments(scenario.profiles, voltage, 0.0, 0)
    V_E = mod * (1 - m.SS / 2 - m.dS + tV0.D_AC_B0 / tV0.D0_B0)
    phi_E = pV0.phase - p00.phase
    V_B = p0I.visibility / p00.visibility
    phi_B = p0I.phase - p00.phase
    V_EB = 1 + tVI.D_pm_sum / tVI.D0 - tVI.D_AC_B0 / tVI.D0_B0
    phi_EB = hmw_phase(voltage, current, scenario.alpha_hmw) - tVI.N_pm_sum / tVI.D0
    return PredictedReduced(
        voltage, current, V_E, phi_E, V_B, phi_B, V_EB, phi_EB, not tVI.collapsed
    )


PARITY_COMBINATIONS = (
    "MB_ME_vis",
    "MB_DE_vis",
    "DB_ME_vis",
    "DB_DE_vis",
    "DE_vis",
    "MB_ME_phase",
    "MB_DE_phase",
    "DB_ME_phase",
    "DB_DE_phase",
    "ME_phase",
    "DB_phase",
)


def predict_parity_combination(which, voltage, current, scenario):
    """Closed-form prediction of one parity combination of V'_EB or phi_EB.

    ``*_vis`` combinations refer to the AC-corrected visibility V'_EB,
    ``*_phase`` ones to phi_EB.  ``DE_vis`` is the leading-order AC form
    ``-sum phi_AC sin(phi_Z) / sum cos(phi_Z)`` and ``ME_phase`` is
    ``-sum N_pp / D0`` (the current-even part when contact terms vanish).
    """
    if which not in PARITY_COMBINATIONS:
        raise ValueError(f"unknown parity combination {which!r}")
    cfg = FieldConfiguration.with_policy(voltage, current)
    t = dn_terms(cfg, scenario)
    phi_hmw = hmw_phase(voltage, current, scenario.alpha_hmw)
    if which == "MB_ME_vis":
        return 1 + t.D["pp"] / t.D0
    if which == "MB_DE_vis":
        return t.D["mp"] / t.D0
    if which == "DB_ME_vis":
        return t.D["pm"] / t.D0
    if which == "DB_DE_vis":
        return t.D["mm"] / t.D0
    if which == "DE_vis":
        states = _pair_states(voltage, current, cfg.compensator, scenario)
        return -sum(s.phi_ac * s.sin_z for s in states) / sum(s.cos_z for s in states)
    if which == "MB_ME_phase" or which == "ME_phase":
        return -t.N["pp"] / t.D0
    if which == "MB_DE_phase":
        return -t.N["mp"] / t.D0
    if which == "DB_ME_phase":
        return -t.N["pm"] / t.D0
    # DB_DE_phase and DB_phase coincide at first order when N_pm = 0
    if which == "DB_DE_phase":
        return phi_hmw - t.N["mm"] / t.D0
    return phi_hmw - (t.N["pm"] + t.N["mm"]) / t.D0


def stray_phase_hmw_odd(voltage, current, scenario):
    """Current-odd stray part of phi_EB, ``(N_pm + N_mm)/D0``.

    Evaluated through the model at +I and -I so that the asymmetry of the
    Zeeman phases (offset I0) is included; it reduces to ``N_mm/D0`` when the
    Zeeman phases are even in the current.
    """
    plus = predict_reduced(voltage, abs(current), scenario.replace(alpha_hmw=0.0))
    minus = predict_reduced(voltage, -abs(current), scenario.replace(alpha_hmw=0.0))
    odd = -(plus.phi_EB - minus.phi_EB) / 2
    return odd if current >= 0 else -odd


def zeeman_curve(currents, scenario, policy=True):
    """Zero-dispersion complex relative visibility ``V_B(I)``.

    Uses the pair weights of ``scenario.chi`` and the compensator policy.
    """
    from .physics import compensator_current, pair_weights

    w = pair_weights(scenario.chi)

    def amp(I):
        IC = compensator_current(I) if policy else 0.0
        J = j_coefficients(I, IC, scenario.zeeman)
        total = 0j
        for m in PAIR_LABELS:
            phi = zeeman_phase(m, *J)
            if scenario.zeeman_velocity_average:
                e = velocity_visibility(phi, 2, scenario.beam)
            else:
                e = complex(np.exp(1j * phi))
            wa, wb = w[m]
            total += wa * e + wb * e.conjugate()
        return total

    ref = amp(0.0)
    return np.array([amp(I) / ref for I in np.atleast_1d(currents)])
