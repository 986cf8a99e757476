"""Domain types and elementary phase formulas for the lithium interferometer.

Everything here is a pure function of immutable inputs.  Phases are in
radians, voltages in volts, currents in amperes, velocities in m/s.

Sublevel bookkeeping
--------------------
The eight ground-state sublevels of 7Li form four pairs with opposite
Zeeman shifts.  A pair is labelled by ``m`` in (-1, 0, 1, 2): pairs with
``|m| <= 1`` are ((F=2, m), (F=1, m)) and ``m = 2`` is ((2, +2), (2, -2)).
The first member always carries ``+phi_Z`` and the AC phase ``+phi_AC``,
the second one the opposite values.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import constants
from scipy.special import roots_legendre

PAIR_LABELS = (-1, 0, 1, 2)

#: HMW coil limit for the compensator current, A.
COMPENSATOR_MAX_CURRENT = 5.0

#: Largest pair-sum phase for which the first-order model is trusted.
ZERO_MEAN_TOL = 1e-12


class QuadratureError(RuntimeError):
    """A quadrature did not converge under grid refinement."""


# ---------------------------------------------------------------------------
# Field configurations


def compensator_current(current):
    """Compensator current used with HMW-coil current ``current``.

    The linear Zeeman phase is best compensated near ``|I|/3``; the coil
    cannot run above 5 A.
    """
    return min(abs(current) / 3.0, COMPENSATOR_MAX_CURRENT)


def config_label(voltage, current):
    """Label such as ``"V,I"`` or ``"-V,0"`` from the sign pattern."""
    if voltage > 0:
        v = "V"
    elif voltage < 0:
        v = "-V"
    else:
        v = "0"
    return f"{v},{'I' if current != 0 else '0'}"


@dataclass(frozen=True)
class FieldConfiguration:
    """One (V, I) field configuration applied during part of a fringe scan."""

    voltage: float
    current: float
    compensator: float = 0.0

    def __post_init__(self):
        if self.compensator < 0:
            raise ValueError("compensator current must be >= 0")
        if self.current == 0 and self.compensator != 0:
            raise ValueError("compensator current must be 0 when I = 0")

    @classmethod
    def with_policy(cls, voltage, current):
        """Configuration whose compensator follows ``compensator_current``."""
        return cls(float(voltage), float(current), compensator_current(current))

    @property
    def label(self):
        return config_label(self.voltage, self.current)


#: Role of each configuration of a run, independent of the signs of V and I.
RUN_LABELS = ("0,0", "V,0", "V,I", "0,I", "-V,I", "-V,0")


def run_configurations(voltage, current, n_configs=6):
    """The 4 or 6 interleaved configurations of a run at nominal (V, I).

    Order is (0,0), (V,0), (V,I), (0,I)[, (-V,I), (-V,0)], matching
    ``RUN_LABELS``.
    """
    if n_configs not in (4, 6):
        raise ValueError("n_configs must be 4 or 6")
    pairs = [(0.0, 0.0), (voltage, 0.0), (voltage, current), (0.0, current)]
    if n_configs == 6:
        pairs += [(-voltage, current), (-voltage, 0.0)]
    return tuple(FieldConfiguration.with_policy(v, i) for v, i in pairs)


# ---------------------------------------------------------------------------
# Calibrations


@dataclass(frozen=True)
class ZeemanCalibration:
    """Parameters of the J-model of the Zeeman phases.

    ``J1 = A_J1 |I - I0| + A_J1C |I_C - I0C| + J0 - A_J1 |I0| - A_J1C |I0C|``,
    ``J2 = A_J2 I**2`` and ``J3 = A_J3 |I|**3``.
    """

    J0: float = -0.61
    I0: float = 0.31
    A_J1: float = -0.430
    A_J2: float = -662e-5
    A_J3: float = -180e-6
    I0C: float = 22e-3
    A_J1C: float = 1.43

    @property
    def J0_IC(self):
        return self.J0 - self.A_J1 * abs(self.I0) - self.A_J1C * abs(self.I0C)

    def as_array(self):
        return np.array([getattr(self, f.name) for f in dataclasses.fields(self)])


PAPER_ZEEMAN = ZeemanCalibration()


@dataclass(frozen=True)
class StarkCalibration:
    """Single-capacitor Stark phases at the mean velocity and geometry.

    ``phi_u_per_V2`` and ``phi_l_per_V2`` are in rad/V^2 and have opposite
    signs since the capacitors sit on opposite arms.
    """

    phi_u_per_V2: float = -4.830e-4
    phi_l_per_V2: float = 4.760e-4
    L_eff: float = 48e-3
    h_u: float = 1.101e-3
    h_l: float = 1.109e-3
    contact_u: float = 0.0
    contact_l: float = 0.0

    def __post_init__(self):
        if self.phi_u_per_V2 * self.phi_l_per_V2 >= 0:
            raise ValueError("upper and lower Stark slopes must have opposite signs")

    def slope(self, arm):
        if arm == "upper":
            return self.phi_u_per_V2
        if arm == "lower":
            return self.phi_l_per_V2
        raise ValueError(f"unknown capacitor arm {arm!r}")

    def contact(self, arm):
        return self.contact_u if arm == "upper" else self.contact_l


@dataclass(frozen=True)
class BeamModel:
    """Supersonic lithium beam.

    The longitudinal velocity distribution is
    ``P(v) ~ v**3 exp(-S**2 (v/vm - 1)**2)``.
    """

    vm: float = 1065.0
    S_par: float = 9.25
    rate: float = 6.0e4
    V0: float = 0.70
    y_height: float = 2e-3
    n_y: int = 201

    def __post_init__(self):
        if not self.S_par > 1:
            raise ValueError("parallel speed ratio must exceed 1")
        if not 0 < self.V0 <= 1:
            raise ValueError("base visibility must be in (0, 1]")
        if self.vm <= 0:
            raise ValueError("mean velocity must be positive")
        if self.n_y < 3 or self.n_y % 2 == 0:
            raise ValueError("n_y must be odd and >= 3 (Simpson weights)")

    def y_grid(self, n=None):
        """Beam-height samples and normalized Simpson weights."""
        return simpson_grid(self.y_height, n or self.n_y)


def simpson_grid(height, n):
    y = np.linspace(-height / 2, height / 2, n)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return y, w / w.sum()


# ---------------------------------------------------------------------------
# Dispersion profiles


@dataclass(frozen=True)
class DispersionProfiles:
    """Spatial phase dispersions sampled over the beam height.

    ``d`` is the diffraction-phase dispersion (rad), ``g`` the geometric
    Stark shape (rad/V^2), ``c`` the contact-potential shape (rad/V) and
    ``z`` the dimensionless Zeeman shape, scaled by the HMW-coil linear
    Zeeman phase.  All are zero-mean under ``weights``.
    """

    y: np.ndarray
    weights: np.ndarray
    d: np.ndarray
    g: np.ndarray
    c: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        n = len(self.y)
        for name in ("weights", "d", "g", "c", "z"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"profile {name!r} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        y = np.asarray(self.y, dtype=float)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if abs(self.weights.sum() - 1) > 1e-12:
            raise ValueError("profile weights must sum to 1")

    @classmethod
    def ramps(cls, beam=None, d_spread=0.0, g_spread=0.0, c_spread=0.0, z_spread=0.0, n=None):
        """Linear ramps over the beam height with the given total spreads.

        A spread is the peak-to-peak change of the profile across the beam.
        """
        beam = beam or BeamModel()
        y, w = beam.y_grid(n)
        u = y / beam.y_height
        return cls(y, w, d_spread * u, g_spread * u, c_spread * u, z_spread * u)

    @classmethod
    def zero(cls, beam=None):
        return cls.ramps(beam)

    def max_mean(self):
        return max(abs(float(self.weights @ p)) for p in (self.d, self.g, self.c, self.z))

    @property
    def has_contact(self):
        return bool(np.any(self.c != 0))

    def scaled(self, **factors):
        """Copy with some profiles multiplied by scalars, e.g. ``z=2.0``."""
        kw = {k: getattr(self, k) * factors.get(k, 1.0) for k in ("d", "g", "c", "z")}
        return DispersionProfiles(self.y, self.weights, **kw)


#: Stark dispersion spread of 0.8 rad at 800 V across the beam.
PAPER_G_SPREAD = 0.8 / 800.0**2
PAPER_D_SPREAD = 0.5
PAPER_Z_SPREAD = 0.07


def paper_profiles(beam=None):
    return DispersionProfiles.ramps(
        beam, d_spread=PAPER_D_SPREAD, g_spread=PAPER_G_SPREAD, z_spread=PAPER_Z_SPREAD
    )


# ---------------------------------------------------------------------------
# Scenario


def ac_coupling_from_geometry(L_eff, h):
    """AC phase of (F=2, m=2) per volt for a unit field projection.

    ``2 mu_B E0 L_eff / (hbar c^2)`` with ``E0 = V / h``.
    """
    return 2 * constants.physical_constants["Bohr magneton"][0] * L_eff / (
        constants.hbar * constants.c**2 * h
    )


_PAPER_AC = ac_coupling_from_geometry(48e-3, 0.5 * (1.101e-3 + 1.109e-3))


@dataclass(frozen=True)
class DriftModel:
    """Diffraction-phase drift: linear rate plus one slow sinusoid."""

    rate: float = 0.0
    amplitude: float = 0.030
    period: float = 300.0
    phase: float = 0.0

    def __call__(self, t):
        return self.rate * t + self.amplitude * np.sin(2 * np.pi * t / self.period + self.phase)


@dataclass(frozen=True)
class NoiseModel:
    """Counting noise.

    Counts are Poisson with an added Gaussian excess so that the total
    variance is ``fano * mean``; ``fano = 1`` is pure shot noise.
    """

    poisson: bool = True
    fano: float = 9.0

    def __post_init__(self):
        if self.fano < 1:
            raise ValueError("fano factor must be >= 1")


@dataclass(frozen=True)
class Scenario:
    """Complete truth model for a simulated campaign."""

    zeeman: ZeemanCalibration = field(default_factory=ZeemanCalibration)
    stark: StarkCalibration = field(default_factory=StarkCalibration)
    beam: BeamModel = field(default_factory=BeamModel)
    profiles: DispersionProfiles = None
    alpha_hmw: float = -1.28e-6
    ac_coupling: float = _PAPER_AC
    lab_projection: float = -0.7
    hmw_projection: float = 1.0
    stark_residual_per_V2: float = 8e-8
    chi: float = 0.0
    drift: DriftModel = field(default_factory=DriftModel)
    noise: NoiseModel = field(default_factory=NoiseModel)
    anomalous_a: float = 0.0
    anomalous_b: float = 0.0
    zeeman_velocity_average: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.profiles is None:
            object.__setattr__(self, "profiles", paper_profiles(self.beam))
        if not abs(self.chi) < 1:
            raise ValueError("chi must satisfy |chi| < 1")
        for name in ("alpha_hmw", "ac_coupling", "lab_projection", "hmw_projection"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.profiles.max_mean() > ZERO_MEAN_TOL:
            raise ValueError("dispersion profiles must have zero mean")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def defect_free(self):
        """Same couplings, all dispersions and offsets removed."""
        return self.replace(profiles=DispersionProfiles.zero(self.beam))


# ---------------------------------------------------------------------------
# Elementary phases


def j_coefficients(current, compensator, cal):
    """Return (J1, J2, J3) in rad for HMW current ``current`` and compensator current."""
    J1 = cal.A_J1 * abs(current - cal.I0) + cal.A_J1C * abs(compensator - cal.I0C) + cal.J0_IC
    J2 = cal.A_J2 * current**2
    J3 = cal.A_J3 * abs(current) ** 3
    return J1, J2, J3


def hmw_linear_zeeman(current, cal):
    """Linear Zeeman phase due to the HMW coil alone (zero at I = 0)."""
    return cal.A_J1 * (abs(current - cal.I0) - abs(cal.I0))


def zeeman_coefficients(m):
    """Coefficients (c1, c2, c3) of J1, J2, J3 in the pair-``m`` Zeeman phase.

    They follow the m-dependence of the Breit-Rabi expansion of
    ``sqrt(1 + m x + x**2)`` for J = 1/2, I = 3/2; the quadratic term is
    normalized so that the m = 0 pair carries J2 itself.
    """
    if m not in PAIR_LABELS:
        raise ValueError(f"pair index must be one of {PAIR_LABELS}, got {m!r}")
    return m / 2.0, (4 - m * m) / 4.0, m * (m * m - 4) / 16.0


def zeeman_phase(m, J1, J2, J3):
    """Zeeman phase of the first member of pair ``m``."""
    c1, c2, c3 = zeeman_coefficients(m)
    return c1 * J1 + c2 * J2 + c3 * J3


def stark_phase(voltage, arm, v, cal, v_mean=1065.0):
    """Stark phase of one capacitor at atom velocity ``v``."""
    if v <= 0:
        raise ValueError("velocity must be positive")
    return cal.slope(arm) * (voltage + cal.contact(arm)) ** 2 * (v_mean / v)


def capacitor_voltages(voltage, cal, residual_per_V2):
    """Voltages (V_u, V_l) with mean ``voltage`` whose Stark phases nearly cancel.

    The ratio is tuned so that the net phase at the mean velocity, ignoring
    contact offsets, equals ``residual_per_V2 * voltage**2``.
    """
    a, b, r = cal.phi_u_per_V2, cal.phi_l_per_V2, residual_per_V2
    # a (1+e)^2 + b (1-e)^2 = r, smallest root in e
    qa, qb, qc = a + b, 2 * (a - b), a + b - r
    if qa == 0:
        e = -qc / qb
    else:
        disc = math.sqrt(qb * qb - 4 * qa * qc)
        roots = ((-qb + disc) / (2 * qa), (-qb - disc) / (2 * qa))
        e = min(roots, key=abs)
    return voltage * (1 + e), voltage * (1 - e)


def mean_stark_phase(voltage, scenario, v=None):
    """Net Stark phase of both capacitors (the two arm slopes carry opposite signs)."""
    beam = scenario.beam
    v = beam.vm if v is None else v
    vu, vl = capacitor_voltages(voltage, scenario.stark, scenario.stark_residual_per_V2)
    return stark_phase(vu, "upper", v, scenario.stark, beam.vm) + stark_phase(
        vl, "lower", v, scenario.stark, beam.vm
    )


def field_projection(current, scenario):
    """Projection of the quantization axis on the AC-relevant direction.

    Without HMW current the laboratory field sets the axis; with current
    the coil field dominates and its sign follows the current.
    """
    if current == 0:
        return scenario.lab_projection
    return math.copysign(scenario.hmw_projection, current)


def ac_phase(m, voltage, current, scenario):
    """Aharonov-Casher phase of the first member of pair ``m``."""
    if m not in PAIR_LABELS:
        raise ValueError(f"pair index must be one of {PAIR_LABELS}, got {m!r}")
    return (m / 2.0) * scenario.ac_coupling * voltage * field_projection(current, scenario)


def hmw_phase(voltage, current, alpha):
    """HMW phase ``alpha V I``."""
    return alpha * voltage * current


def pair_weights(chi):
    """Member weights ``{m: (w_first, w_second)}`` for population unbalance ``chi``.

    F=2 members weigh ``(1 + chi)`` and F=1 members ``(1 - chi)`` before a
    global normalization to 1; the (2, +-2) pair stays balanced.
    """
    if not abs(chi) < 1:
        raise ValueError("chi must satisfy |chi| < 1")
    norm = 8.0 + 2.0 * chi
    up, down = (1 + chi) / norm, (1 - chi) / norm
    return {-1: (up, down), 0: (up, down), 1: (up, down), 2: (up, up)}


# ---------------------------------------------------------------------------
# Moments


@dataclass(frozen=True)
class PhaseMoments:
    """Second and third moments of the dispersed phases for one pair.

    Keys: ``d`` diffraction, ``S`` Stark, ``Z`` Zeeman.
    """

    dd: float
    dS: float
    dZ: float
    SS: float
    SZ: float
    ZZ: float
    dS3: float  # <(d + S)^3>
    Z3: float
    dZ2: float
    SZ2: float
    S2Z: float
    d2Z: float
    dSZ: float

    @property
    def dS2(self):
        """<(d + S)^2>."""
        return self.dd + 2 * self.dS + self.SS


def dispersed_phases(profiles, voltage, J1_hmw, m):
    """Return sampled (delta_d, delta_S, delta_Z) for pair ``m``."""
    dS = profiles.g * voltage**2 + profiles.c * voltage
    dZ = (m / 2.0) * profiles.z * J1_hmw
    return profiles.d, dS, dZ


def moments(profiles, voltage, J1_hmw, m):
    """Weighted second and third moments for pair ``m`` at ``voltage``."""
    if profiles.max_mean() > ZERO_MEAN_TOL:
        raise ValueError("dispersion profiles must have zero mean")
    d, S, Z = dispersed_phases(profiles, voltage, J1_hmw, m)
    w = profiles.weights

    def avg(x):
        return float(w @ x)

    return PhaseMoments(
        dd=avg(d * d),
        dS=avg(d * S),
        dZ=avg(d * Z),
        SS=avg(S * S),
        SZ=avg(S * Z),
        ZZ=avg(Z * Z),
        dS3=avg((d + S) ** 3),
        Z3=avg(Z**3),
        dZ2=avg(d * Z * Z),
        SZ2=avg(S * Z * Z),
        S2Z=avg(S * S * Z),
        d2Z=avg(d * d * Z),
        dSZ=avg(d * S * Z),
    )


# ---------------------------------------------------------------------------
# Velocity averaging


@lru_cache(maxsize=32)
def velocity_grid(vm, S_par, n=101):
    """Velocities and normalized weights of the beam distribution.

    Gauss-Legendre nodes on ``[vm (1 - 4/S), vm (1 + 4/S)]``.
    """
    if math.isinf(S_par):
        return np.array([vm]), np.array([1.0])
    x, w = roots_legendre(n)
    lo = max(1 - 4 / S_par, 0.02)
    hi = 1 + 4 / S_par
    u = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    p = w * u**3 * np.exp(-(S_par**2) * (u - 1) ** 2)
    v = vm * u
    v.setflags(write=False)
    p = p / p.sum()
    p.setflags(write=False)
    return v, p


def _velocity_average(phase, power, beam, n):
    v, p = velocity_grid(beam.vm, beam.S_par, n)
    r = (beam.vm / v) ** power
    c = float(p @ r)
    # remove the mean linear part so the summand stays slowly varying
    return complex(p @ np.exp(1j * phase * (r - c))), c


def velocity_visibility(phase, power, beam, tol=1e-9, max_n=6464):
    """Velocity average of ``exp(i phase (vm/v)**power)``.

    ``phase`` is the value at the mean velocity and ``power`` is 1 for
    Stark-like and 2 for Zeeman-like phases.  The grid starts at 101 nodes
    and doubles until two successive results differ by at most ``tol``.
    """
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    if phase == 0:
        return 1.0 + 0j
    if math.isinf(beam.S_par):
        return complex(np.exp(1j * phase))
    n = 101
    prev, c = _velocity_average(phase, power, beam, n)
    while True:
        n *= 2
        if n > max_n:
            raise QuadratureError(f"velocity average of phase {phase:g} rad did not converge")
        cur, c = _velocity_average(phase, power, beam, n)
        if abs(cur - prev) <= tol:
            return cur * complex(np.exp(1j * phase * c))
        prev = cur


def velocity_phase(phase, power, beam):
    """Unwrapped argument and modulus of :func:`velocity_visibility`.

    Returns ``(modulus, argument)`` with the argument continuous in ``phase``.
    """
    if phase == 0:
        return 1.0, 0.0
    if math.isinf(beam.S_par):
        return 1.0, phase
    v, p = velocity_grid(beam.vm, beam.S_par, 101)
    r = (beam.vm / v) ** power
    c = float(p @ r)
    z = velocity_visibility(phase, power, beam) * complex(np.exp(-1j * phase * c))
    # follow the residual argument from zero phase to pick the 2 pi branch
    steps = np.linspace(0.0, phase, max(2, int(abs(phase) / 0.25) + 2))
    path = np.unwrap(np.angle(np.exp(1j * np.outer(steps, r - c)) @ p))
    arg = float(np.angle(z))
    arg += 2 * np.pi * round((path[-1] - arg) / (2 * np.pi))
    return abs(z), arg + phase * c
