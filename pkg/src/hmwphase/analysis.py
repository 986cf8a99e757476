"""Parity decomposition, corrections, HMW slope extraction and calibration fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .model import CollapseWarning, dn_terms, stray_phase_hmw_odd
from .physics import (
    PAIR_LABELS,
    BeamModel,
    DispersionProfiles,
    FieldConfiguration,
    StarkCalibration,
    ZeemanCalibration,
    velocity_phase,
    zeeman_phase,
)

#: Only points with |I| at or below this value (A) enter the default slope fit.
CURRENT_CUT = 12.0

#: Stray corrections above this size (rad) are suspicious.
LARGE_CORRECTION = 10e-3

MIN_VISIBILITY_VOLTAGES = 6


class AnalysisError(RuntimeError):
    """An analysis step could not be carried out."""


class LargeCorrectionWarning(UserWarning):
    """A stray-phase correction is much larger than expected."""


# ---------------------------------------------------------------------------
# Parity operators


@dataclass(frozen=True)
class ParityCombination:
    """One parity combination such as ``"D_B M_E"`` at (|V|, |I|)."""

    tag: str
    value: float
    sigma: float
    voltage: float
    current: float


def mean_half_difference(plus, minus):
    """``(M, D) = ((f+ + f-)/2, (f+ - f-)/2)``."""
    return (plus + minus) / 2, (plus - minus) / 2


# sign weights of each double operator over (sV, sI) in the order
# (+,+), (-,+), (+,-), (-,-)
_DOUBLE = {
    "M_B M_E": (1, 1, 1, 1),
    "M_B D_E": (1, -1, 1, -1),
    "D_B M_E": (1, 1, -1, -1),
    "D_B D_E": (1, -1, -1, 1),
}
_SIGNS = ((1, 1), (-1, 1), (1, -1), (-1, -1))


def parity(values, voltage, current, cov=None):
    """All single and double parity combinations of a tabulated quantity.

    Parameters
    ----------
    values : dict
        ``{(sV, sI): value}`` for the four sign pairs, or ``{(sV, sI):
        (value, sigma)}``.
    cov : dict, optional
        Extra covariances ``{((sV, sI), (sV', sI')): c}`` between entries.

    Returns
    -------
    dict
        Tag to :class:`ParityCombination`.  Single operators are returned
        at the positive sign of the other field (``"M_E"``, ``"D_E"`` at
        +I and ``"M_B"``, ``"D_B"`` at +V).
    """
    missing = [s for s in _SIGNS if s not in values]
    if missing:
        raise KeyError(f"missing sign partner(s) {missing}")
    f, s = [], []
    for key in _SIGNS:
        v = values[key]
        if isinstance(v, tuple):
            f.append(float(v[0]))
            s.append(float(v[1]))
        else:
            f.append(float(v))
            s.append(0.0)
    C = np.diag(np.square(s))
    for (a, b), c in (cov or {}).items():
        i, j = _SIGNS.index(a), _SIGNS.index(b)
        C[i, j] = C[j, i] = c
    f = np.array(f)

    out = {}

    def add(tag, w):
        w = np.asarray(w, dtype=float)
        out[tag] = ParityCombination(
            tag, float(w @ f), float(math.sqrt(max(w @ C @ w, 0.0))), abs(voltage), abs(current)
        )

    add("M_E", [0.5, 0.5, 0, 0])
    add("D_E", [0.5, -0.5, 0, 0])
    add("M_B", [0.5, 0, 0.5, 0])
    add("D_B", [0.5, 0, -0.5, 0])
    for tag, w in _DOUBLE.items():
        add(tag, np.array(w) / 4)
    return out


def signed_table(points, quantity):
    """Map ``{(V, I): (value, sigma)}`` and twin covariances from reduced points.

    Six-configuration points contribute their ``-V`` twin as well.
    """
    table, cov = {}, {}
    for p in points:
        table[(p.voltage, p.current)] = (p.value(quantity), p.error(quantity))
        if p.twin is not None:
            t = p.twin
            table[(t.voltage, t.current)] = (t.value(quantity), t.error(quantity))
            cov[((p.voltage, p.current), (t.voltage, t.current))] = p.twin_cov.get(quantity, 0.0)
    return table, cov


def parity_at(points, quantity, voltage, current):
    """:func:`parity` of ``quantity`` at (|V|, |I|) from a set of reduced points."""
    table, cov = signed_table(points, quantity)
    V, I = abs(voltage), abs(current)
    vals = {}
    for sv, si in _SIGNS:
        key = (sv * V, si * I)
        if key not in table:
            raise KeyError(f"no reduced point at V={key[0]:g}, I={key[1]:g}")
        vals[(sv, si)] = table[key]
    pair_cov = {}
    for (a, b), c in cov.items():
        if {abs(a[0]), abs(b[0])} == {V} and abs(a[1]) == I and abs(b[1]) == I:
            ka = (int(np.sign(a[0])), int(np.sign(a[1])))
            kb = (int(np.sign(b[0])), int(np.sign(b[1])))
            pair_cov[(ka, kb)] = c
    return parity(vals, V, I, pair_cov)


# ---------------------------------------------------------------------------
# Corrections


def corrected_visibility(V_EB, dE_VE):
    """``V_EB / (1 - D_E V_E)``, removing the AC asymmetry of ``V_E``.

    Raises
    ------
    ValueError
        If ``|1 - D_E V_E| < 0.5``.
    """
    den = 1 - dE_VE
    if abs(den) < 0.5:
        raise ValueError(f"nonphysical visibility correction: 1 - D_E V_E = {den:.3g}")
    return V_EB / den


def stray_correction(db_phi_EB, voltage, current, calibration, mode="full"):
    """Corrected HMW phase from ``D_B phi_EB`` at (V, |I|).

    ``calibration`` is a scenario carrying the calibrated Zeeman model and
    dispersion profiles.  ``mode="full"`` adds the complete current-odd
    stray phase of the model, including the part due to the asymmetry of
    the Zeeman phases under current reversal; ``mode="nmm"`` adds only
    ``N_mm/D0``.

    Returns
    -------
    (phi_final, correction)
    """
    I = abs(current)
    if mode == "full":
        corr = stray_phase_hmw_odd(voltage, I, calibration)
    elif mode == "nmm":
        t = dn_terms(FieldConfiguration.with_policy(voltage, I), calibration)
        corr = t.N["mm"] / t.D0
    else:
        raise ValueError(f"unknown correction mode {mode!r}")
    if abs(corr) > LARGE_CORRECTION:
        warnings.warn(
            f"stray correction {corr * 1e3:.1f} mrad at V={voltage:g}, I={I:g}",
            LargeCorrectionWarning,
        )
    return db_phi_EB + corr, corr


# ---------------------------------------------------------------------------
# HMW slope


@dataclass(frozen=True)
class HMWSeries:
    """``D_B phi_EB`` (optionally corrected) against ``V |I|`` with full covariance."""

    voltage: np.ndarray
    current: np.ndarray
    value: np.ndarray
    cov: np.ndarray
    correction: np.ndarray

    @property
    def x(self):
        return self.voltage * self.current

    @property
    def sigma(self):
        return np.sqrt(np.diag(self.cov))


def hmw_series(points, calibration=None, mode="full"):
    """Build the ``D_B phi_EB`` series from reduced points at +I and -I.

    Points are matched by (|V|, |I|); six-configuration twins add the
    ``-V`` entries with their covariance.  With ``calibration`` the stray
    correction is applied to every entry.
    """
    table, cov = signed_table(points, "phi_EB")
    keys = sorted({(abs(v), abs(i)) for v, i in table if i != 0})
    V, I, y, corr = [], [], [], []
    blocks = []
    for Va, Ia in keys:
        idx = []
        for sv in (1, -1):
            kp, km = (sv * Va, Ia), (sv * Va, -Ia)
            if kp not in table or km not in table:
                continue
            (fp, sp), (fm, sm) = table[kp], table[km]
            d = _phase_diff(fp, fm) / 2
            c = 0.0
            if calibration is not None:
                d, c = stray_correction(d, sv * Va, Ia, calibration, mode)
            idx.append((sv, len(V)))
            V.append(sv * Va)
            I.append(Ia)
            y.append(d)
            corr.append(c)
            blocks.append((len(V) - 1, len(V) - 1, (sp**2 + sm**2) / 4))
        if len(idx) == 2:
            (_, a), (_, b) = idx
            c = 0.0
            for sI in (1, -1):
                k1, k2 = (Va, sI * Ia), (-Va, sI * Ia)
                c += cov.get((k1, k2), cov.get((k2, k1), 0.0))
            blocks.append((a, b, c / 4))
    if not V:
        raise AnalysisError("no (V, +I)/(V, -I) pairs found")
    C = np.zeros((len(V), len(V)))
    for a, b, c in blocks:
        C[a, b] = C[b, a] = c
    return HMWSeries(np.array(V), np.array(I), np.array(y), C, np.array(corr))


def _phase_diff(a, b):
    return math.remainder(a - b, 2 * math.pi)


@dataclass(frozen=True)
class HMWResult:
    """Straight-line fit ``y = alpha V I + beta``."""

    alpha: float
    alpha_sigma: float
    beta: float
    beta_sigma: float
    cov: np.ndarray
    residuals: np.ndarray
    chi2: float
    dof: int
    cut: str
    n_points: int
    bootstrap_sigma: tuple = field(default=None)

    def beta_consistent(self, n_sigma=2.0):
        return abs(self.beta) <= n_sigma * self.beta_sigma


def extract_slope(series, cut=CURRENT_CUT, above=False, bootstrap=0, seed=0):
    """Generalized least-squares fit of ``D_B phi_EB`` against ``V I``.

    Parameters
    ----------
    series : HMWSeries
    cut : float
        Current threshold (A).  Points with ``|I| <= cut`` are used, or
        those above it when ``above`` is true.
    bootstrap : int
        Number of bootstrap resamples for an alternative error estimate.
    """
    keep = series.current > cut if above else series.current <= cut
    if keep.sum() < 3:
        raise AnalysisError(f"need at least 3 points, have {keep.sum()}")
    x = series.x[keep]
    y = series.value[keep]
    C = series.cov[np.ix_(keep, keep)]
    A = np.column_stack([x, np.ones_like(x)])
    try:
        Ci = np.linalg.inv(C)
        F = A.T @ Ci @ A
        cov = np.linalg.inv(F)
    except np.linalg.LinAlgError as exc:
        raise AnalysisError("singular design or covariance") from exc
    coef = cov @ A.T @ Ci @ y
    r = y - A @ coef
    chi2 = float(r @ Ci @ r)
    boot = None
    if bootstrap:
        rng = np.random.default_rng(seed)
        sig = np.sqrt(np.diag(C))
        draws = []
        for _ in range(bootstrap):
            k = rng.integers(0, len(x), len(x))
            if len(np.unique(x[k])) < 2:
                continue
            draws.append(np.polyfit(x[k], y[k], 1, w=1 / sig[k]))
        draws = np.array(draws)
        boot = (float(draws[:, 0].std(ddof=1)), float(draws[:, 1].std(ddof=1)))
    tag = f"|I|>{cut:g}A" if above else f"|I|<={cut:g}A"
    return HMWResult(
        alpha=float(coef[0]),
        alpha_sigma=float(math.sqrt(cov[0, 0])),
        beta=float(coef[1]),
        beta_sigma=float(math.sqrt(cov[1, 1])),
        cov=cov,
        residuals=r,
        chi2=chi2,
        dof=len(x) - 2,
        cut=tag,
        n_points=len(x),
        bootstrap_sigma=boot,
    )


# ---------------------------------------------------------------------------
# Stark / velocity calibration


@dataclass(frozen=True)
class StarkFit:
    S_par: float
    phi_u_per_V2: float
    phi_l_per_V2: float
    cov: np.ndarray

    @property
    def sigmas(self):
        return tuple(float(s) for s in np.sqrt(np.diag(self.cov)))

    def calibration(self, base=None):
        base = base or StarkCalibration()
        from dataclasses import replace

        return replace(base, phi_u_per_V2=self.phi_u_per_V2, phi_l_per_V2=self.phi_l_per_V2)


def stark_response(V2, slope, S_par, vm=1065.0):
    """Velocity-averaged (visibility, phase) of one capacitor at ``V**2``."""
    beam = BeamModel(vm=vm, S_par=S_par)
    out = np.array([velocity_phase(slope * v2, 1, beam) for v2 in np.atleast_1d(V2)])
    return out[:, 0], out[:, 1]


def fit_stark_calibration(data, guess=(9.0, -4.8e-4, 4.8e-4), vm=1065.0):
    """Joint fit of both capacitors' visibility and phase against ``V**2``.

    Parameters
    ----------
    data : dict
        ``{"upper": (V2, vis, vis_sigma, phase, phase_sigma), "lower": ...}``.

    Returns
    -------
    StarkFit
    """
    arms = ("upper", "lower")
    for arm in arms:
        if arm not in data:
            raise AnalysisError(f"missing {arm} capacitor data")
        if np.ptp(np.asarray(data[arm][0])) <= 0 or len(data[arm][0]) < 3:
            raise AnalysisError("insufficient voltage range for the Stark fit")

    def resid(p):
        S, ku, kl = p
        if S <= 1:
            return np.full(sum(4 * len(data[a][0]) for a in arms) // 2, 1e6)
        out = []
        for arm, k in zip(arms, (ku, kl)):
            V2, vis, svis, ph, sph = (np.asarray(a, dtype=float) for a in data[arm])
            mv, mp = stark_response(V2, k, S, vm)
            out.append((mv - vis) / svis)
            out.append((mp - ph) / sph)
        return np.concatenate(out)

    res = least_squares(resid, np.array(guess, dtype=float), x_scale=[1.0, 1e-5, 1e-5])
    if not res.success:
        raise AnalysisError(f"Stark fit did not converge: {res.message}")
    J = res.jac
    dof = max(len(res.fun) - 3, 1)
    s2 = max(float(res.fun @ res.fun) / dof, 1.0)
    cov = np.linalg.inv(J.T @ J) * s2
    return StarkFit(float(res.x[0]), float(res.x[1]), float(res.x[2]), cov)


def synthetic_stark_data(cal, S_par, voltages, rng, vis_sigma=0.01, phase_sigma=0.03, vm=1065.0):
    """Noisy single-capacitor scans in the style of a Stark calibration run."""
    V2 = np.asarray(voltages, dtype=float) ** 2
    out = {}
    for arm in ("upper", "lower"):
        vis, ph = stark_response(V2, cal.slope(arm), S_par, vm)
        out[arm] = (
            V2,
            vis + rng.normal(0, vis_sigma, len(V2)),
            np.full(len(V2), vis_sigma),
            ph + rng.normal(0, phase_sigma, len(V2)),
            np.full(len(V2), phase_sigma),
        )
    return out


# ---------------------------------------------------------------------------
# Visibility polynomial


@dataclass(frozen=True)
class VisibilityPolynomial:
    """``V_E = 1 - sum_i k_i V**i`` for i = 1..4."""

    k: np.ndarray
    cov: np.ndarray
    chi2: float
    dof: int

    @property
    def sigma(self):
        return np.sqrt(np.diag(self.cov))

    def __call__(self, V):
        V = np.asarray(V, dtype=float)
        return 1 - sum(self.k[i] * V ** (i + 1) for i in range(4))


def fit_visibility_polynomial(voltage, V_E, sigma):
    """Weighted linear least squares for ``k_V1 .. k_V4``."""
    voltage = np.asarray(voltage, dtype=float)
    V_E = np.asarray(V_E, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if len(np.unique(voltage)) < MIN_VISIBILITY_VOLTAGES:
        raise AnalysisError(
            f"need at least {MIN_VISIBILITY_VOLTAGES} distinct voltages, "
            f"have {len(np.unique(voltage))}"
        )
    # scale columns to keep the normal matrix well conditioned
    scale = max(np.abs(voltage).max(), 1.0)
    u = voltage / scale
    A = np.column_stack([u**i for i in range(1, 5)]) / sigma[:, None]
    b = (1 - V_E) / sigma
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    cov_u = np.linalg.inv(A.T @ A)
    powers = scale ** np.arange(1, 5)
    k = coef / powers
    cov = cov_u / np.outer(powers, powers)
    r = b - A @ coef
    return VisibilityPolynomial(k, cov, float(r @ r), len(voltage) - 4)


# ---------------------------------------------------------------------------
# Zeeman calibration

ZEEMAN_PARAMS = ("J0", "I0", "A_J1", "A_J2", "A_J3", "I0C", "A_J1C")
_ZEEMAN_SCALE = np.array([0.1, 0.1, 0.01, 1e-4, 1e-5, 0.01, 0.01])


@dataclass(frozen=True)
class ZeemanPoint:
    """Measured complex relative visibility ``V_B`` at (I, I_C)."""

    series: str
    current: float
    compensator: float
    re: float
    im: float
    sigma: float


def complex_vb(current, compensator, cal, chi):
    """Zero-dispersion complex ``V_B`` at (I, I_C) relative to (0, 0).

    Broadcasts over array arguments.
    """
    I = np.asarray(current, dtype=float)
    IC = np.asarray(compensator, dtype=float)
    chi = np.asarray(chi, dtype=float)
    # same member weights as physics.pair_weights, vectorized
    norm = 8.0 + 2.0 * chi
    up, down = (1 + chi) / norm, (1 - chi) / norm

    def amp(I, IC):
        J1 = cal.A_J1 * np.abs(I - cal.I0) + cal.A_J1C * np.abs(IC - cal.I0C) + cal.J0_IC
        J2 = cal.A_J2 * I**2
        J3 = cal.A_J3 * np.abs(I) ** 3
        total = 0j
        for m in PAIR_LABELS:
            e = np.exp(1j * zeeman_phase(m, J1, J2, J3))
            wb = up if m == 2 else down
            total = total + up * e + wb * np.conj(e)
        return total

    out = amp(I, IC) / amp(np.zeros_like(I), np.zeros_like(IC))
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ZeemanFit:
    calibration: ZeemanCalibration
    sigma: dict
    chi: dict
    chi_sigma: dict
    cov: np.ndarray
    chi2: float
    dof: int


def _cal_from(p, fixed=None):
    vals = dict(zip(ZEEMAN_PARAMS, p))
    if fixed:
        vals.update(fixed)
    return ZeemanCalibration(**vals)


def global_zeeman_fit(points, guess=None, fit_chi=True, free=ZEEMAN_PARAMS, absolute_sigma=True):
    """Simultaneous fit of all series with shared J-model parameters.

    Each series gets its own population unbalance ``chi`` when ``fit_chi``.
    Parameters not in ``free`` stay at their ``guess`` values.
    """
    points = list(points)
    series = sorted({p.series for p in points})
    guess = guess or ZeemanCalibration()
    g = guess.as_array()
    free_idx = [ZEEMAN_PARAMS.index(n) for n in free]
    n_chi = len(series) if fit_chi else 0
    n_par = len(free_idx) + n_chi
    if 2 * len(points) <= n_par:
        raise AnalysisError("under-determined Zeeman fit")
    sidx = {s: i for i, s in enumerate(series)}
    I = np.array([p.current for p in points])
    IC = np.array([p.compensator for p in points])
    data = np.array([complex(p.re, p.im) for p in points])
    sig = np.array([p.sigma for p in points])
    sk = np.array([sidx[p.series] for p in points])

    def unpack(q):
        full = g.copy()
        full[free_idx] = q[: len(free_idx)] * _ZEEMAN_SCALE[free_idx]
        chis = q[len(free_idx):] if fit_chi else np.zeros(len(series))
        return _cal_from(full), chis

    def resid(q):
        cal, chis = unpack(q)
        if np.any(np.abs(chis) >= 0.99):
            return np.full(2 * len(points), 1e3)
        r = (complex_vb(I, IC, cal, chis[sk]) - data) / sig
        return np.concatenate([r.real, r.imag])

    q0 = np.concatenate([g[free_idx] / _ZEEMAN_SCALE[free_idx], np.zeros(n_chi)])
    res = least_squares(resid, q0, method="lm", xtol=1e-12, ftol=1e-12)
    if res.status <= 0:
        raise AnalysisError(f"Zeeman fit did not converge: {res.message}")
    J = res.jac
    dof = len(res.fun) - n_par
    chi2 = float(res.fun @ res.fun)
    cov_q = np.linalg.inv(J.T @ J)
    if not absolute_sigma:
        cov_q = cov_q * chi2 / dof
    scale = np.concatenate([_ZEEMAN_SCALE[free_idx], np.ones(n_chi)])
    cov = cov_q * np.outer(scale, scale)
    cal, chis = unpack(res.x)
    sd = np.sqrt(np.diag(cov))
    sigma = {ZEEMAN_PARAMS[j]: float(sd[i]) for i, j in enumerate(free_idx)}
    chi = {s: float(chis[i]) for i, s in enumerate(series)} if fit_chi else {}
    chi_sigma = (
        {s: float(sd[len(free_idx) + i]) for i, s in enumerate(series)} if fit_chi else {}
    )
    return ZeemanFit(cal, sigma, chi, chi_sigma, cov, chi2, dof)


def compensator_only_fit(points, guess=None):
    """Fit of compensator-only series (I = 0): frees ``A_J1C`` and ``I0C``."""
    pts = [p for p in points if p.current == 0]
    if len(pts) < 3:
        raise AnalysisError("need at least 3 compensator-only points")
    return global_zeeman_fit(pts, guess=guess, fit_chi=False, free=("A_J1C", "I0C"))


def synthetic_zeeman_dataset(cal, rng, n_series=31, sigma=0.01, chi=0.0):
    """About 150 noisy ``V_B`` points spread over 31 series.

    Series alternate between current sweeps with the compensator policy
    (both signs of I), sweeps at fixed compensator currents, and
    compensator-only sweeps at I = 0.
    """
    from .physics import compensator_current

    points = []
    for s in range(n_series):
        kind = s % 4
        if kind == 0:
            Is = np.linspace(1, 23, 5) * (1 if s % 8 == 0 else -1)
            ICs = [compensator_current(i) for i in Is]
        elif kind == 1:
            Is = np.linspace(0.2, 4, 5) * (1 if s % 8 == 1 else -1)
            ICs = [0.0] * 5
        elif kind == 2:
            Is = np.zeros(5)
            ICs = np.linspace(0.1, 1.5, 5)
        else:
            Is = np.linspace(4, 12, 5) * (1 if s % 8 == 3 else -1)
            ICs = [1.0 + 0.5 * (s % 3)] * 5
        for i, ic in zip(Is, ICs):
            if i == 0 and ic == 0:
                continue
            z = complex_vb(float(i), float(ic), cal, chi)
            points.append(
                ZeemanPoint(
                    f"s{s:02d}",
                    float(i),
                    float(ic),
                    z.real + rng.normal(0, sigma),
                    z.imag + rng.normal(0, sigma),
                    sigma,
                )
            )
    return points


# ---------------------------------------------------------------------------
# Dispersion calibration


def calibrated_profiles(k_V2, k_V4, z_spread=0.0, beam=None):
    """Linear-ramp profiles reproducing the fitted ``k_V2`` and ``k_V4``.

    A ramp of total spread ``s`` has variance ``s**2 / 12``; the Stark
    spread follows from ``k_V4 = g**2 / 24`` and the diffraction spread
    from ``k_V2 = d g / 12``.
    """
    if k_V4 <= 0:
        raise AnalysisError("k_V4 must be positive to define a Stark spread")
    g = math.sqrt(24 * k_V4)
    d = 12 * k_V2 / g
    return DispersionProfiles.ramps(beam, d_spread=d, g_spread=g, z_spread=z_spread)


def fit_zeeman_dispersion(data, scenario, guess=0.05):
    """Fit the Zeeman spread from ``M_E phi_EB`` against (V, I).

    Parameters
    ----------
    data : iterable of (V, I, value, sigma)
    scenario
        Scenario whose profiles already carry the calibrated ``d`` and ``g``;
        its ``z`` profile is replaced by a ramp of the fitted spread.

    Returns
    -------
    (z_spread, sigma)
    """
    from .model import predict_parity_combination

    data = [tuple(map(float, row)) for row in data]
    if len(data) < 2:
        raise AnalysisError("need at least 2 points to fit the Zeeman spread")
    prof = scenario.profiles
    u = prof.y / (prof.y[-1] - prof.y[0])

    def with_z(z):
        p = DispersionProfiles(prof.y, prof.weights, prof.d, prof.g, prof.c, z * u)
        return scenario.replace(profiles=p)

    def resid(q):
        sc = with_z(q[0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CollapseWarning)
            return np.array(
                [(predict_parity_combination("ME_phase", V, I, sc) - y) / s for V, I, y, s in data]
            )

    res = least_squares(resid, [guess], x_scale=[0.01])
    J = res.jac
    cov = np.linalg.inv(J.T @ J) * max(float(res.fun @ res.fun) / max(len(data) - 1, 1), 1.0)
    return float(res.x[0]), float(math.sqrt(cov[0, 0]))
