"""Shared-phase fit of interleaved fringe scans and reduction of the fits.

Each configuration ``k`` is described by ``N_k (1 + V_k cos(x + d1 t + phi_k))``
with ``x`` the known reference phase.  The drift rate ``d1`` is common to
all configurations, so an exactly linear drift is absorbed and leaves the
phase differences untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .reduced import QUANTITIES, ReducedPoint

#: Required drop of the gradient norm relative to its initial value.
GRADIENT_TOL = 1e-8

MIN_BINS_PER_CONFIG = 20
MIN_FRINGES = 1.5

#: Aggregation flags points farther than this many sigma from the mean.
OUTLIER_SIGMA = 5.0

# coefficients over configuration labels of each reduced quantity
_COEFFS = {
    "E": {"V,0": 1, "0,0": -1},
    "B": {"0,I": 1, "0,0": -1},
    "EB": {"V,I": 1, "0,0": 1, "V,0": -1, "0,I": -1},
}
_TWIN = {"V,0": "-V,0", "V,I": "-V,I"}


class FitError(RuntimeError):
    """A scan could not be fitted."""


class FitConvergenceError(FitError):
    """The least-squares iteration did not converge."""


@dataclass(frozen=True)
class ScanFit:
    """Result of :func:`fit_scan`.

    ``params`` is ``[d1, N_0, V_0, phi_0, N_1, ...]`` with ``N`` in counts
    per bin.  ``cov`` is already scaled by ``max(chi2_red, 1)``.
    """

    params: np.ndarray
    cov: np.ndarray
    labels: tuple
    chi2_red: float
    dof: int
    voltage: float
    current: float
    bin_width: float
    series: str = ""
    nfev: int = 0

    def index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"configuration {label!r} not in fit") from None

    def _p(self, label, j):
        return 1 + 3 * self.index(label) + j

    @property
    def drift_rate(self):
        return float(self.params[0])

    def intensity(self, label):
        """Mean count rate of one configuration, counts/s."""
        return float(self.params[self._p(label, 0)]) / self.bin_width

    def visibility(self, label):
        return float(self.params[self._p(label, 1)])

    def phase(self, label):
        return float(self.params[self._p(label, 2)])

    def sigma(self, label, what):
        j = {"intensity": 0, "visibility": 1, "phase": 2}[what]
        i = self._p(label, j)
        s = math.sqrt(self.cov[i, i])
        return s / self.bin_width if j == 0 else s

    def correlation(self):
        d = np.sqrt(np.diag(self.cov))
        return self.cov / np.outer(d, d)


def _design(scan):
    k = np.asarray(scan.config)
    tc = scan.t - 0.5 * (scan.t[0] + scan.t[-1])
    return k, tc, np.asarray(scan.ref_phase, dtype=float)


def _model(p, k, tc, x):
    N = p[1::3][k]
    V = p[2::3][k]
    ph = p[3::3][k]
    arg = x + p[0] * tc + ph
    c, s = np.cos(arg), np.sin(arg)
    mu = N * (1 + V * c)
    return mu, N, V, c, s


def _jacobian(p, k, tc, x, n_cfg):
    mu, N, V, c, s = _model(p, k, tc, x)
    J = np.zeros((len(k), 1 + 3 * n_cfg))
    J[:, 0] = -N * V * s * tc
    rows = np.arange(len(k))
    J[rows, 1 + 3 * k] = 1 + V * c
    J[rows, 2 + 3 * k] = N * c
    J[rows, 3 + 3 * k] = -N * V * s
    return J


def _initial(scan, n_cfg):
    k, _, x = _design(scan)
    y = np.asarray(scan.counts, dtype=float)
    p = np.zeros(1 + 3 * n_cfg)
    for j in range(n_cfg):
        sel = k == j
        A = np.column_stack([np.ones(sel.sum()), np.cos(x[sel]), np.sin(x[sel])])
        (c0, a, b), *_ = np.linalg.lstsq(A, y[sel], rcond=None)
        p[1 + 3 * j] = c0
        p[2 + 3 * j] = math.hypot(a, b) / c0
        p[3 + 3 * j] = math.atan2(-b, a)
    return p


def _check_scan(scan, n_cfg):
    counts = np.asarray(scan.counts, dtype=float)
    if np.ptp(counts) == 0:
        raise FitError("degenerate scan: all counts equal")
    span = float(np.ptp(scan.ref_phase)) / (2 * np.pi)
    if span < MIN_FRINGES:
        raise FitError(f"scan covers {span:.2f} fringes, need {MIN_FRINGES}")
    per = np.bincount(np.asarray(scan.config), minlength=n_cfg)
    if per.min() < MIN_BINS_PER_CONFIG:
        raise FitError(f"a configuration has only {per.min()} bins, need {MIN_BINS_PER_CONFIG}")


def _scaled_gradient(J, r):
    """Gradient norm in column-normalized parameters (scale free)."""
    norms = np.linalg.norm(J, axis=0)
    norms[norms == 0] = 1.0
    return float(np.linalg.norm((J.T @ r) / norms))


def fit_scan(scan, max_nfev=200):
    """Weighted least-squares fit of all configurations of one scan.

    Weights are ``1/sqrt(max(model, 1))``, taken from the initial linear fit
    and refreshed once from the first converged model.

    Raises
    ------
    FitError
        Degenerate or too short scans.
    FitConvergenceError
        If the weighted gradient does not drop by ``GRADIENT_TOL``.
    """
    n_cfg = len(scan.configs)
    _check_scan(scan, n_cfg)
    k, tc, x = _design(scan)
    y = np.asarray(scan.counts, dtype=float)
    p0 = _initial(scan, n_cfg)

    nfev = 0
    p = p0
    g_init = None
    for _ in range(2):
        sigma = np.sqrt(np.maximum(_model(p, k, tc, x)[0], 1.0))

        def fun(q):
            return (_model(q, k, tc, x)[0] - y) / sigma

        def jac(q):
            return _jacobian(q, k, tc, x, n_cfg) / sigma[:, None]

        if g_init is None:
            g_init = _scaled_gradient(jac(p), fun(p))
            floor = 1e-12 * np.linalg.norm(y / sigma)
        res = least_squares(
            fun, p, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev
        )
        nfev += res.nfev
        p = res.x
        # Gauss-Newton polish: LM stops on ftol before the gradient is tiny
        for _ in range(2):
            step, *_ = np.linalg.lstsq(jac(p), -fun(p), rcond=None)
            p = p + step

    J, r = jac(p), fun(p)
    g = _scaled_gradient(J, r)
    if not np.all(np.isfinite(p)) or g > max(GRADIENT_TOL * g_init, floor):
        raise FitConvergenceError(
            f"fit did not converge: gradient {g:.3g} vs initial {g_init:.3g} ({res.message})"
        )
    dof = len(y) - len(p)
    chi2_red = float(r @ r) / dof
    try:
        cov = np.linalg.inv(J.T @ J) * max(chi2_red, 1.0)
        cov = 0.5 * (cov + cov.T)
    except np.linalg.LinAlgError as exc:
        raise FitConvergenceError("singular normal matrix") from exc

    p = p.copy()
    for j in range(n_cfg):
        if p[2 + 3 * j] < 0:
            p[2 + 3 * j] = -p[2 + 3 * j]
            p[3 + 3 * j] += math.pi
        p[3 + 3 * j] = math.remainder(p[3 + 3 * j], 2 * math.pi)
    return ScanFit(
        params=p,
        cov=cov,
        labels=scan.labels,
        chi2_red=chi2_red,
        dof=dof,
        voltage=scan.voltage,
        current=scan.current,
        bin_width=scan.bin_width,
        series=scan.series,
        nfev=nfev,
    )


# ---------------------------------------------------------------------------
# Reduction


def _linear_forms(labels, twin):
    """Rows of (quantity, is_phase, {label: coefficient}) in output order."""
    rows = []
    for suffix in ("E", "B", "EB"):
        coeffs = _COEFFS[suffix]
        if twin:
            coeffs = {_TWIN.get(k, k): c for k, c in coeffs.items()}
        rows.append((f"V_{suffix}", False, coeffs))
        rows.append((f"phi_{suffix}", True, coeffs))
    return rows


def _evaluate(fit, rows):
    n = len(fit.params)
    vals, grads = [], []
    for _name, is_phase, coeffs in rows:
        g = np.zeros(n)
        if is_phase:
            v = 0.0
            for lab, c in coeffs.items():
                v += c * fit.phase(lab)
                g[fit._p(lab, 2)] += c
            v = math.remainder(v, 2 * math.pi)
        else:
            v = 1.0
            for lab, c in coeffs.items():
                v *= fit.visibility(lab) ** c
            for lab, c in coeffs.items():
                g[fit._p(lab, 1)] += c * v / fit.visibility(lab)
        vals.append(v)
        grads.append(g)
    return np.array(vals), np.array(grads)


def reduce(fit):
    """Reduced quantities of one scan with first-order error propagation.

    Six-configuration fits also give the ``-V`` twin; the covariance
    between each quantity and its twin is stored in ``twin_cov``.
    """
    for lab in ("0,0", "V,0", "V,I", "0,I"):
        fit.index(lab)
    rows = _linear_forms(fit.labels, False)
    has_twin = "-V,0" in fit.labels and "-V,I" in fit.labels
    if has_twin:
        rows += _linear_forms(fit.labels, True)
    vals, G = _evaluate(fit, rows)
    C = G @ fit.cov @ G.T
    sig = np.sqrt(np.clip(np.diag(C), 0, None))
    names = [r[0] for r in rows]

    def point(offset, v):
        return ReducedPoint(
            voltage=v,
            current=fit.current,
            **{q: float(vals[offset + i]) for i, q in enumerate(names[:6])},
            sigma={q: float(sig[offset + i]) for i, q in enumerate(names[:6])},
            series=fit.series,
        )

    p = point(0, fit.voltage)
    if has_twin:
        tw = point(6, -fit.voltage)
        twin_cov = {q: float(C[i, 6 + i]) for i, q in enumerate(names[:6])}
        p = p.with_(twin=tw, twin_cov=twin_cov)
    return p


# ---------------------------------------------------------------------------
# Aggregation


def _circular_unwrap(values, weights):
    ref = float(np.angle(np.sum(weights * np.exp(1j * values))))
    return values - 2 * np.pi * np.round((values - ref) / (2 * np.pi))


def _combine(values, sigmas, is_phase):
    values = np.asarray(values, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if np.any(sigmas <= 0):
        w = np.ones_like(values)
        exact = True
    else:
        w = 1 / sigmas**2
        exact = False
    if is_phase:
        values = _circular_unwrap(values, w)
    mean = float(np.sum(w * values) / np.sum(w))
    if exact:
        return mean, 0.0, 0, w
    sigma = float(1 / math.sqrt(np.sum(w)))
    outliers = int(np.sum(np.abs(values - mean) > OUTLIER_SIGMA * sigmas))
    return mean, sigma, outliers, w


def _aggregate_one(points):
    vals, sig, weights = {}, {}, {}
    outliers = 0
    for q in QUANTITIES:
        m, s, o, w = _combine(
            [p.value(q) for p in points], [p.error(q) for p in points], q.startswith("phi")
        )
        vals[q], sig[q], weights[q] = m, s, w
        outliers = max(outliers, o)
    first = points[0]
    agg = ReducedPoint(
        voltage=first.voltage,
        current=first.current,
        sigma=sig,
        series=first.series,
        n_scans=sum(p.n_scans for p in points),
        outliers=outliers,
        **vals,
    )
    return agg, weights


def aggregate(points):
    """Inverse-variance mean of reduced points taken at the same (V, I).

    Phases are unwrapped about their circular mean first.  Points more
    than five sigma from the mean are counted in ``outliers`` but kept.
    """
    points = list(points)
    if not points:
        raise ValueError("cannot aggregate an empty series")
    if len({(p.voltage, p.current) for p in points}) != 1:
        raise ValueError("points must share the same (V, I)")
    if len(points) == 1:
        return points[0]
    agg, w = _aggregate_one(points)
    if all(p.twin is not None for p in points):
        tw, wt = _aggregate_one([p.twin for p in points])
        cov = {}
        for q in QUANTITIES:
            c = np.array([p.twin_cov.get(q, 0.0) for p in points])
            cov[q] = float(np.sum(w[q] * wt[q] * c) / (np.sum(w[q]) * np.sum(wt[q])))
        agg = agg.with_(twin=tw, twin_cov=cov)
    return agg
