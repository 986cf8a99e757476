"""Campaign orchestration: simulate, fit, reduce, calibrate and extract."""

from __future__ import annotations

import warnings
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (
    CURRENT_CUT,
    calibrated_profiles,
    extract_slope,
    fit_visibility_polynomial,
    fit_zeeman_dispersion,
    hmw_series,
)
from .fitting import aggregate, fit_scan, reduce
from .model import CollapseWarning
from .synth import BIN_WIDTH, SCAN_DURATION, config_amplitudes, synthesize_scan


@dataclass(frozen=True)
class RunSpec:
    """Scans taken at one nominal (V, I)."""

    voltage: float
    current: float
    n_scans: int = 100
    n_configs: int = 6
    series: str = ""

    def __post_init__(self):
        if self.n_scans < 1:
            raise ValueError("n_scans must be >= 1")
        if self.n_configs not in (4, 6):
            raise ValueError("n_configs must be 4 or 6")
        if self.voltage == 0 or self.current == 0:
            raise ValueError("runs need nonzero V and I")


@dataclass(frozen=True)
class CampaignManifest:
    runs: tuple
    seed: int = 0
    duration: float = SCAN_DURATION
    bin_width: float = BIN_WIDTH
    scenario: str = ""
    out: str = ""

    def scan_seed(self, run_index, scan_index):
        return (int(self.seed), int(run_index), int(scan_index))


def fig11_runs(voltages=(400.0, 600.0, 800.0), currents=(4.0, 8.0, 12.0), n_scans=100, n_configs=6):
    """Sampling plan of a HMW campaign: every V with both signs of every |I|."""
    runs = []
    for V in voltages:
        for I in currents:
            for s in (1, -1):
                runs.append(RunSpec(V, s * I, n_scans, n_configs, f"V{V:g}_I{s * I:+g}"))
    return tuple(runs)


# ---------------------------------------------------------------------------
# Simulation and fitting


def simulate_run(scenario, manifest, run_index, source="exact"):
    """All scans of one run; amplitudes are computed once for the run."""
    run = manifest.runs[run_index]
    amps = config_amplitudes(scenario, run.voltage, run.current, run.n_configs, source)
    t0 = sum(r.n_scans for r in manifest.runs[:run_index]) * manifest.duration
    return [
        synthesize_scan(
            scenario,
            run.voltage,
            run.current,
            manifest.scan_seed(run_index, k),
            n_configs=run.n_configs,
            duration=manifest.duration,
            bin_width=manifest.bin_width,
            t_start=t0 + k * manifest.duration,
            amplitudes=amps,
            series=run.series,
        )
        for k in range(run.n_scans)
    ]


def _fit_reduce(scans):
    return [reduce(fit_scan(s)) for s in scans]


def _map(fn, items, workers):
    if workers and workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def reduce_scans(scans, workers=1):
    """Fit and reduce scans; order of the output follows the input."""
    chunks = [scans[i : i + 50] for i in range(0, len(scans), 50)]
    return [p for chunk in _map(_fit_reduce, chunks, workers) for p in chunk]


@dataclass(frozen=True)
class _RunJob:
    scenario: object
    manifest: CampaignManifest
    index: int
    source: str


def _run_job(job):
    scans = simulate_run(job.scenario, job.manifest, job.index, job.source)
    return aggregate(_fit_reduce(scans))


def run_campaign(scenario, manifest, source="exact", workers=1):
    """Simulate, fit, reduce and aggregate every run of a manifest.

    Returns one aggregated reduced point per run.
    """
    jobs = [_RunJob(scenario, manifest, i, source) for i in range(len(manifest.runs))]
    return _map(_run_job, jobs, workers)


# ---------------------------------------------------------------------------
# Calibration and extraction


@dataclass(frozen=True)
class DispersionCalibration:
    k: np.ndarray
    k_sigma: np.ndarray
    z_spread: float
    z_sigma: float
    scenario: object


def visibility_data(points):
    """(V, V_E, sigma) from reduced points and their twins."""
    rows = []
    for p in points:
        for q in (p, p.twin):
            if q is not None:
                rows.append((q.voltage, q.V_E, q.error("V_E")))
    return np.array(rows).T


def me_phase_data(points):
    """``M_E phi_EB`` at every (|V|, I) that has both voltage signs."""
    rows = []
    for p in points:
        if p.twin is None:
            continue
        value = 0.5 * (p.phi_EB + p.twin.phi_EB)
        var = 0.25 * (p.error("phi_EB") ** 2 + p.twin.error("phi_EB") ** 2)
        var += 0.5 * p.twin_cov.get("phi_EB", 0.0)
        rows.append((abs(p.voltage), p.current, value, float(np.sqrt(max(var, 1e-30)))))
    return rows


def _with_z(cal, z, beam):
    return cal.scenario.replace(profiles=calibrated_profiles(cal.k[1], cal.k[3], z, beam))


def calibrate_dispersions(points, scenario):
    """Dispersion profiles from the campaign's own ``V_E`` and ``M_E phi_EB``.

    ``k_V2`` and ``k_V4`` fix the diffraction and Stark ramps; the Zeeman
    ramp follows from ``M_E phi_EB``.  All other couplings are taken from
    ``scenario``.
    """
    V, VE, sVE = visibility_data(points)
    poly = fit_visibility_polynomial(V, VE, sVE)
    prof = calibrated_profiles(poly.k[1], poly.k[3], 0.0, scenario.beam)
    base = scenario.replace(profiles=prof)
    z, zs = fit_zeeman_dispersion(me_phase_data(points), base)
    prof = calibrated_profiles(poly.k[1], poly.k[3], z, scenario.beam)
    return DispersionCalibration(poly.k, poly.sigma, z, zs, scenario.replace(profiles=prof))


@dataclass(frozen=True)
class CampaignResult:
    raw: object
    corrected: object
    series_raw: object
    series_corrected: object
    calibration: DispersionCalibration = field(default=None)


def extract_hmw(points, scenario, cut=CURRENT_CUT, correction=True, calibrate=True, mode="full"):
    """Slope of ``D_B phi_EB`` against ``V I``, raw and stray-corrected.

    With ``calibrate`` the dispersion profiles used for the correction are
    fitted from the campaign itself; otherwise ``scenario`` is used as is.
    """
    raw_series = hmw_series(points)
    raw = extract_slope(raw_series, cut)
    if not correction:
        return CampaignResult(raw, None, raw_series, None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CollapseWarning)
        cal = calibrate_dispersions(points, scenario) if calibrate else None
        cal_scenario = cal.scenario if cal else scenario
        corr_series = hmw_series(points, cal_scenario, mode)
        if cal is not None:
            # the Zeeman spread error moves all corrections together
            shifted = hmw_series(points, _with_z(cal, cal.z_spread + cal.z_sigma, scenario.beam), mode)
            delta = shifted.correction - corr_series.correction
            corr_series = replace(corr_series, cov=corr_series.cov + np.outer(delta, delta))
    return CampaignResult(raw, extract_slope(corr_series, cut), raw_series, corr_series, cal)


def group_points(points):
    """Aggregate reduced points sharing the same (V, I)."""
    groups = defaultdict(list)
    for p in points:
        groups[(p.voltage, p.current)].append(p)
    return [aggregate(v) for _, v in sorted(groups.items())]
