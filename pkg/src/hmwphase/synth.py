"""Synthetic interleaved fringe scans.

A scan sweeps the reference phase over a few fringes while the field
configurations are cycled with a fixed dwell.  Per-configuration fringe
amplitudes come from the oracle (default) or the analytic model.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import predict
from .oracle import N_VELOCITY, complex_amplitude
from .physics import RUN_LABELS, run_configurations

BIN_WIDTH = 0.1
SCAN_DURATION = 20.0
N_FRINGES = 4.0
DWELL_BINS = 3

#: Minimum share of the bins every configuration must receive.
MIN_CONFIG_SHARE = 0.15

#: Ratios closer than this to p/q with q <= 4 count as commensurate.
COMMENSURATE_TOL = 0.02


@dataclass(frozen=True)
class Schedule:
    """Configuration index of every bin, plus how the dwell was chosen."""

    index: np.ndarray
    dwell_bins: int
    adjusted: bool = False
    note: str = ""


def _near_small_rational(x, qmax=4, tol=COMMENSURATE_TOL):
    f = Fraction(x).limit_denominator(qmax)
    return abs(x - float(f)) < tol


def schedule(n_configs, duration, bin_width=BIN_WIDTH, dwell_bins=DWELL_BINS, fringe_period=None):
    """Cyclic configuration schedule for one scan.

    Parameters
    ----------
    n_configs : {4, 6}
    duration : float
        Scan length in seconds.
    fringe_period : float, optional
        Sweep period of the reference phase; defaults to a four-fringe
        sweep.  When the config cycle and the fringe period are nearly
        commensurate the dwell is lengthened by one bin at a time.
    """
    if n_configs not in (4, 6):
        raise ValueError("n_configs must be 4 or 6")
    if dwell_bins < 1:
        raise ValueError("dwell_bins must be >= 1")
    n_bins = int(round(duration / bin_width))
    fringe_period = fringe_period or duration / N_FRINGES
    note, adjusted = "", False
    dwell = dwell_bins
    while _near_small_rational(fringe_period / (n_configs * dwell * bin_width)):
        dwell += 1
        adjusted = True
    if adjusted:
        note = f"dwell changed from {dwell_bins} to {dwell} bins to avoid a commensurate cycle"
    if n_bins < n_configs * dwell:
        raise ValueError(
            f"scan of {duration:g} s is shorter than one configuration cycle "
            f"({n_configs * dwell * bin_width:g} s)"
        )
    index = (np.arange(n_bins) // dwell) % n_configs
    share = np.bincount(index, minlength=n_configs) / n_bins
    if share.min() < MIN_CONFIG_SHARE:
        raise ValueError(
            f"configuration share {share.min():.3f} below {MIN_CONFIG_SHARE}; lengthen the scan"
        )
    index.setflags(write=False)
    return Schedule(index, dwell, adjusted, note)


@dataclass(frozen=True)
class FringeScan:
    """One interleaved scan: per-bin time, reference phase, configuration and counts."""

    t: np.ndarray
    ref_phase: np.ndarray
    config: np.ndarray
    counts: np.ndarray
    configs: tuple
    voltage: float
    current: float
    bin_width: float = BIN_WIDTH
    series: str = ""
    seed: tuple = ()
    truth: dict = field(default_factory=dict, compare=False)

    @property
    def duration(self):
        return len(self.t) * self.bin_width

    @property
    def labels(self):
        return RUN_LABELS[: len(self.configs)]

    def bin_labels(self):
        return [RUN_LABELS[k] for k in self.config]

    def __eq__(self, other):
        if not isinstance(other, FringeScan):
            return NotImplemented
        return (
            self.configs == other.configs
            and self.voltage == other.voltage
            and self.current == other.current
            and self.bin_width == other.bin_width
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("t", "ref_phase", "config", "counts")
            )
        )

    __hash__ = None


def config_amplitudes(scenario, voltage, current, n_configs=6, source="exact"):
    """Complex amplitude of every configuration, relative to zero field.

    ``source`` is ``"exact"`` (oracle) or ``"model"``.
    """
    configs = run_configurations(voltage, current, n_configs)
    n_y = len(scenario.profiles.y)
    if source == "exact":
        raw = [complex_amplitude(c, scenario, n_y, N_VELOCITY) for c in configs]
    elif source == "model":
        raw = []
        for c in configs:
            p = predict(c, scenario)
            raw.append(cmath.rect(p.visibility, p.phase))
    else:
        raise ValueError(f"unknown amplitude source {source!r}")
    return configs, raw


def anomalous_phase(voltage, current, scenario):
    """Phenomenological V-odd phase, present only when the coil is on."""
    if current == 0:
        return 0.0
    return scenario.anomalous_a * voltage + scenario.anomalous_b * voltage**3


def scan_rng(seed):
    """Generator for one scan; ``seed`` is an int or a tuple of ints."""
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def synthesize_scan(
    scenario,
    voltage,
    current,
    seed,
    n_configs=6,
    duration=SCAN_DURATION,
    bin_width=BIN_WIDTH,
    n_fringes=N_FRINGES,
    t_start=0.0,
    amplitudes=None,
    source="exact",
    series="",
):
    """Simulate one scan of ``n_configs`` interleaved configurations.

    Parameters
    ----------
    amplitudes : tuple, optional
        ``(configs, complex amplitudes)`` as from :func:`config_amplitudes`;
        pass it to avoid recomputing the oracle for every scan of a run.
    t_start : float
        Absolute start time, which sets the phase of the slow drift.

    Notes
    -----
    Amplitude moduli multiply the base visibility ``V0``; the (0,0)
    configuration therefore shows ``V0`` times the laboratory-field
    dephasing factor.
    """
    rng = scan_rng(seed)
    sched = schedule(n_configs, duration, bin_width, fringe_period=duration / n_fringes)
    configs, amps = amplitudes or config_amplitudes(scenario, voltage, current, n_configs, source)
    if len(configs) != n_configs:
        raise ValueError("amplitudes do not match n_configs")
    beam, noise = scenario.beam, scenario.noise

    n = len(sched.index)
    t = (np.arange(n) + 0.5) * bin_width
    ref = 2 * np.pi * n_fringes * t / duration
    start = rng.uniform(0, 2 * np.pi)
    phi_d = start + ref + scenario.drift(t_start + t)

    vis = np.empty(len(configs))
    phase = np.empty(len(configs))
    for k, (c, a) in enumerate(zip(configs, amps)):
        vis[k] = beam.V0 * abs(a)
        phase[k] = cmath.phase(a) + anomalous_phase(c.voltage, c.current, scenario)
    if np.any(vis > 1):
        raise ValueError("visibility above 1 gives a negative count rate")

    mean = beam.rate * bin_width * (1 + vis[sched.index] * np.cos(phi_d + phase[sched.index]))
    if noise.poisson:
        counts = rng.poisson(mean)
        if noise.fano > 1:
            excess = rng.normal(0.0, np.sqrt((noise.fano - 1) * mean))
            counts = np.maximum(np.rint(counts + excess), 0).astype(np.int64)
    else:
        counts = mean

    truth = {"start_phase": start, "visibility": vis, "phase": phase, "schedule_note": sched.note}
    for arr in (t, ref, counts):
        arr.setflags(write=False)
    return FringeScan(
        t=t,
        ref_phase=ref,
        config=sched.index,
        counts=counts,
        configs=tuple(configs),
        voltage=float(voltage),
        current=float(current),
        bin_width=bin_width,
        series=series,
        seed=tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),),
        truth=truth,
    )
