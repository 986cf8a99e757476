"""Reduced quantities built from the per-configuration fringe amplitudes."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace

QUANTITIES = ("V_E", "phi_E", "V_B", "phi_B", "V_EB", "phi_EB")


@dataclass(frozen=True)
class ReducedPoint:
    """Six reduced quantities at one (V, I) with their 1-sigma errors.

    ``sigma`` maps quantity names to standard errors (0 for exact values).
    ``twin`` holds the same quantities at ``-V`` when the scan had six
    configurations.
    """

    voltage: float
    current: float
    V_E: float
    phi_E: float
    V_B: float
    phi_B: float
    V_EB: float
    phi_EB: float
    sigma: dict = field(default_factory=dict)
    series: str = ""
    chi: float = 0.0
    n_scans: int = 1
    outliers: int = 0
    twin: "ReducedPoint | None" = None
    twin_cov: dict = field(default_factory=dict)

    def value(self, name):
        return getattr(self, name)

    def error(self, name):
        return self.sigma.get(name, 0.0)

    def values(self):
        return {q: getattr(self, q) for q in QUANTITIES}

    def with_(self, **changes):
        return replace(self, **changes)


def reduce_amplitudes(amps, voltage, current, series=""):
    """Exact reduced quantities from complex amplitudes keyed by config label.

    ``amps`` must contain ``"0,0"``, ``"V,0"``, ``"V,I"`` and ``"0,I"``;
    with ``"-V,I"`` and ``"-V,0"`` the ``-V`` twin is filled in too.
    """
    for key in ("0,0", "V,0", "V,I", "0,I"):
        if key not in amps:
            raise KeyError(f"missing configuration {key!r}")

    def build(kV0, kVI, v):
        a00, aV0, aVI, a0I = amps["0,0"], amps[kV0], amps[kVI], amps["0,I"]
        return ReducedPoint(
            voltage=v,
            current=current,
            V_E=abs(aV0) / abs(a00),
            phi_E=cmath.phase(aV0 / a00),
            V_B=abs(a0I) / abs(a00),
            phi_B=cmath.phase(a0I / a00),
            V_EB=abs(aVI) * abs(a00) / (abs(aV0) * abs(a0I)),
            phi_EB=cmath.phase(aVI * a00 / (aV0 * a0I)),
            series=series,
        )

    point = build("V,0", "V,I", voltage)
    if "-V,I" in amps and "-V,0" in amps:
        point = point.with_(twin=build("-V,0", "-V,I", -voltage))
    return point


def wrap(phase):
    """Map a phase to (-pi, pi]."""
    w = math.remainder(phase, 2 * math.pi)
    return math.pi if w == -math.pi else w
