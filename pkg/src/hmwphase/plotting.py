"""Figure-analog tables (x, y, sigma) and their PNG renderings.

Each figure is built from the model (or the oracle where cheap) for the
given scenario.  When reduced points from a campaign are supplied the
measured values are added as a separate series with error bars.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import complex_vb, fit_visibility_polynomial, parity, parity_at, signed_table, stark_response
from .model import CollapseWarning, predict_reduced
from .oracle import oracle_zeeman_curve
from .physics import compensator_current

FIGURES = ("fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10",
           "fig12", "fig13", "fig14", "fig15", "fig16", "fig17", "fig18")


@dataclass(frozen=True)
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray = None
    kind: str = "line"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        s = np.zeros_like(y) if self.sigma is None else np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma", s)


@dataclass(frozen=True)
class FigureData:
    name: str
    title: str
    xlabel: str
    ylabel: str
    x_unit: str
    y_unit: str
    series: list = field(default_factory=list)

    def get(self, label):
        for s in self.series:
            if s.label == label:
                return s
        raise KeyError(label)

    def rows(self):
        for s in self.series:
            for x, y, e in zip(s.x, s.y, s.sigma):
                yield s.label, s.kind, float(x), float(y), float(e)


# ---------------------------------------------------------------------------
# Model helpers


def _reduced(V, I, scenario):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CollapseWarning)
        return predict_reduced(V, I, scenario)


def _signed(V, I, scenario):
    """Reduced predictions at the four sign pairs of (|V|, |I|)."""
    return {(sv, si): _reduced(sv * V, si * I, scenario) for sv in (1, -1) for si in (1, -1)}


def _vprime(pred):
    """AC-corrected ``V'_EB`` at the four sign pairs."""
    out = {}
    for (sv, si), p in pred.items():
        other = pred[(-sv, si)]
        d_e = sv * (p.V_E - other.V_E) / 2
        out[(sv, si)] = p.V_EB / (1 - sv * d_e)
    return out


def _model_parity(V, I, scenario, quantity, tag):
    pred = _signed(V, I, scenario)
    vals = _vprime(pred) if quantity == "V_EB'" else {k: getattr(p, quantity) for k, p in pred.items()}
    return parity(vals, V, I)[tag].value


def _magnitudes(points):
    keys = set()
    for p in points or ():
        keys.add((abs(p.voltage), abs(p.current)))
    return sorted(keys)


def _data_parity(points, quantity, tag, select=lambda V, I: True):
    """Parity combination of measured ``phi_EB`` or ``V'_EB`` at every complete (|V|, |I|)."""
    rows = []
    for V, I in _magnitudes(points):
        if I == 0 or not select(V, I):
            continue
        try:
            if quantity == "V_EB'":
                veb, _ = signed_table(points, "V_EB")
                ve, _ = signed_table(points, "V_E")
                vals = {}
                for sv in (1, -1):
                    d_e = sv * (ve[(sv * V, I)][0] - ve[(-sv * V, I)][0]) / 2
                    for si in (1, -1):
                        v, s = veb[(sv * V, si * I)]
                        vals[(sv, si)] = (v / (1 - sv * d_e), s)
                c = parity(vals, V, I)[tag]
            else:
                c = parity_at(points, quantity, V, I)[tag]
        except KeyError:
            continue
        rows.append((V, I, c.value, c.sigma))
    return np.array(rows).reshape(-1, 4)


def _data_signed(points, quantity):
    table, _ = signed_table(points or (), quantity)
    rows = [(V, I, v, s) for (V, I), (v, s) in sorted(table.items())]
    return np.array(rows).reshape(-1, 4)


# ---------------------------------------------------------------------------
# Figures


def fig4(scenario, points=None):
    V = np.linspace(0, 800, 41)
    fig = FigureData("fig4", "Single-capacitor Stark response", "V^2", "visibility / phase", "V^2", "1 | rad")
    for arm in ("upper", "lower"):
        vis, ph = stark_response(V**2, scenario.stark.slope(arm), scenario.beam.S_par, scenario.beam.vm)
        fig.series.append(Series(f"{arm} visibility", V**2, vis))
        fig.series.append(Series(f"{arm} phase", V**2, ph))
    return fig


def fig5(scenario, points=None):
    V = np.linspace(-800, 800, 33)
    y = [_reduced(v, 0.0, scenario).phi_E for v in V]
    fig = FigureData("fig5", "E-field phase against V^2", "V^2", "phi_E", "V^2", "rad")
    fig.series.append(Series("model", V**2, y))
    d = _data_signed(points, "phi_E")
    if len(d):
        fig.series.append(Series("data", d[:, 0] ** 2, d[:, 2], d[:, 3], "points"))
    return fig


def fig6(scenario, points=None):
    V = np.linspace(50, 800, 16)
    y = [(_reduced(v, 0.0, scenario).phi_E - _reduced(-v, 0.0, scenario).phi_E) / 2 for v in V]
    fig = FigureData("fig6", "V-odd part of the E-field phase", "|V|", "D_E phi_E", "V", "rad")
    fig.series.append(Series("model", V, y))
    d = _data_signed(points, "phi_E")
    rows = []
    table = {(r[0], r[1]): (r[2], r[3]) for r in d}
    for (v, i), (f, s) in table.items():
        if v > 0 and (-v, i) in table:
            g, t = table[(-v, i)]
            rows.append((v, (f - g) / 2, np.hypot(s, t) / 2))
    if rows:
        r = np.array(sorted(rows))
        fig.series.append(Series("data", r[:, 0], r[:, 1], r[:, 2], "points"))
    return fig


def fig7(scenario, points=None):
    V = np.linspace(-800, 800, 33)
    y = [_reduced(v, 0.0, scenario).V_E for v in V]
    fig = FigureData("fig7", "E-field relative visibility", "V", "V_E", "V", "1")
    fig.series.append(Series("model", V, y))
    d = _data_signed(points, "V_E")
    if len(d):
        fig.series.append(Series("data", d[:, 0], d[:, 2], d[:, 3], "points"))
        if len(np.unique(d[:, 0])) >= 4:
            poly = fit_visibility_polynomial(d[:, 0], d[:, 2], d[:, 3])
            fig.series.append(Series("polynomial fit", V, poly(V)))
    return fig


def fig8(scenario, points=None):
    IC = np.linspace(-1.0, 1.0, 41)
    vb = complex_vb(np.zeros_like(IC), IC, scenario.zeeman, scenario.chi)
    fig = FigureData("fig8", "Compensator-only relative visibility", "I_C", "V_B", "A", "1")
    fig.series.append(Series("Re V_B", IC, vb.real))
    fig.series.append(Series("Im V_B", IC, vb.imag))
    return fig


def fig9(scenario, points=None):
    I = np.linspace(-12, 12, 49)
    vb = complex_vb(I, np.zeros_like(I), scenario.zeeman, scenario.chi)
    fig = FigureData("fig9", f"HMW-coil relative visibility (chi = {scenario.chi:g})", "I", "V_B", "A", "1")
    fig.series.append(Series("Re V_B", I, vb.real))
    fig.series.append(Series("Im V_B", I, vb.imag))
    return fig


def fig10(scenario, points=None):
    I = np.linspace(0, 25, 51)
    vb = oracle_zeeman_curve(I, scenario)
    fig = FigureData("fig10", "Relative visibility with the compensator", "I", "V_B", "A", "1 | rad")
    fig.series.append(Series("Re V_B", I, vb.real))
    fig.series.append(Series("Im V_B", I, vb.imag))
    fig.series.append(Series("phase", I, np.angle(vb)))
    fig.series.append(Series("I_C", I, [compensator_current(i) for i in I]))
    return fig


def fig12(scenario, points=None):
    fig = FigureData("fig12", "Joint-field phase against V I", "V I", "phi_EB", "V A", "rad")
    for V in (400.0, 600.0, 800.0):
        for sv in (1, -1):
            I = np.linspace(-16, 16, 33)
            I = I[I != 0]
            y = [_reduced(sv * V, i, scenario).phi_EB for i in I]
            fig.series.append(Series(f"model V={sv * V:+g}", sv * V * I, y))
    x = np.linspace(-800 * 16, 800 * 16, 2)
    fig.series.append(Series("HMW phase", x, scenario.alpha_hmw * x))
    d = _data_signed(points, "phi_EB")
    if len(d):
        fig.series.append(Series("data", d[:, 0] * d[:, 1], d[:, 2], d[:, 3], "points"))
    return fig


def _vs_current(name, title, ylabel, quantity, tag, V_values, scenario, points, I_max=16.0, unit="rad"):
    fig = FigureData(name, title, "|I|", ylabel, "A", unit)
    I = np.linspace(1, I_max, 31)
    for V in V_values:
        fig.series.append(Series(f"model V={V:g}", I, [_model_parity(V, i, scenario, quantity, tag) for i in I]))
    d = _data_parity(points, quantity, tag, lambda v, i: v in V_values)
    if len(d):
        for V in V_values:
            m = d[:, 0] == V
            if m.any():
                fig.series.append(Series(f"data V={V:g}", d[m, 1], d[m, 2], d[m, 3], "points"))
    return fig


def _vs_voltage(name, title, ylabel, quantity, tag, I_values, scenario, points, unit="rad"):
    fig = FigureData(name, title, "|V|", ylabel, "V", unit)
    V = np.linspace(50, 800, 31)
    for I in I_values:
        fig.series.append(Series(f"model I={I:g}", V, [_model_parity(v, I, scenario, quantity, tag) for v in V]))
    d = _data_parity(points, quantity, tag, lambda v, i: i in I_values)
    if len(d):
        for I in I_values:
            m = d[:, 1] == I
            if m.any():
                fig.series.append(Series(f"data I={I:g}", d[m, 0], d[m, 2], d[m, 3], "points"))
    return fig


def fig13(scenario, points=None):
    return _vs_current("fig13", "V-odd corrected visibility at 800 V", "D_E V'_EB",
                       "V_EB'", "M_B D_E", (800.0,), scenario, points, I_max=20.0, unit="1")


def fig14(scenario, points=None):
    return _vs_voltage("fig14", "V-odd corrected visibility at 19 A", "D_E V'_EB",
                       "V_EB'", "M_B D_E", (19.0,), scenario, points, unit="1")


def fig15(scenario, points=None):
    return _vs_current("fig15", "I-even V-odd phase", "M_B D_E phi_EB",
                       "phi_EB", "M_B D_E", (400.0, 600.0, 800.0), scenario, points)


def fig16(scenario, points=None):
    return _vs_voltage("fig16", "I-even V-odd phase", "M_B D_E phi_EB",
                       "phi_EB", "M_B D_E", (4.0, 8.0, 12.0), scenario, points)


def fig17(scenario, points=None):
    fig = FigureData("fig17", "I-odd V-even phase against V I", "V |I|", "D_B M_E phi_EB", "V A", "rad")
    for V in (400.0, 600.0, 800.0):
        I = np.linspace(1, 16, 16)
        y = [_model_parity(V, i, scenario, "phi_EB", "D_B M_E") for i in I]
        fig.series.append(Series(f"model V={V:g}", V * I, y))
    d = _data_parity(points, "phi_EB", "D_B M_E")
    if len(d):
        fig.series.append(Series("data", d[:, 0] * d[:, 1], d[:, 2], d[:, 3], "points"))
    return fig


def fig18(scenario, points=None):
    return _vs_current("fig18", "V-even I-even phase at 800 V", "M_E phi_EB",
                       "phi_EB", "M_E", (800.0,), scenario, points, I_max=20.0)


_BUILDERS = {name: globals()[name] for name in FIGURES}


def figure_data(name, scenario, points=None):
    """Build one figure analog by name (``"fig4"`` ... ``"fig18"``)."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}") from None
    return builder(scenario, points)


# ---------------------------------------------------------------------------
# Output


def render_png(fig, path):
    """Draw a figure analog: lines for model curves, error bars for data."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    f, ax = plt.subplots(figsize=(6.0, 4.2), dpi=120)
    for s in fig.series:
        if s.kind == "points":
            ax.errorbar(s.x, s.y, yerr=s.sigma, fmt="o", ms=3, capsize=2, label=s.label)
        else:
            ax.plot(s.x, s.y, "-", lw=1.2, label=s.label)
    ax.set_xlabel(f"{fig.xlabel} ({fig.x_unit})")
    ax.set_ylabel(f"{fig.ylabel} ({fig.y_unit})")
    ax.set_title(fig.title, fontsize=10)
    ax.axhline(0, color="0.6", lw=0.5)
    if len(fig.series) > 1:
        ax.legend(fontsize=7, frameon=False)
    f.tight_layout()
    tmp = Path(path).with_suffix(".tmp.png")
    f.savefig(tmp)
    plt.close(f)
    tmp.replace(path)


def write_figure(fig, out_dir, png=True):
    """Write ``<name>.csv`` and ``<name>.png`` to ``out_dir``; returns the paths."""
    from .storage import write_table

    out_dir = Path(out_dir)
    csv_path = out_dir / f"{fig.name}.csv"
    write_table(
        csv_path,
        "figure_data",
        ("series", "kind", "x", "y", "sigma"),
        fig.rows(),
        {"x": fig.x_unit, "y": fig.y_unit, "sigma": fig.y_unit},
        {"figure": fig.name, "title": fig.title, "x": fig.xlabel, "y": fig.ylabel},
    )
    paths = [csv_path]
    if png:
        png_path = out_dir / f"{fig.name}.png"
        render_png(fig, png_path)
        paths.append(png_path)
    return paths
