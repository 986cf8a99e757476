"""Command-line pipeline: ``hmwphase <command> [options]``.

Exit codes: 0 success, 2 schema, 3 fit non-convergence, 4 oracle
non-convergence, 5 I/O.  Files written by a failing command are removed.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    CURRENT_CUT,
    AnalysisError,
    ZeemanPoint,
    compensator_only_fit,
    fit_stark_calibration,
    fit_visibility_polynomial,
    global_zeeman_fit,
    synthetic_stark_data,
    synthetic_zeeman_dataset,
)
from .fitting import FitError, aggregate, fit_scan, reduce
from .model import CollapseWarning, predict
from .oracle import brute_force_signal, check_convergence
from .physics import QuadratureError, FieldConfiguration
from .pipeline import extract_hmw, simulate_run, visibility_data, _map
from .plotting import FIGURES, FigureData, Series, figure_data, render_png, write_figure
from .storage import (
    SchemaError,
    StorageError,
    data_path,
    parse_manifest,
    parse_scenario,
    read_fits,
    read_reduced,
    read_scan,
    read_table,
    write_fits,
    write_reduced,
    write_scan,
    write_table,
)

log = logging.getLogger("hmwphase")

OUT_ENV = "HMWPHASE_OUT"

EXIT_OK, EXIT_SCHEMA, EXIT_FIT, EXIT_ORACLE, EXIT_IO = 0, 2, 3, 4, 5


class Outputs:
    """Paths written by the running command, removed again on failure."""

    def __init__(self, root):
        self.root = Path(root)
        self.paths = []

    def __call__(self, *parts):
        p = self.root.joinpath(*parts)
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _png(fig, out, args):
    """Render a command's report figure next to its CSV."""
    if not args.no_png:
        render_png(fig, out(f"{fig.name}.png"))


def _scenario(args):
    return parse_scenario(args.scenario or data_path("baseline.yaml"))


# ---------------------------------------------------------------------------
# Commands


def _simulate_job(job):
    scenario, manifest, i, source = job
    return simulate_run(scenario, manifest, i, source)


def cmd_simulate(args, out):
    manifest = parse_manifest(args.manifest or data_path("quick.yaml"))
    scenario = parse_scenario(args.scenario) if args.scenario else parse_scenario(manifest.scenario)
    if args.seed is not None:
        manifest = replace(manifest, seed=args.seed)
    if args.configs:
        manifest = replace(manifest, runs=tuple(replace(r, n_configs=args.configs) for r in manifest.runs))
    jobs = [(scenario, manifest, i, args.oracle) for i in range(len(manifest.runs))]
    n = 0
    for i, scans in enumerate(_map(_simulate_job, jobs, args.workers)):
        for k, scan in enumerate(scans):
            write_scan(out("scans", f"{i:03d}_{k:04d}.csv"), scan)
            n += 1
    log.info("wrote %d scans to %s", n, out.root / "scans")


def _fit_job(path):
    scan = read_scan(path)
    return path.stem, fit_scan(scan)


def cmd_fit(args, out):
    paths = sorted((out.root / "scans").glob("*.csv"))
    if not paths:
        raise StorageError(f"no scan files in {out.root / 'scans'}")
    fits = _map(_fit_job, paths, args.workers)
    write_fits(out("fits.csv"), out("fits_cov.csv"), fits)
    log.info("fitted %d scans", len(fits))


def cmd_reduce(args, out):
    fits = read_fits(out.root / "fits.csv", out.root / "fits_cov.csv")
    per_scan = [reduce(f) for _, f in fits]
    groups = defaultdict(list)
    for p in per_scan:
        groups[(p.series, p.voltage, p.current)].append(p)
    points = [aggregate(v) for v in groups.values()]
    write_reduced(out("reduced_scans.csv"), per_scan)
    write_reduced(out("reduced.csv"), points)
    log.info("reduced %d scans into %d points", len(per_scan), len(points))


def cmd_extract_hmw(args, out):
    points = read_reduced(out.root / "reduced.csv")
    scenario = _scenario(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CollapseWarning)
        res = extract_hmw(
            points,
            scenario,
            cut=args.cut_amps,
            correction=not args.no_correction,
            calibrate=not args.no_self_calibration,
        )
    rows, summary = [], []
    for tag, result, series in (("raw", res.raw, res.series_raw), ("corrected", res.corrected, res.series_corrected)):
        if result is None:
            continue
        for V, I, y, s, c in zip(series.voltage, series.current, series.value, series.sigma, series.correction):
            rows.append((tag, V, I, V * I, y, s, c))
        summary.append((tag, result.alpha, result.alpha_sigma, result.beta, result.beta_sigma,
                        result.chi2, result.dof, result.n_points, result.cut))
    units = {"voltage": "V", "current": "A", "VI": "V A", "DB_phi_EB": "rad", "sigma": "rad", "correction": "rad"}
    write_table(out("hmw_series.csv"), "hmw_series",
                ("series", "voltage", "current", "VI", "DB_phi_EB", "sigma", "correction"), rows, units)
    meta = {"injected_alpha": repr(scenario.alpha_hmw)}
    if res.calibration is not None:
        meta["z_spread"] = f"{res.calibration.z_spread!r} +- {res.calibration.z_sigma!r}"
    write_table(out("hmw_fit.csv"), "hmw_fit",
                ("series", "alpha", "alpha_sigma", "beta", "beta_sigma", "chi2", "dof", "n_points", "cut"),
                summary, {"alpha": "rad/(V A)", "alpha_sigma": "rad/(V A)", "beta": "rad", "beta_sigma": "rad"},
                meta)
    fig = FigureData("hmw_fit", "I-odd joint-field phase against V I", "V |I|", "D_B phi_EB", "V A", "rad")
    for tag, result, series in (("raw", res.raw, res.series_raw), ("corrected", res.corrected, res.series_corrected)):
        if result is None:
            continue
        fig.series.append(Series(tag, series.x, series.value, series.sigma, "points"))
        x = np.array([series.x.min(), series.x.max()])
        fig.series.append(Series(f"{tag} fit", x, result.alpha * x + result.beta))
    _png(fig, out, args)
    for tag, a, s, *_ in summary:
        print(f"{tag}: alpha = {a:.4e} +- {s:.2e} rad/(V A)")


def _read_zeeman(path):
    _, cols, rows = read_table(path, "zeeman_data")
    idx = {c: i for i, c in enumerate(cols)}
    try:
        return [ZeemanPoint(r[idx["series"]], *(float(r[idx[c]]) for c in ("current", "compensator", "re", "im", "sigma")))
                for r in rows]
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed Zeeman data: {exc}") from exc


def cmd_calibrate_zeeman(args, out):
    scenario = _scenario(args)
    if args.input:
        points = _read_zeeman(args.input)
    else:
        rng = np.random.default_rng(args.seed or 0)
        points = synthetic_zeeman_dataset(scenario.zeeman, rng, chi=scenario.chi)
        write_table(out("zeeman_data.csv"), "zeeman_data",
                    ("series", "current", "compensator", "re", "im", "sigma"),
                    [(p.series, p.current, p.compensator, p.re, p.im, p.sigma) for p in points],
                    {"current": "A", "compensator": "A"})
    fit = global_zeeman_fit(points)
    rows = [("global", k, getattr(fit.calibration, k), fit.sigma[k]) for k in fit.sigma]
    try:
        comp = compensator_only_fit(points)
        rows += [("compensator_only", k, getattr(comp.calibration, k), comp.sigma[k]) for k in comp.sigma]
    except AnalysisError as exc:
        log.warning("compensator-only fit skipped: %s", exc)
    write_table(out("zeeman_fit.csv"), "zeeman_fit", ("fit", "parameter", "value", "sigma"), rows,
                meta={"chi2": repr(fit.chi2), "dof": fit.dof})
    fig = FigureData("zeeman_fit", "Global Zeeman fit", "I", "V_B", "A", "1")
    from .analysis import complex_vb

    pts = sorted(points, key=lambda p: (p.compensator, p.current))
    fig.series.append(Series("Re data", [p.current for p in pts], [p.re for p in pts], [p.sigma for p in pts], "points"))
    fig.series.append(Series("Im data", [p.current for p in pts], [p.im for p in pts], [p.sigma for p in pts], "points"))
    from .physics import compensator_current

    I = np.linspace(-25, 25, 201)
    vb = complex_vb(I, [compensator_current(i) for i in I], fit.calibration, 0.0)
    fig.series.append(Series("Re fit (compensator policy)", I, vb.real))
    _png(fig, out, args)
    for _, k, v, s in rows[: len(fit.sigma)]:
        print(f"{k} = {v:.5g} +- {s:.2g}")


def _read_stark(path):
    _, cols, rows = read_table(path, "stark_data")
    idx = {c: i for i, c in enumerate(cols)}
    data = defaultdict(list)
    try:
        for r in rows:
            data[r[idx["arm"]]].append([float(r[idx[c]]) for c in ("V", "vis", "sigma_vis", "phase", "sigma_phase")])
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed Stark data: {exc}") from exc
    out = {}
    for arm, v in data.items():
        a = np.array(v)
        out[arm] = (a[:, 0] ** 2, a[:, 1], a[:, 2], a[:, 3], a[:, 4])
    return out


def cmd_calibrate_stark(args, out):
    scenario = _scenario(args)
    if args.input:
        data = _read_stark(args.input)
    else:
        rng = np.random.default_rng(args.seed or 0)
        data = synthetic_stark_data(scenario.stark, scenario.beam.S_par, np.linspace(20, 300, 15), rng)
        rows = []
        for arm, (V2, vis, svis, ph, sph) in data.items():
            rows += [(arm, v, a, b, c, d) for v, a, b, c, d in zip(np.sqrt(V2), vis, svis, ph, sph)]
        write_table(out("stark_data.csv"), "stark_data", ("arm", "V", "vis", "sigma_vis", "phase", "sigma_phase"),
                    rows, {"V": "V", "phase": "rad", "sigma_phase": "rad"})
    fit = fit_stark_calibration(data, vm=scenario.beam.vm)
    names = ("S_par", "phi_u_per_V2", "phi_l_per_V2")
    rows = [(k, getattr(fit, k), s) for k, s in zip(names, fit.sigmas)]
    write_table(out("stark_fit.csv"), "stark_fit", ("parameter", "value", "sigma"), rows,
                {"value": "1 | rad/V^2"})
    fig = FigureData("stark_fit", "Single-capacitor Stark calibration", "V^2", "visibility / phase", "V^2", "1 | rad")
    from .analysis import stark_response

    for arm, (V2, vis, svis, ph, sph) in data.items():
        fig.series.append(Series(f"{arm} visibility", V2, vis, svis, "points"))
        fig.series.append(Series(f"{arm} phase", V2, ph, sph, "points"))
        grid = np.linspace(0, V2.max(), 60)
        slope = fit.phi_u_per_V2 if arm == "upper" else fit.phi_l_per_V2
        mv, mp = stark_response(grid, slope, fit.S_par, scenario.beam.vm)
        fig.series.append(Series(f"{arm} visibility fit", grid, mv))
        fig.series.append(Series(f"{arm} phase fit", grid, mp))
    _png(fig, out, args)
    for k, v, s in rows:
        print(f"{k} = {v:.5g} +- {s:.2g}")


def cmd_fit_visibility(args, out):
    points = read_reduced(out.root / "reduced.csv")
    V, VE, s = visibility_data(points)
    poly = fit_visibility_polynomial(V, VE, s)
    rows = [(f"k_V{i + 1}", poly.k[i], poly.sigma[i]) for i in range(4)]
    write_table(out("visibility_fit.csv"), "visibility_fit", ("parameter", "value", "sigma"), rows,
                meta={"chi2": repr(poly.chi2), "dof": poly.dof})
    fig = FigureData("visibility_fit", "E-field relative visibility", "V", "V_E", "V", "1")
    fig.series.append(Series("data", V, VE, s, "points"))
    grid = np.linspace(V.min(), V.max(), 81)
    fig.series.append(Series("polynomial fit", grid, poly(grid)))
    _png(fig, out, args)
    for k, v, e in rows:
        print(f"{k} = {v:.4e} +- {e:.2e}")


def cmd_validate(args, out):
    scenario = _scenario(args)
    voltages = np.array([-800.0, -400.0, 0.0, 400.0, 800.0])
    currents = np.array([-12.0, -6.0, 0.0, 6.0, 12.0])
    check_convergence(FieldConfiguration.with_policy(800.0, 12.0), scenario)
    ref_o = brute_force_signal(FieldConfiguration.with_policy(0.0, 0.0), scenario)
    ref_m = predict(FieldConfiguration.with_policy(0.0, 0.0), scenario)
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CollapseWarning)
        for V in voltages:
            for I in currents:
                cfg = FieldConfiguration.with_policy(V, I)
                o = brute_force_signal(cfg, scenario)
                m = predict(cfg, scenario)
                po = o.argument - ref_o.argument
                pm = m.phase - ref_m.phase
                vo = o.modulus / ref_o.modulus
                vm = m.visibility / ref_m.visibility
                rows.append((V, I, vo, vm, vm - vo, po, pm, float(np.remainder(pm - po + np.pi, 2 * np.pi) - np.pi)))
    r = np.array(rows)
    meta = {"max_abs_dphase": repr(float(np.abs(r[:, 7]).max())), "max_abs_dvis": repr(float(np.abs(r[:, 4]).max()))}
    write_table(out("validate.csv"), "oracle_model_sweep",
                ("voltage", "current", "vis_oracle", "vis_model", "dvis", "phase_oracle", "phase_model", "dphase"),
                rows, {"voltage": "V", "current": "A", "phase_oracle": "rad", "phase_model": "rad", "dphase": "rad"},
                meta)
    fig = FigureData("validate", "Model minus oracle", "I", "phase difference", "A", "rad")
    for V in voltages:
        m = r[:, 0] == V
        fig.series.append(Series(f"V={V:g}", r[m, 1], r[m, 7]))
    _png(fig, out, args)
    print(f"max |dphase| = {float(meta['max_abs_dphase']) * 1e3:.3f} mrad, "
          f"max |dvis| = {float(meta['max_abs_dvis']):.2e}")


def cmd_plot_data(args, out):
    scenario = _scenario(args)
    names = FIGURES if args.figure == "all" else (args.figure,)
    points = None
    reduced = Path(args.reduced) if args.reduced else out.root / "reduced.csv"
    if reduced.exists():
        points = read_reduced(reduced)
    for name in names:
        fig = figure_data(name, scenario, points)
        out("figures", f"{name}.csv")
        if not args.no_png:
            out("figures", f"{name}.png")
        write_figure(fig, out.root / "figures", png=not args.no_png)
        log.info("wrote %s", out.root / "figures" / f"{name}.csv")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "reduce": cmd_reduce,
    "calibrate-zeeman": cmd_calibrate_zeeman,
    "calibrate-stark": cmd_calibrate_stark,
    "fit-visibility": cmd_fit_visibility,
    "extract-hmw": cmd_extract_hmw,
    "validate": cmd_validate,
    "plot-data": cmd_plot_data,
}


# ---------------------------------------------------------------------------
# Parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario YAML (default: shipped baseline)")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./hmw_out)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--workers", type=int, default=1, help="worker processes for scan-level jobs")
    common.add_argument("--no-png", action="store_true", help="skip PNG rendering")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hmwphase", description="HMW phase measurement pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a campaign's scans")
    s.add_argument("--manifest", help="campaign manifest YAML (default: shipped quick campaign)")
    s.add_argument("--configs", type=int, choices=(4, 6), help="override configurations per scan")
    s.add_argument("--oracle", choices=("exact", "model"), default="exact", help="amplitude source")

    sub.add_parser("fit", parents=[common], help="fit every scan in <out>/scans")
    sub.add_parser("reduce", parents=[common], help="reduce fits and aggregate per run")

    s = sub.add_parser("calibrate-zeeman", parents=[common], help="global Zeeman fit")
    s.add_argument("--input", help="zeeman_data CSV (default: synthetic data from the scenario)")
    s = sub.add_parser("calibrate-stark", parents=[common], help="Stark and velocity calibration")
    s.add_argument("--input", help="stark_data CSV (default: synthetic data from the scenario)")

    sub.add_parser("fit-visibility", parents=[common], help="polynomial fit of V_E against V")

    s = sub.add_parser("extract-hmw", parents=[common], help="HMW slope from reduced points")
    s.add_argument("--cut-amps", type=float, default=CURRENT_CUT, help="keep |I| <= cut (A)")
    s.add_argument("--no-correction", action="store_true", help="skip the stray-phase correction")
    s.add_argument("--no-self-calibration", action="store_true",
                   help="use the scenario's dispersion profiles instead of fitting them from the data")

    sub.add_parser("validate", parents=[common], help="oracle against model sweep")

    s = sub.add_parser("plot-data", parents=[common], help="figure-analog tables and PNGs")
    s.add_argument("figure", choices=FIGURES + ("all",))
    s.add_argument("--reduced", help="reduced.csv to overlay (default: <out>/reduced.csv if present)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    out = Outputs(args.out or os.environ.get(OUT_ENV) or "hmw_out")
    try:
        COMMANDS[args.command](args, out)
    except SchemaError as exc:
        code, msg = EXIT_SCHEMA, f"schema error: {exc}"
    except (FitError, AnalysisError) as exc:
        code, msg = EXIT_FIT, f"fit error: {exc}"
    except QuadratureError as exc:
        code, msg = EXIT_ORACLE, f"oracle error: {exc}"
    except (StorageError, OSError) as exc:
        code, msg = EXIT_IO, f"I/O error: {exc}"
    else:
        return EXIT_OK
    out.cleanup()
    print(msg, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
