"""File formats: scenario and manifest YAML, scan records, result tables.

Every file carries a ``format_version``.  Tables are comma separated with
``#`` header lines giving the version, the kind of table and the units.
Writes go to a temporary file that is renamed into place.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .fitting import ScanFit
from .physics import (
    RUN_LABELS,
    BeamModel,
    DispersionProfiles,
    DriftModel,
    NoiseModel,
    Scenario,
    StarkCalibration,
    ZeemanCalibration,
    run_configurations,
)
from .pipeline import CampaignManifest, RunSpec
from .reduced import QUANTITIES, ReducedPoint
from .synth import FringeScan

FORMAT_VERSION = 1


class SchemaError(ValueError):
    """An input file violates its schema or holds unphysical values."""


class StorageError(OSError):
    """A file could not be read or written."""


# ---------------------------------------------------------------------------
# Schemas


def _obj(props, required=()):
    return {
        "type": "object",
        "properties": props,
        "additionalProperties": False,
        "required": list(required),
    }


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCENARIO_SCHEMA = _obj(
    {
        "format_version": {"const": FORMAT_VERSION},
        "zeeman": _obj({k: _NUM for k in ("J0", "I0", "A_J1", "A_J2", "A_J3", "I0C", "A_J1C")}),
        "stark": _obj(
            {
                "phi_u_per_V2": _NUM,
                "phi_l_per_V2": _NUM,
                "L_eff": _POS,
                "h_u": _POS,
                "h_l": _POS,
                "contact_u": _NUM,
                "contact_l": _NUM,
            }
        ),
        "beam": _obj(
            {
                "vm": _POS,
                "S_par": {"type": "number", "exclusiveMinimum": 1},
                "rate": _POS,
                "V0": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "y_height": _POS,
                "n_y": {"type": "integer", "minimum": 3},
            }
        ),
        "profiles": _obj({k: _NUM for k in ("d_spread", "g_spread", "c_spread", "z_spread")}),
        "couplings": _obj(
            {
                k: _NUM
                for k in (
                    "alpha_hmw",
                    "ac_coupling",
                    "lab_projection",
                    "hmw_projection",
                    "stark_residual_per_V2",
                )
            }
        ),
        "chi": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
        "drift": _obj({"rate": _NUM, "amplitude": _NUM, "period": _POS, "phase": _NUM}),
        "noise": _obj({"poisson": {"type": "boolean"}, "fano": {"type": "number", "minimum": 1}}),
        "anomalous": _obj({"a": _NUM, "b": _NUM}),
        "zeeman_velocity_average": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0},
    },
    required=("format_version",),
)

MANIFEST_SCHEMA = _obj(
    {
        "format_version": {"const": FORMAT_VERSION},
        "scenario": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "duration": _POS,
        "bin_width": _POS,
        "out": {"type": "string"},
        "runs": {
            "type": "array",
            "minItems": 1,
            "items": _obj(
                {
                    "V": {"type": "number", "not": {"const": 0}},
                    "I": {"type": "number", "not": {"const": 0}},
                    "n_scans": {"type": "integer", "minimum": 1},
                    "n_configs": {"enum": [4, 6]},
                    "series": {"type": "string"},
                },
                required=("V", "I"),
            ),
        },
    },
    required=("format_version", "scenario", "runs"),
)


def _line_of(node, path):
    """Line (1-based) of the YAML node at ``path``, or of the deepest parent found."""
    line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    node = v
                    line = k.start_mark.line + 1
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _load_yaml(path, schema):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise SchemaError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        data = {}
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            path_ = list(e.absolute_path)
            if e.validator == "additionalProperties" and isinstance(e.instance, dict):
                extra = [k for k in e.instance if k not in e.schema.get("properties", {})]
                path_ += extra[:1]
            where = ".".join(str(p) for p in path_) or "<root>"
            line = _line_of(node, path_) if node is not None else 1
            msgs.append(f"{path}:{line}: {where}: {e.message}")
        raise SchemaError("\n".join(msgs))
    return data


# ---------------------------------------------------------------------------
# Scenario


def scenario_from_dict(data):
    """Build a :class:`Scenario` from validated YAML data (defaults fill gaps)."""
    try:
        beam = BeamModel(**data.get("beam", {}))
        prof = data.get("profiles")
        if prof is None:
            profiles = None
        else:
            profiles = DispersionProfiles.ramps(beam, **prof)
        kw = dict(
            zeeman=ZeemanCalibration(**data.get("zeeman", {})),
            stark=StarkCalibration(**data.get("stark", {})),
            beam=beam,
            profiles=profiles,
            drift=DriftModel(**data.get("drift", {})),
            noise=NoiseModel(**data.get("noise", {})),
        )
        kw.update(data.get("couplings", {}))
        if "chi" in data:
            kw["chi"] = data["chi"]
        anom = data.get("anomalous", {})
        kw["anomalous_a"] = anom.get("a", 0.0)
        kw["anomalous_b"] = anom.get("b", 0.0)
        for k in ("zeeman_velocity_average", "seed"):
            if k in data:
                kw[k] = data[k]
        return Scenario(**kw)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid scenario: {exc}") from exc


def parse_scenario(path):
    """Read and validate a scenario file.

    Raises
    ------
    SchemaError
        With ``file:line: field: message`` diagnostics.
    StorageError
        If the file cannot be read.
    """
    data = _load_yaml(path, SCENARIO_SCHEMA)
    try:
        return scenario_from_dict(data)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def parse_manifest(path):
    """Read a campaign manifest; the scenario path is resolved next to it."""
    path = Path(path)
    data = _load_yaml(path, MANIFEST_SCHEMA)
    scen = (path.parent / data["scenario"]).resolve()
    if not scen.exists():
        raise SchemaError(f"{path}: scenario file {data['scenario']!r} does not exist")
    runs = tuple(
        RunSpec(
            float(r["V"]),
            float(r["I"]),
            int(r.get("n_scans", 100)),
            int(r.get("n_configs", 6)),
            r.get("series", f"run{i:03d}"),
        )
        for i, r in enumerate(data["runs"])
    )
    return CampaignManifest(
        runs=runs,
        seed=int(data.get("seed", 0)),
        duration=float(data.get("duration", 20.0)),
        bin_width=float(data.get("bin_width", 0.1)),
        scenario=str(scen),
        out=data.get("out", ""),
    )


def data_path(name):
    """Path of a file shipped in the package data directory."""
    return Path(__file__).parent / "data" / name


# ---------------------------------------------------------------------------
# Atomic writes and tables


def atomic_write(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table(path, kind, columns, rows, units=None, meta=None):
    """Write a CSV table with a versioned header.

    ``units`` maps column names to unit strings; ``meta`` adds ``key: value``
    header lines.
    """
    buf = io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n# kind: {kind}\n")
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {v}\n")
    if units:
        buf.write("# units: " + ", ".join(f"{c}={units[c]}" for c in columns if c in units) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    atomic_write(path, buf.getvalue())


def read_table(path, kind=None):
    """Return ``(meta, columns, rows)`` with rows as lists of strings."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].partition(":")
        meta[key.strip()] = val.strip()
        i += 1
    if meta.get("format_version") != str(FORMAT_VERSION):
        raise SchemaError(f"{path}: unsupported format_version {meta.get('format_version')!r}")
    if kind and meta.get("kind") != kind:
        raise SchemaError(f"{path}: expected a {kind!r} table, found {meta.get('kind')!r}")
    reader = csv.reader(lines[i:])
    try:
        columns = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: missing column header") from None
    return meta, columns, [r for r in reader if r]


# ---------------------------------------------------------------------------
# Scans

SCAN_COLUMNS = ("t", "ref_phase", "config", "counts")
SCAN_UNITS = {"t": "s", "ref_phase": "rad", "config": "label", "counts": "counts"}


def write_scan(path, scan):
    counts = scan.counts
    integer = np.issubdtype(np.asarray(counts).dtype, np.integer)
    rows = zip(
        scan.t.tolist(),
        scan.ref_phase.tolist(),
        scan.bin_labels(),
        (int(c) for c in counts) if integer else (float(c) for c in counts),
    )
    meta = {
        "voltage_V": repr(scan.voltage),
        "current_A": repr(scan.current),
        "n_configs": len(scan.configs),
        "bin_width_s": repr(scan.bin_width),
        "series": scan.series,
        "seed": " ".join(str(s) for s in scan.seed),
        "counts_type": "int" if integer else "float",
    }
    write_table(path, "fringe_scan", SCAN_COLUMNS, rows, SCAN_UNITS, meta)


def read_scan(path):
    meta, cols, rows = read_table(path, "fringe_scan")
    if tuple(cols) != SCAN_COLUMNS:
        raise SchemaError(f"{path}: unexpected columns {cols}")
    try:
        V = float(meta["voltage_V"])
        I = float(meta["current_A"])
        n_cfg = int(meta["n_configs"])
        bw = float(meta["bin_width_s"])
        labels = RUN_LABELS[:n_cfg]
        t = np.array([float(r[0]) for r in rows])
        ref = np.array([float(r[1]) for r in rows])
        cfg = np.array([labels.index(r[2]) for r in rows])
        if meta.get("counts_type", "int") == "int":
            counts = np.array([int(r[3]) for r in rows], dtype=np.int64)
        else:
            counts = np.array([float(r[3]) for r in rows])
        seed = tuple(int(s) for s in meta.get("seed", "").split())
    except (KeyError, ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed scan record: {exc}") from exc
    for a in (t, ref, cfg, counts):
        a.setflags(write=False)
    return FringeScan(
        t=t,
        ref_phase=ref,
        config=cfg,
        counts=counts,
        configs=run_configurations(V, I, n_cfg),
        voltage=V,
        current=I,
        bin_width=bw,
        series=meta.get("series", ""),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Fits

FIT_COLUMNS = ("scan", "config", "counts_per_bin", "intensity", "visibility", "phase", "sigma_intensity",
               "sigma_visibility", "sigma_phase", "drift_rate", "chi2_red", "dof",
               "voltage", "current", "bin_width", "series")
FIT_UNITS = {"intensity": "counts/s", "phase": "rad", "sigma_intensity": "counts/s",
             "sigma_phase": "rad", "drift_rate": "rad/s", "voltage": "V", "current": "A",
             "bin_width": "s"}


def write_fits(path, cov_path, fits):
    """Per-configuration fit table plus a long-format covariance table.

    ``fits`` is a sequence of ``(scan_id, ScanFit)``.
    """
    rows, cov_rows = [], []
    for sid, f in fits:
        for lab in f.labels:
            rows.append((sid, lab, float(f.params[f._p(lab, 0)]), f.intensity(lab), f.visibility(lab), f.phase(lab),
                         f.sigma(lab, "intensity"), f.sigma(lab, "visibility"),
                         f.sigma(lab, "phase"), f.drift_rate, f.chi2_red, f.dof,
                         f.voltage, f.current, f.bin_width, f.series))
        n = len(f.params)
        for i in range(n):
            for j in range(i, n):
                cov_rows.append((sid, i, j, float(f.cov[i, j])))
    write_table(path, "scan_fits", FIT_COLUMNS, rows, FIT_UNITS)
    write_table(cov_path, "scan_fit_covariance", ("scan", "i", "j", "cov"), cov_rows)


def read_fits(path, cov_path):
    """Inverse of :func:`write_fits`; returns ``[(scan_id, ScanFit)]`` in file order."""
    _, cols, rows = read_table(path, "scan_fits")
    idx = {c: i for i, c in enumerate(cols)}
    order, per = [], {}
    for r in rows:
        sid = r[idx["scan"]]
        if sid not in per:
            order.append(sid)
            per[sid] = []
        per[sid].append(r)
    covs = {}
    _, _, crows = read_table(cov_path, "scan_fit_covariance")
    for sid, i, j, c in crows:
        covs.setdefault(sid, []).append((int(i), int(j), float(c)))
    out = []
    for sid in order:
        rs = per[sid]
        first = rs[0]
        bw = float(first[idx["bin_width"]])
        labels = tuple(r[idx["config"]] for r in rs)
        p = [float(first[idx["drift_rate"]])]
        for r in rs:
            p += [float(r[idx["counts_per_bin"]]), float(r[idx["visibility"]]),
                  float(r[idx["phase"]])]
        n = len(p)
        cov = np.zeros((n, n))
        for i, j, c in covs.get(sid, []):
            cov[i, j] = cov[j, i] = c
        out.append((sid, ScanFit(
            params=np.array(p),
            cov=cov,
            labels=labels,
            chi2_red=float(first[idx["chi2_red"]]),
            dof=int(first[idx["dof"]]),
            voltage=float(first[idx["voltage"]]),
            current=float(first[idx["current"]]),
            bin_width=bw,
            series=first[idx["series"]],
        )))
    return out


# ---------------------------------------------------------------------------
# Reduced points

_RP_BASE = ("series", "voltage", "current", "n_scans", "outliers")
REDUCED_COLUMNS = (
    _RP_BASE
    + tuple(c for q in QUANTITIES for c in (q, f"sigma_{q}"))
    + tuple(c for q in QUANTITIES for c in (f"twin_{q}", f"twin_sigma_{q}", f"twin_cov_{q}"))
)
REDUCED_UNITS = {"voltage": "V", "current": "A"}
REDUCED_UNITS.update({q: ("rad" if q.startswith("phi") else "1") for q in QUANTITIES})


def write_reduced(path, points):
    rows = []
    for p in points:
        r = [p.series, p.voltage, p.current, p.n_scans, p.outliers]
        for q in QUANTITIES:
            r += [p.value(q), p.error(q)]
        for q in QUANTITIES:
            if p.twin is None:
                r += ["", "", ""]
            else:
                r += [p.twin.value(q), p.twin.error(q), p.twin_cov.get(q, 0.0)]
        rows.append(r)
    write_table(path, "reduced_points", REDUCED_COLUMNS, rows, REDUCED_UNITS)


def read_reduced(path):
    _, cols, rows = read_table(path, "reduced_points")
    idx = {c: i for i, c in enumerate(cols)}
    missing = [c for c in REDUCED_COLUMNS if c not in idx]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    points = []
    for r in rows:
        g = lambda c: r[idx[c]]  # noqa: E731
        V, I = float(g("voltage")), float(g("current"))
        twin, tcov = None, {}
        if g("twin_V_E") != "":
            twin = ReducedPoint(
                voltage=-V,
                current=I,
                sigma={q: float(g(f"twin_sigma_{q}")) for q in QUANTITIES},
                series=g("series"),
                n_scans=int(g("n_scans")),
                **{q: float(g(f"twin_{q}")) for q in QUANTITIES},
            )
            tcov = {q: float(g(f"twin_cov_{q}")) for q in QUANTITIES}
        points.append(ReducedPoint(
            voltage=V,
            current=I,
            sigma={q: float(g(f"sigma_{q}")) for q in QUANTITIES},
            series=g("series"),
            n_scans=int(g("n_scans")),
            outliers=int(g("outliers")),
            twin=twin,
            twin_cov=tcov,
            **{q: float(g(q)) for q in QUANTITIES},
        ))
    return points


def scenario_to_dict(sc):
    """Inverse of :func:`scenario_from_dict` for ramp profiles."""
    prof = sc.profiles
    h = prof.y[-1] - prof.y[0]
    u = prof.y / h

    def spread(p):
        # profiles written by this module are ramps: recover the total spread
        return float(p[-1] - p[0]) if np.allclose(p, (p[-1] - p[0]) * u) else None

    spreads = {f"{k}_spread": spread(getattr(prof, k)) for k in ("d", "g", "c", "z")}
    if any(v is None for v in spreads.values()):
        raise SchemaError("only linear-ramp profiles can be written to a scenario file")
    import dataclasses

    return {
        "format_version": FORMAT_VERSION,
        "zeeman": {k: float(v) for k, v in dataclasses.asdict(sc.zeeman).items()},
        "stark": {k: float(v) for k, v in dataclasses.asdict(sc.stark).items()},
        "beam": {k: v for k, v in dataclasses.asdict(sc.beam).items()},
        "profiles": spreads,
        "couplings": {
            "alpha_hmw": sc.alpha_hmw,
            "ac_coupling": sc.ac_coupling,
            "lab_projection": sc.lab_projection,
            "hmw_projection": sc.hmw_projection,
            "stark_residual_per_V2": sc.stark_residual_per_V2,
        },
        "chi": sc.chi,
        "drift": dataclasses.asdict(sc.drift),
        "noise": dataclasses.asdict(sc.noise),
        "anomalous": {"a": sc.anomalous_a, "b": sc.anomalous_b},
        "zeeman_velocity_average": sc.zeeman_velocity_average,
        "seed": sc.seed,
    }


def write_scenario(path, sc):
    atomic_write(path, yaml.safe_dump(scenario_to_dict(sc), sort_keys=False))
