import os

import numpy as np
import pytest
import yaml

from hmwphase import cli
from hmwphase.fitting import fit_scan, reduce
from hmwphase.physics import DispersionProfiles, NoiseModel, QuadratureError, Scenario
from hmwphase.storage import (
    FORMAT_VERSION,
    SchemaError,
    StorageError,
    atomic_write,
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
    write_scenario,
    write_table,
)
from hmwphase.synth import synthesize_scan


def _yaml(tmp_path, name, data):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data, sort_keys=False))
    return p


def test_baseline_scenario_matches_calibrated_values():
    sc = parse_scenario(data_path("baseline.yaml"))
    ref = Scenario()
    assert sc.zeeman == ref.zeeman
    assert (sc.zeeman.J0, sc.zeeman.A_J1, sc.zeeman.A_J1C) == (-0.61, -0.430, 1.43)
    assert sc.stark == ref.stark and sc.beam == ref.beam
    assert sc.alpha_hmw == -1.28e-6
    for k in "dgcz":
        assert np.array_equal(getattr(sc.profiles, k), getattr(ref.profiles, k))


def test_minimal_scenario_gets_defaults(tmp_path):
    p = _yaml(tmp_path, "s.yaml", {"format_version": 1, "couplings": {"alpha_hmw": -2e-6}})
    sc = parse_scenario(p)
    assert sc.alpha_hmw == -2e-6
    assert sc.zeeman == Scenario().zeeman and sc.chi == 0.0


@pytest.mark.parametrize(
    "body, field, line",
    [
        ("format_version: 1\nchi: 1.5\n", "chi", 2),
        ("format_version: 1\nbeam:\n  vm: 1000.0\n  V0: 1.2\n", "beam.V0", 4),
        ("format_version: 1\nstark:\n  h_u: 0.001\n  bogus: 3\n", "stark.bogus", 4),
        ("format_version: 2\n", "format_version", 1),
    ],
)
def test_scenario_schema_diagnostics(tmp_path, body, field, line):
    p = tmp_path / "bad.yaml"
    p.write_text(body)
    with pytest.raises(SchemaError) as err:
        parse_scenario(p)
    assert f"bad.yaml:{line}: {field}:" in str(err.value)


def test_physically_invalid_scenario(tmp_path):
    p = _yaml(tmp_path, "s.yaml", {"format_version": 1, "beam": {"n_y": 10}})
    with pytest.raises(SchemaError, match="n_y"):
        parse_scenario(p)
    with pytest.raises(StorageError):
        parse_scenario(tmp_path / "missing.yaml")


def test_manifest_parsing(tmp_path):
    m = parse_manifest(data_path("campaign.yaml"))
    assert len(m.runs) == 24
    assert {abs(r.current) for r in m.runs} == {4.0, 8.0, 12.0, 16.0}
    assert all(r.n_scans == 100 and r.n_configs == 6 for r in m.runs)
    seeds = {m.scan_seed(i, k) for i, r in enumerate(m.runs) for k in range(r.n_scans)}
    assert len(seeds) == 2400
    bad = _yaml(tmp_path, "m.yaml", {"format_version": 1, "scenario": "nope.yaml", "runs": [{"V": 1, "I": 1}]})
    with pytest.raises(SchemaError, match="does not exist"):
        parse_manifest(bad)
    zero = _yaml(tmp_path, "z.yaml", {"format_version": 1, "scenario": str(data_path("baseline.yaml")),
                                      "runs": [{"V": 0, "I": 4}]})
    with pytest.raises(SchemaError, match="runs.0.V"):
        parse_manifest(zero)


def test_scan_round_trip_is_bit_identical(tmp_path, baseline):
    scan = synthesize_scan(baseline, 800.0, -12.0, (4, 5, 6), series="x")
    write_scan(tmp_path / "s.csv", scan)
    back = read_scan(tmp_path / "s.csv")
    assert back == scan and back.seed == (4, 5, 6) and back.series == "x"
    a, b = fit_scan(scan), fit_scan(back)
    assert np.array_equal(a.params, b.params) and np.array_equal(a.cov, b.cov)


def test_noiseless_scan_round_trip(tmp_path, baseline):
    scan = synthesize_scan(baseline.replace(noise=NoiseModel(poisson=False)), 400.0, 4.0, 1)
    write_scan(tmp_path / "s.csv", scan)
    assert read_scan(tmp_path / "s.csv") == scan


def test_fits_and_reduced_round_trip(tmp_path, baseline):
    fits = [(f"s{i}", fit_scan(synthesize_scan(baseline, 600.0, 8.0, i))) for i in range(2)]
    write_fits(tmp_path / "f.csv", tmp_path / "c.csv", fits)
    back = read_fits(tmp_path / "f.csv", tmp_path / "c.csv")
    for (ia, a), (ib, b) in zip(fits, back):
        assert ia == ib and a.labels == b.labels
        assert np.array_equal(a.params, b.params)
        assert np.array_equal(a.cov, b.cov)
    pts = [reduce(f) for _, f in fits]
    write_reduced(tmp_path / "r.csv", pts)
    assert read_reduced(tmp_path / "r.csv") == pts


def test_table_header_checks(tmp_path):
    write_table(tmp_path / "t.csv", "thing", ("a", "b"), [(1, 2.5)], {"a": "V"})
    meta, cols, rows = read_table(tmp_path / "t.csv", "thing")
    assert meta["format_version"] == str(FORMAT_VERSION) and meta["units"] == "a=V"
    assert cols == ["a", "b"] and rows == [["1", "2.5"]]
    with pytest.raises(SchemaError, match="expected"):
        read_table(tmp_path / "t.csv", "other")
    (tmp_path / "v.csv").write_text("# format_version: 99\na\n")
    with pytest.raises(SchemaError, match="format_version"):
        read_table(tmp_path / "v.csv")


def test_atomic_write_leaves_no_temporaries(tmp_path):
    atomic_write(tmp_path / "d" / "x.txt", "hello")
    assert os.listdir(tmp_path / "d") == ["x.txt"]


def test_scenario_write_round_trip(tmp_path, baseline):
    write_scenario(tmp_path / "s.yaml", baseline)
    sc = parse_scenario(tmp_path / "s.yaml")
    assert sc.zeeman == baseline.zeeman and sc.drift == baseline.drift


# ---------------------------------------------------------------------------
# Command line


def _run(*argv):
    return cli.main([str(a) for a in argv] + ["--no-png"])


@pytest.fixture(scope="module")
def campaign(tmp_path_factory):
    """Defect-free quick campaign run through simulate, fit, reduce."""
    root = tmp_path_factory.mktemp("cli")
    sc = Scenario(profiles=DispersionProfiles.zero())
    sc = sc.replace(drift=sc.drift.__class__(amplitude=0.0))
    write_scenario(root / "clean.yaml", sc)
    runs = [{"V": s * V, "I": t * I, "n_scans": 20}
            for V in (400.0, 800.0) for I in (6.0, 12.0) for s in (1,) for t in (1, -1)]
    _yaml(root, "m.yaml", {"format_version": 1, "scenario": "clean.yaml", "seed": 3, "runs": runs})
    out = root / "out"
    assert _run("simulate", "--manifest", root / "m.yaml", "--out", out, "--oracle", "model") == 0
    assert _run("fit", "--out", out) == 0
    assert _run("reduce", "--out", out) == 0
    return root, out, sc


def test_cli_pipeline_recovers_slope(campaign):
    root, out, sc = campaign
    assert len(list((out / "scans").glob("*.csv"))) == 160
    assert len(read_reduced(out / "reduced.csv")) == 8
    assert _run("extract-hmw", "--out", out, "--scenario", root / "clean.yaml", "--no-correction") == 0
    _, cols, rows = read_table(out / "hmw_fit.csv", "hmw_fit")
    alpha, sigma = float(rows[0][1]), float(rows[0][2])
    assert abs(alpha - sc.alpha_hmw) < 2 * sigma


def test_cli_rerun_is_idempotent(campaign):
    _, out, _ = campaign
    before = (out / "fits.csv").read_bytes()
    assert _run("fit", "--out", out) == 0
    assert (out / "fits.csv").read_bytes() == before


def test_cli_validate_report(tmp_path):
    assert _run("validate", "--out", tmp_path) == 0
    meta, _, rows = read_table(tmp_path / "validate.csv", "oracle_model_sweep")
    assert float(meta["max_abs_dphase"]) < 1e-3
    assert float(meta["max_abs_dvis"]) < 0.01
    assert len(rows) == 25


def test_cli_plot_data_fig10(tmp_path):
    assert cli.main(["plot-data", "fig10", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "figures" / "fig10.png").exists()
    _, cols, rows = read_table(tmp_path / "figures" / "fig10.csv", "figure_data")
    re = [(float(r[2]), float(r[3])) for r in rows if r[0] == "Re V_B"]
    I, v = np.array(re).T
    zero = I[np.argmax(v < 0)]
    assert 17.0 <= zero <= 19.0
    assert np.interp(23.0, I, v) == pytest.approx(-0.70, abs=0.05)


def test_cli_calibrations(tmp_path):
    assert _run("calibrate-stark", "--out", tmp_path, "--seed", 2) == 0
    assert _run("calibrate-stark", "--out", tmp_path / "again", "--input", tmp_path / "stark_data.csv") == 0
    assert (tmp_path / "stark_fit.csv").read_text() == (tmp_path / "again" / "stark_fit.csv").read_text()
    assert _run("calibrate-zeeman", "--out", tmp_path, "--seed", 2) == 0
    _, _, rows = read_table(tmp_path / "zeeman_fit.csv", "zeeman_fit")
    assert {r[1] for r in rows if r[0] == "global"} == {"J0", "I0", "A_J1", "A_J2", "A_J3", "I0C", "A_J1C"}


def test_cli_fit_visibility(campaign):
    _, out, _ = campaign
    assert _run("fit-visibility", "--out", out) == 3  # only four distinct voltages


def test_cli_schema_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("format_version: 1\nchi: 1.5\n")
    assert _run("validate", "--out", tmp_path, "--scenario", bad) == cli.EXIT_SCHEMA
    assert "chi" in capsys.readouterr().err


def test_cli_io_error_exit_code(tmp_path):
    assert _run("fit", "--out", tmp_path) == cli.EXIT_IO


def test_cli_fit_error_removes_partial_outputs(tmp_path, baseline):
    scan = synthesize_scan(baseline, 400.0, 4.0, 0)
    write_scan(tmp_path / "scans" / "000_0000.csv", scan)
    flat = scan.__class__(**{**scan.__dict__, "counts": np.full_like(scan.counts, 7)})
    write_scan(tmp_path / "scans" / "000_0001.csv", flat)
    assert _run("fit", "--out", tmp_path) == cli.EXIT_FIT
    assert not (tmp_path / "fits.csv").exists()


def test_cli_oracle_error_exit_code(tmp_path, monkeypatch):
    def fail(*a, **k):
        raise QuadratureError("forced")

    monkeypatch.setattr(cli, "check_convergence", fail)
    assert _run("validate", "--out", tmp_path) == cli.EXIT_ORACLE
    assert not (tmp_path / "validate.csv").exists()


def test_cli_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["calibrate-stark", "--no-png"]) == 0
    assert (tmp_path / "env" / "stark_fit.csv").exists()
