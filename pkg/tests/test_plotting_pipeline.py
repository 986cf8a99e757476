import numpy as np
import pytest

from hmwphase.analysis import AnalysisError
from hmwphase.pipeline import (
    CampaignManifest,
    RunSpec,
    extract_hmw,
    fig11_runs,
    group_points,
    reduce_scans,
    run_campaign,
    simulate_run,
)
from hmwphase.plotting import FIGURES, figure_data, write_figure
from hmwphase.storage import read_table


@pytest.mark.parametrize("name", FIGURES)
def test_every_figure_builds(tmp_path, baseline, name):
    fig = figure_data(name, baseline)
    assert fig.series and all(len(s.x) == len(s.y) == len(s.sigma) for s in fig.series)
    assert all(np.all(np.isfinite(s.y)) for s in fig.series)
    paths = write_figure(fig, tmp_path)
    assert [p.suffix for p in paths] == [".csv", ".png"]
    meta, cols, rows = read_table(paths[0], "figure_data")
    assert meta["figure"] == name and len(rows) == sum(len(s.x) for s in fig.series)


def test_unknown_figure(baseline):
    with pytest.raises(ValueError, match="fig11"):
        figure_data("fig11", baseline)


def test_fig17_vanishes_without_dispersion(clean):
    fig = figure_data("fig17", clean)
    for s in fig.series:
        assert np.allclose(s.y, 0.0, atol=1e-12)


def test_run_spec_validation():
    with pytest.raises(ValueError):
        RunSpec(0.0, 4.0)
    with pytest.raises(ValueError):
        RunSpec(400.0, 4.0, n_configs=5)
    runs = fig11_runs()
    assert len(runs) == 18
    assert {(r.voltage, r.current) for r in runs} >= {(800.0, 12.0), (800.0, -12.0)}


def test_campaign_is_deterministic_and_continuous(baseline):
    man = CampaignManifest(fig11_runs(voltages=(800.0,), currents=(8.0,), n_scans=3), seed=5)
    a = run_campaign(baseline, man)
    b = run_campaign(baseline, man)
    assert a == b
    scans = simulate_run(baseline, man, 1)
    assert scans[0].seed == (5, 1, 0)
    pts = reduce_scans(scans)
    assert group_points(pts)[0] == a[1]


def test_extract_hmw_needs_enough_points(baseline):
    man = CampaignManifest(fig11_runs(voltages=(800.0,), currents=(8.0,), n_scans=2))
    pts = run_campaign(baseline, man)
    with pytest.raises(AnalysisError):
        extract_hmw(pts, baseline)
