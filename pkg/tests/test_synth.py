import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmwphase.physics import NoiseModel
from hmwphase.synth import (
    MIN_CONFIG_SHARE,
    anomalous_phase,
    config_amplitudes,
    schedule,
    synthesize_scan,
)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([4, 6]), st.floats(5.0, 60.0), st.integers(1, 5))
def test_schedule_is_cyclic_and_fair(n_configs, duration, dwell):
    try:
        s = schedule(n_configs, duration, dwell_bins=dwell)
    except ValueError:
        return
    share = np.bincount(s.index, minlength=n_configs) / len(s.index)
    assert share.min() >= MIN_CONFIG_SHARE
    starts = s.index[:: s.dwell_bins]
    assert np.array_equal(starts, np.arange(len(starts)) % n_configs)


def test_schedule_avoids_commensurate_cycle():
    # 6 configs x 5 bins x 0.1 s = 3 s; fringe period 3 s is commensurate
    s = schedule(6, 12.0, dwell_bins=5, fringe_period=3.0)
    assert s.adjusted and s.dwell_bins > 5 and "dwell" in s.note


def test_schedule_rejects_short_scan():
    with pytest.raises(ValueError, match="shorter"):
        schedule(6, 1.0)


def test_scan_is_deterministic(baseline):
    a = synthesize_scan(baseline, 800.0, 12.0, (1, 2, 3))
    b = synthesize_scan(baseline, 800.0, 12.0, (1, 2, 3))
    c = synthesize_scan(baseline, 800.0, 12.0, (1, 2, 4))
    assert a == b
    assert not np.array_equal(a.counts, c.counts)


def test_scan_layout(baseline):
    s = synthesize_scan(baseline, 400.0, -8.0, 5)
    assert len(s.t) == 200 and s.duration == pytest.approx(20.0)
    assert s.counts.dtype == np.int64 and s.counts.min() >= 0
    assert s.labels == ("0,0", "V,0", "V,I", "0,I", "-V,I", "-V,0")
    assert set(s.bin_labels()) == set(s.labels)
    with pytest.raises(ValueError):
        s.counts[0] = 1


def test_noiseless_counts_follow_fringe(clean):
    sc = clean.replace(noise=NoiseModel(poisson=False))
    s = synthesize_scan(sc, 800.0, 12.0, 0)
    vis, ph = s.truth["visibility"], s.truth["phase"]
    phi = s.truth["start_phase"] + s.ref_phase
    k = s.config
    expect = sc.beam.rate * s.bin_width * (1 + vis[k] * np.cos(phi + ph[k]))
    assert np.allclose(s.counts, expect, rtol=1e-14)
    assert vis[0] == pytest.approx(sc.beam.V0 * 0.932, abs=0.002 * sc.beam.V0)


def test_counting_noise_has_fano_variance(clean):
    sc = clean.replace(beam=clean.beam.__class__(V0=1e-9))
    counts = np.concatenate([synthesize_scan(sc, 400.0, 4.0, s).counts for s in range(30)])
    mean = sc.beam.rate * 0.1
    assert counts.mean() == pytest.approx(mean, rel=0.01)
    assert counts.var() / mean == pytest.approx(sc.noise.fano, rel=0.08)


def test_anomalous_phase_requires_current(baseline):
    sc = baseline.replace(anomalous_a=1e-5, anomalous_b=1e-11)
    assert anomalous_phase(800.0, 0.0, sc) == 0.0
    assert anomalous_phase(800.0, 4.0, sc) == anomalous_phase(800.0, -12.0, sc) == pytest.approx(
        8e-3 + 5.12e-3
    )


def test_model_and_exact_sources_agree(baseline):
    _, a = config_amplitudes(baseline, 600.0, 8.0, 6, "exact")
    _, b = config_amplitudes(baseline, 600.0, 8.0, 6, "model")
    assert np.allclose(np.abs(a), np.abs(b), atol=0.01)
    assert np.allclose(np.angle(np.array(a) / np.array(b)), 0, atol=1e-3)
    with pytest.raises(ValueError):
        config_amplitudes(baseline, 600.0, 8.0, 6, "other")
