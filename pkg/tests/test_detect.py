import numpy as np
import pytest
from hypothesis import given, strategies as st

from ssblab import NoDetectionError, ScenarioConfig, sample_ground_truth, synthesize_received
from ssblab.corrlab import correlation_envelope
from ssblab.detect import BurstPattern, TimingMarker, cluster_bursts, cross_burst_timing, extract_markers
from ssblab.errors import DomainError


def test_single_peak_single_marker():
    env = np.zeros(1000)
    env[437] = 5.0
    env[436] = env[438] = 2.0
    mk = extract_markers(env, 50, 1.0)
    assert [m.t for m in mk] == [437]


def test_equal_peaks_suppress_each_other():
    env = np.zeros(1000)
    env[400] = env[403] = 5.0
    assert extract_markers(env, 50, 1.0) == []


def test_peaks_farther_than_guard_both_survive():
    env = np.zeros(1000)
    env[100], env[400] = 5.0, 3.0
    assert [m.t for m in extract_markers(env, 50, 1.0)] == [100, 400]


def test_threshold_and_margin():
    env = np.zeros(200)
    env[50], env[60] = 5.0, 4.0
    assert [m.t for m in extract_markers(env, 20, 1.0, margin_db=0.0)] == [50]
    assert extract_markers(env, 20, 1.0, margin_db=3.0) == []
    assert extract_markers(env, 20, 6.0) == []


def test_guard_must_be_positive():
    with pytest.raises(DomainError):
        extract_markers(np.ones(5), 0, 0.0)


@given(st.integers(0, 2**32 - 1), st.integers(5, 80))
def test_nms_idempotent(seed, guard):
    rng = np.random.default_rng(seed)
    env = rng.exponential(size=600)
    first = extract_markers(env, guard, 0.5)
    embedded = np.zeros_like(env)
    for m in first:
        embedded[m.t] = m.score
    again = extract_markers(embedded, guard, 0.5)
    assert [(m.t, m.score) for m in again] == [(m.t, m.score) for m in first]


def test_marker_coverage_at_zero_db():
    """Probe BS at 0 dB among 11 unit-power interferers: a marker lands in
    (almost) every SSB slot."""
    cfg = ScenarioConfig(sinr_profile={"probe": 0, "sinr_db": 0.0})
    covered = []
    for seed in range(200):
        gt = sample_ground_truth(cfg, seed)
        env = correlation_envelope(synthesize_received(cfg, gt, seed))
        mk = np.array([m.t for m in extract_markers(env, 256, 10 ** 1.2 * np.median(env.values))])
        for e in cfg.eta:
            covered.append(mk.size > 0 and bool(np.any((mk >= e) & (mk <= e + cfg.tau_max))))
    assert np.mean(covered) >= 0.9


# --- clustering -----------------------------------------------------------------

PAT = BurstPattern.uniform(8, 512, period=20_000)


def _markers(ts):
    return [TimingMarker(int(t), 0, 1.0) for t in ts]


def test_three_periods_three_clusters():
    ts = [b * 20_000 + 37 + e for b in range(3) for e in PAT.eta]
    bursts = cluster_bursts(_markers(ts), PAT)
    assert len(bursts) == 3
    for b in bursts:
        assert [p for _, p in b] == list(range(8))


def test_missing_ssb_keeps_grid_indices():
    ts = [37 + e for i, e in enumerate(PAT.eta) if i != 4]
    (burst,) = cluster_bursts(_markers(ts), PAT)
    assert [p for _, p in burst] == [0, 1, 2, 3, 5, 6, 7]


def test_missing_first_ssb_with_origin():
    ts = [37 + e for i, e in enumerate(PAT.eta) if i != 0]
    (burst,) = cluster_bursts(_markers(ts), PAT, origin=37)
    assert [p for _, p in burst] == list(range(1, 8))


@given(st.lists(st.integers(-2, 2), min_size=8, max_size=8))
def test_jitter_leaves_assignments(jitter):
    ts = [37 + e + j for e, j in zip(PAT.eta, jitter)]
    (burst,) = cluster_bursts(_markers(ts), PAT, origin=37)
    assert [p for _, p in burst] == list(range(8))


def test_off_grid_marker_unassigned():
    gapped = BurstPattern((0, 512, 2000))
    (burst,) = cluster_bursts(_markers([0, 1250, 2001]), gapped, origin=0)
    assert [p for _, p in burst] == [0, None, 2]


def test_pattern_validation():
    with pytest.raises(DomainError):
        BurstPattern((5, 10))
    with pytest.raises(DomainError):
        BurstPattern((0, 10, 10))
    with pytest.raises(DomainError):
        BurstPattern((0, 10), period=10)


# --- cross-burst timing ---------------------------------------------------------

def test_one_point_ls():
    pat = BurstPattern((0, 400, 800, 1200))
    tau0, grid = cross_burst_timing({3: 1500}, pat)
    assert tau0 == 300
    np.testing.assert_array_equal(grid, 300 + pat.as_array())


def test_two_point_average():
    pat = BurstPattern((0, 510))
    assert cross_burst_timing({0: 100, 1: 612}, pat)[0] == 101


def test_empty_raises():
    with pytest.raises(NoDetectionError):
        cross_burst_timing({}, PAT)


@given(st.dictionaries(st.integers(0, 7), st.integers(0, 10_000), min_size=1))
def test_ls_optimal_and_grid_consistent(single):
    tau0, grid = cross_burst_timing(single, PAT)
    eta = PAT.as_array()
    np.testing.assert_array_equal(np.diff(grid), np.diff(eta))

    def cost(c):
        return sum((t - eta[p] - c) ** 2 for p, t in single.items())

    cands = range(tau0 - 20, tau0 + 21)
    assert cost(tau0) == min(cost(c) for c in cands)


def test_jittered_timing_coverage(rng):
    true = 250
    hits = 0
    for _ in range(2000):
        single = {p: true + int(PAT.eta[p]) + int(rng.integers(-3, 4)) for p in range(8)}
        tau0, _ = cross_burst_timing(single, PAT)
        hits += abs(tau0 - true) <= 3 / np.sqrt(8) * 3
    assert hits / 2000 >= 0.99
