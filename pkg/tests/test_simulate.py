import math

import numpy as np
import pytest

from spdcsim import simulate as sim
from spdcsim.budget import click_probabilities, solve_eta_for_singles
from spdcsim.multipair import coincidence_extrema
from spdcsim.params import AnalyzerPair, SourceParams, ValidationError

ORTH = AnalyzerPair(0.0, math.pi / 2)
PAR = AnalyzerPair(0.0, 0.0)
QUIET = dict(dark_rate_signal=0.0, dark_rate_idler=0.0, fluor_fraction=0.0)


def within(observed, expected, sigmas=4.0):
    return abs(observed - expected) <= sigmas * math.sqrt(max(expected, 1.0))


def test_silent_source():
    rec = sim.simulate_run(SourceParams(alpha=0.0, **QUIET), ORTH, 3_000_000, seed=1)
    assert (rec.singles_s, rec.singles_i, rec.coincidences) == (0, 0, 0)
    out = sim.sample_pulses(SourceParams(alpha=0.0, **QUIET), ORTH, 10_000, seed=1)
    assert not out.detected_s.any() and not out.detected_i.any()


def test_determinism_and_worker_independence():
    p = SourceParams(alpha=0.1)
    a = sim.simulate_blocks(p, ORTH, 3_500_000, 42, workers=1)
    b = sim.simulate_blocks(p, ORTH, 3_500_000, 42, workers=4)
    assert a == b
    assert sim.simulate_run(p, ORTH, 3_500_000, 42) == sim.merge(a)
    assert sim.simulate_run(p, ORTH, 3_500_000, 43) != sim.merge(a)


def test_record_metadata():
    p = SourceParams(alpha=0.05)
    rec = sim.simulate_run(p, ORTH, 100_000, seed=9)
    assert rec.pulses == 100_000 and rec.seed == 9
    assert rec.params_hash == p.params_hash() and rec.generator == "Philox"
    with pytest.raises(ValidationError):
        sim.simulate_run(p, ORTH, 0, seed=9)


def test_cause_flags():
    p = SourceParams(alpha=0.5, fluor_fraction=0.3, dark_rate_signal=1e6, dark_rate_idler=1e6)
    out = sim.sample_pulses(p, ORTH, 200_000, seed=2)
    for det, causes in ((out.detected_s, (out.pair_s, out.fluor_s, out.dark_s)),
                        (out.detected_i, (out.pair_i, out.fluor_i, out.dark_i))):
        assert np.array_equal(det, causes[0] | causes[1] | causes[2])
        assert det.any()
    assert out.coincident.sum() <= min(out.detected_s.sum(), out.detected_i.sum())


@pytest.mark.parametrize("analyzers", [ORTH, PAR, AnalyzerPair(0.3, 1.2)])
@pytest.mark.parametrize("dist", ["poisson", "thermal"])
def test_sparse_engine_matches_dense(analyzers, dist):
    p = SourceParams(alpha=0.2, eta_signal=0.3, eta_idler=0.2, fluor_fraction=0.2, dark_rate_signal=2e5,
                     dark_rate_idler=1e5, mixing_p=0.9, mixing_p_hv=0.95, pair_distribution=dist)
    n = 1_000_000
    dense = sim.sample_pulses(p, analyzers, n, 5)
    sparse = sim.simulate_run(p, analyzers, n, 6)
    exact = click_probabilities(p, analyzers)
    for d, s, e in ((dense.detected_s.sum(), sparse.singles_s, exact.singles_s),
                    (dense.detected_i.sum(), sparse.singles_i, exact.singles_i),
                    (dense.coincident.sum(), sparse.coincidences, exact.coincidence)):
        assert within(d, n * e) and within(s, n * e)


def test_shard_merge_equivalence():
    p = SourceParams(alpha=0.05)
    n = 400_000
    whole, shards = [], []
    for t in range(20):
        whole.append(sim.simulate_run(p, ORTH, n, t, 0).coincidences)
        shards.append(sum(sim.simulate_run(p, ORTH, n // 4, t, 1, k).coincidences for k in range(4)))
    whole, shards = np.array(whole, float), np.array(shards, float)
    se = math.sqrt(whole.var(ddof=1) / 20 + shards.var(ddof=1) / 20)
    assert abs(whole.mean() - shards.mean()) < 3 * se


@pytest.mark.parametrize("alpha", [0.01, 0.1, 0.7])
def test_extrema_converge_to_model(alpha):
    p = SourceParams(alpha=alpha, **QUIET)
    ext = coincidence_extrema(p)
    n = 10_000_000
    c_max = sim.simulate_run(p, ORTH, n, 11).coincidences
    c_min = sim.simulate_run(p, PAR, n, 12).coincidences
    assert within(c_max, n * ext.c_max, 3) and within(c_min, n * ext.c_min, 3)


def test_singles_linear_in_alpha():
    alphas = np.linspace(0.005, 0.05, 10)
    singles = [sim.simulate_run(SourceParams(alpha=a, **QUIET), ORTH, 2_000_000, 20, j).singles_s
               for j, a in enumerate(alphas)]
    slope, intercept = np.polyfit(alphas, singles, 1)
    pred = slope * alphas + intercept
    r2 = 1 - np.sum((singles - pred) ** 2) / np.sum((singles - np.mean(singles)) ** 2)
    assert r2 > 0.99


def test_coincidence_floor_quadratic():
    alphas = np.array([0.05, 0.1, 0.2, 0.4])
    p = SourceParams(eta_signal=0.5, eta_idler=0.5, **QUIET)
    floor = [sim.simulate_run(p.replace(alpha=a), PAR, 2_000_000, 21, j).coincidences
             for j, a in enumerate(alphas)]
    slope = np.polyfit(np.log(alphas), np.log(floor), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.1)


def test_singles_rate_at_operating_point():
    p = SourceParams(alpha=0.011, fluor_fraction=0.0)
    rec = sim.simulate_run(p, ORTH, 31_100_000, 16000)
    assert rec.singles_s == pytest.approx(16_000, rel=0.05)


def test_throughput_at_high_flux():
    p = SourceParams(alpha=0.7)
    eta = solve_eta_for_singles(p, 1e6)
    p = p.replace(eta_signal=eta, eta_idler=eta)
    rec = sim.simulate_run(p, ORTH, 31_100_000, 110_000)
    assert rec.singles_s == pytest.approx(1e6, rel=0.1)
    assert rec.coincidences == pytest.approx(110_000, rel=0.1)
    assert rec.coincidences / rec.singles_s == pytest.approx(0.11, rel=0.1)


def test_fringe_scan_shape():
    grid = np.radians([0, 45, 90])
    pts = sim.fringe_scan(SourceParams(alpha=0.05), 0.0, grid, 100_000, repeats=4, seed=3)
    assert [p.theta_i for p in pts] == pytest.approx(list(grid))
    assert all(len(p.counts) == 4 and p.mean == pytest.approx(np.mean(p.counts)) for p in pts)
    with pytest.raises(ValidationError):
        sim.fringe_scan(SourceParams(), 0.0, [], 10)


def test_visibility_vs_alpha_first_order():
    alphas = np.round(np.arange(0.01, 0.101, 0.01), 2)
    rows = sim.visibility_vs_alpha(SourceParams(**QUIET), alphas, "HV", 3_000_000, seed=6)
    for row in rows:
        assert abs(row.visibility - (1 - row.alpha)) < 3 * row.visibility_err


def test_visibility_vs_alpha_high_flux_matches_model():
    (row,) = sim.visibility_vs_alpha(SourceParams(**QUIET), [0.7], "AD", 3_000_000, seed=7)
    assert abs(row.visibility - coincidence_extrema(SourceParams(alpha=0.7)).visibility) < 3 * row.visibility_err


def test_visibility_vs_alpha_zero_flux_undefined():
    (row,) = sim.visibility_vs_alpha(SourceParams(**QUIET), [0.0], "HV", 100_000)
    assert row.visibility is None and row.visibility_err is None


def test_ad_basis_uses_mixing_p():
    p = SourceParams(alpha=0.001, mixing_p=0.9, mixing_p_hv=1.0, **QUIET)
    (hv,) = sim.visibility_vs_alpha(p, [0.05], "HV", 3_000_000, seed=8)
    (ad,) = sim.visibility_vs_alpha(p, [0.05], "AD", 3_000_000, seed=8)
    assert hv.visibility > ad.visibility
    assert abs(ad.visibility - 0.9 * coincidence_extrema(p.replace(alpha=0.05)).visibility) < 3 * ad.visibility_err


def test_visibility_estimate_zero_floor():
    v, err = sim.visibility_estimate(100, 0)
    assert v == 1.0 and err > 0
    assert sim.visibility_estimate(0, 0) == (None, None)
