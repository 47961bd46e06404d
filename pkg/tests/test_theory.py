import math
import warnings

import numpy as np
import pytest

from shrinklda.exceptions import InvalidInput, ShapeMismatch
from shrinklda.shrinkage import HARD, NPEB, NPMLE, SM
from shrinklda.theory import (
    COVERED,
    EXCLUDED,
    REGION_COLUMNS,
    UNKNOWN,
    SignalConfig,
    overlapping_pairs,
    region_grid,
    region_grid_csv,
    region_membership,
    scan_ratio,
    v_draws,
    v_scan,
    v_scan_csv,
    v_statistic,
)


def test_worked_examples():
    r = region_membership(0.25, 0.10)
    assert r.regions == ("C",)
    assert {HARD, NPEB, NPMLE} <= r.covered_by and SM not in r.covered_by
    r = region_membership(0.75, -0.10)
    assert "D" in r.regions
    assert {SM, NPEB, NPMLE} <= r.covered_by
    r = region_membership(0.30, -0.10)
    assert r.regions == ("A",)
    assert r.covered_by == {NPEB}
    assert r.coverage[NPMLE] == UNKNOWN


def test_invalid_a():
    for a in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(InvalidInput):
            region_membership(a, 0.0)


def test_coverage_follows_region_inclusions():
    for r in region_grid(0.02):
        if r.in_C:
            assert {NPEB, NPMLE, HARD} <= r.covered_by
        if r.in_D:
            assert {NPEB, NPMLE, SM} <= r.covered_by
        assert (r.coverage[SM] == COVERED) == r.in_D
        assert (r.coverage[HARD] == COVERED) == r.in_C
        # the shrinkers only have inner bounds, so they are never excluded
        assert r.coverage[NPEB] != EXCLUDED and r.coverage[NPMLE] != EXCLUDED
        if r.in_T1 or r.in_T2:
            assert EXCLUDED not in r.coverage.values()


def test_grid_layout_and_overlaps():
    grid = region_grid(0.01)
    assert len(grid) == 10_000
    assert 0 < min(r.a for r in grid) and max(r.a for r in grid) < 1
    counts = overlapping_pairs(grid)
    # C and D never meet anything; the A/B and B/D systems share a strip
    assert counts["AC"] == counts["AD"] == counts["BC"] == counts["CD"] == 0
    assert set(k for k, v in counts.items() if v) <= {"AB", "BD"}


def test_region_csv():
    text = region_grid_csv(region_grid(0.25))
    lines = text.splitlines()
    assert lines[0].split(",") == list(REGION_COLUMNS)
    assert len(lines) == 1 + 16


def test_signal_config():
    cfg = SignalConfig(0.5, 0.1, 4096)
    assert cfg.l == 64 and cfg.delta == pytest.approx(4096**0.1)
    assert cfg.a_n == pytest.approx(5.0)
    mu = cfg.mean_vector()
    assert np.count_nonzero(mu) == 64 and mu[0] == pytest.approx(cfg.delta)
    assert SignalConfig(0.2, 0.1, 512).at(4096).p == 4096
    with pytest.raises(InvalidInput):
        SignalConfig(1.2, 0.0, 100)


def test_v_statistic():
    mu = np.array([3.0, 0.0, 0.0])
    assert v_statistic(mu, mu) == pytest.approx(3.0)
    assert v_statistic(mu, [0.0, 1.0, -2.0]) == 0.0
    assert v_statistic([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / math.sqrt(2))
    rng = np.random.default_rng(0)
    m, mh = rng.standard_normal((2, 20))
    assert v_statistic(m, 7.5 * mh) == pytest.approx(v_statistic(m, mh), abs=1e-12)
    with pytest.warns(RuntimeWarning):
        assert v_statistic(mu, np.zeros(3)) == 0.0
    with pytest.raises(ShapeMismatch):
        v_statistic(mu, np.zeros(2))


def test_sample_mean_v_matches_independent_monte_carlo():
    cfg = SignalConfig(0.5, 0.2, 256)
    ours = np.median(v_draws(cfg, [SM], 400, seed=1)[SM])
    rng = np.random.default_rng(12345)
    mu = np.zeros(256)
    mu[:16] = 256**0.2
    z = mu + rng.standard_normal((4000, 256)) / 5.0
    ref = np.median(z @ mu / np.linalg.norm(z, axis=1))
    assert ours == pytest.approx(ref, rel=0.03)


def test_v_scan_determinism_and_validation():
    cfg = SignalConfig(0.3, 0.1, 64)
    a = v_scan(cfg, [32, 64], methods=(SM, NPEB), draws=10, seed=3)
    b = v_scan(cfg, [32, 64], methods=(SM, NPEB), draws=10, seed=3)
    assert a == b and len(a) == 4
    assert all(r.q10 <= r.median <= r.q90 for r in a)
    assert scan_ratio(a, SM, 32, 64) > 0
    with pytest.raises(InvalidInput):
        v_scan(cfg, [32], draws=5)
    lines = v_scan_csv(a, cfg).splitlines()
    assert lines[0] == "a,b,method,p,median_V,q10,q90,draws"


def test_v_draws_shared_across_methods_and_order_free():
    cfg = SignalConfig(0.3, 0.1, 64)
    both = v_draws(cfg, [SM, NPMLE], 12, seed=5)
    alone = v_draws(cfg, [SM], 12, seed=5)
    np.testing.assert_array_equal(both[SM], alone[SM])
    shuffled = np.random.default_rng(0).permutation(both[SM])
    assert np.median(shuffled) == np.median(both[SM])


def test_zero_estimate_in_scan_does_not_warn():
    cfg = SignalConfig(0.1, -0.4, 64)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        vals = v_draws(cfg, [HARD], 10, seed=0)[HARD]
    assert np.all(np.isfinite(vals))
