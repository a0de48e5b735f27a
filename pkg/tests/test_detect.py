import numpy as np
import pytest

from bruteforce import algorithm1, algorithm2, gap_threshold, random_instance, random_intervals
from hdmosum.detect import detect_global, detect_twoway, estimate_jump
from hdmosum.exceptions import ConfigError
from hdmosum.mosum import jump_profile, stat_global, stat_twoway
from hdmosum.neighborhoods import from_intervals


def steps(n, p, plan):
    Y = np.zeros((n, p))
    for tau, gamma, cols in plan:
        Y[tau - 1 :, cols] += gamma
    return Y


def test_noiseless_single_step():
    p, bn = 10, 10
    res = detect_global(steps(100, p, [(50, 1.0, slice(None))]), bn, None, 1.0)
    assert res.k_hat == 1
    b = res.breaks[0]
    assert b.tau == 50
    np.testing.assert_allclose(b.gamma, np.ones(p))
    assert b.stat_value == pytest.approx(p - 2 * p / bn)
    assert not b.boundary_clipped


def test_two_steps_recovered():
    Y = steps(200, 5, [(40, 1.0, slice(None)), (120, -1.0, slice(None))])
    res = detect_global(Y, 20, None, 0.5)
    assert sorted(res.taus) == [40, 120]


def test_constant_panel_no_break():
    res = detect_global(np.full((60, 3), 2.0), 5, None, -0.5)
    assert res.k_hat == 0 and res.delta_hat is None


def test_removal_radius_invariant():
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((300, 4))
    res = detect_global(Y, 10, None, -10.0)
    t = np.sort(res.taus)
    assert np.all(np.diff(t) > 20)
    assert t.min() >= 11 and t.max() <= 290


def test_open_exclusion_keeps_break_at_two_bn():
    bn = 10
    Y = steps(120, 6, [(40, 1.0, slice(None)), (60, 1.0, slice(None))])
    # breaks exactly 2bn apart: the closed rule deletes the second peak and
    # settles on its neighbour one step later
    assert sorted(detect_global(Y, bn, None, 1.0, exclusion="closed").taus) == [40, 61]
    assert sorted(detect_global(Y, bn, None, 1.0, exclusion="open").taus) == [40, 60]


def test_twoway_noiseless_group():
    Y = steps(100, 9, [(50, 1.0, slice(3, 6))])
    nb = from_intervals(9, [(1, 3), (4, 6), (7, 9)])
    res = detect_twoway(Y, 10, None, nb, 0.5)
    assert [(b.tau, b.s) for b in res.breaks] == [(50, 2)]
    assert res.separation_ok


def test_twoway_no_exceedance():
    nb = from_intervals(4, [(1, 2), (3, 4)])
    res = detect_twoway(np.zeros((40, 4)), 5, None, nb, 1.0)
    assert res.k_hat == 0


def test_twoway_separation_flag():
    # two close breaks in overlapping groups: detection runs, flag raised
    Y = steps(120, 8, [(50, 2.0, slice(0, 4)), (66, 2.0, slice(4, 8))])
    nb = from_intervals(8, [(1, 4), (3, 6), (5, 8)])
    res = detect_twoway(Y, 10, None, nb, 0.1)
    assert res.k_hat >= 2
    assert res.separation_ok is False
    assert any("separation" in w for w in res.warnings)


def test_jump_estimate_exact_and_offset():
    bn = 8
    Y = steps(100, 3, [(50, 2.5, slice(None))])
    for d in range(-(bn - 1), bn):
        gamma, clipped = estimate_jump(Y, 50 + d, bn)
        np.testing.assert_allclose(gamma, 2.5)
        assert not clipped
    gamma, _ = estimate_jump(np.full((40, 2), 3.0), 20, 5)
    assert not gamma.any()


def test_jump_estimate_clipped():
    Y = steps(40, 2, [(12, 1.0, slice(None))])
    gamma, clipped = estimate_jump(Y, 12, 8)
    assert clipped
    np.testing.assert_allclose(gamma, 1.0)
    with pytest.raises(ConfigError):
        estimate_jump(Y, 0, 8)


def test_result_json():
    res = detect_global(steps(100, 4, [(50, 1.0, slice(None))]), 10, None, 0.5)
    d = res.to_dict()
    assert set(d) >= {"mode", "k_hat", "omega_used", "breaks", "delta_hat"}
    assert set(d["breaks"][0]) == {"tau", "stat_value", "gamma", "boundary_clipped"}


@pytest.mark.parametrize("case", range(25))
def test_matches_bruteforce(case):
    rng = np.random.default_rng([case, 77])
    Y, bn, sigma = random_instance(rng)
    vals = stat_global(jump_profile(Y, bn, sigma)).values
    omega = gap_threshold(vals, rng.uniform(0.3, 0.95))
    for closed in (True, False):
        got = detect_global(Y, bn, sigma, omega, exclusion="closed" if closed else "open").taus
        assert got == algorithm1(Y, bn, sigma, omega, closed)
    ivs = random_intervals(rng, Y.shape[1])
    nb = from_intervals(Y.shape[1], ivs, size_ratio=np.inf)
    # from_intervals numbers groups 1..S in the given order
    brute_groups = [(k, set(range(a - 1, b))) for k, (a, b) in enumerate(ivs, start=1)]
    tw = stat_twoway(jump_profile(Y, bn, sigma), nb).values
    omega2 = gap_threshold(tw, rng.uniform(0.3, 0.95))
    got = [(b.tau, b.s) for b in detect_twoway(Y, bn, sigma, nb, omega2).breaks]
    assert got == algorithm2(Y, bn, sigma, omega2, brute_groups)
