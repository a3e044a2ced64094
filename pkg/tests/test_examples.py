"""Worked examples attached to individual operations: hand values, small
oracles and moderate Monte Carlo checks (the heavy ones live in
test_diagnostics.py and test_acceptance.py)."""

import math

import numpy as np
import pytest
from scipy import stats

from lppcoal import experiments as ex
from lppcoal.environment import RngStream, WeightField
from lppcoal.geometry import (coalescence_point, corner_point, cylinder, horizon, indicator_crossing,
                              indicator_E1, region_count, region_sites, segment)
from lppcoal.lpp import (InitialCondition, backtrack_geodesic, deviation_profile, line_passage_table,
                         passage_time)
from lppcoal.oracles import brute_force_lpp
from lppcoal.queueing import (agreement_limit, lemma59_lower_bound, random_walk_sup_bound,
                              sample_stationary_pair)
from lppcoal.stationary import (build_antidiagonal_h0, build_axis_boundary, build_backward_boundary,
                                backward_stationary_passage, characteristic_direction, density_of,
                                horizontal_exit, stationary_passage)

SEED = 99


def _within_3sigma(x, mean, sd, n):
    return abs(x - mean) <= 3 * sd / math.sqrt(n)


# --- random streams ----------------------------------------------------------

def test_exponential_mean_rate_half():
    x = RngStream(SEED, ("ex-mean",)).exponentials(0.5, 0, 100_000)
    assert _within_3sigma(x.mean(), 2.0, 2.0, len(x))


def test_field_variance():
    w = WeightField(RngStream(SEED, ("ex-var",)), (0, 0), (315, 315)).weights.ravel()
    # Var(s^2) ~ (mu4 - 1) / n with mu4 = 9 for Exp(1)
    assert abs(w.var() - 1.0) <= 3 * math.sqrt(8.0 / w.size)


def test_labels_give_independent_streams():
    s = RngStream(SEED, ("ex-ind",))
    a, b = s.derive("bulk").uniforms(0, 10_000), s.derive("boundary-rho").uniforms(0, 10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) <= 3 / math.sqrt(10_000)
    bnd = build_axis_boundary(s, 0.4, (0, 0), 10_000)
    assert abs(np.corrcoef(bnd.I, bnd.J)[0, 1]) <= 3 / math.sqrt(10_000)


# --- point-to-point ------------------------------------------------------------

def test_two_by_two_example():
    f = WeightField.from_array([[1, 3], [2, 4]])  # w(0,0)=1, w(0,1)=3, w(1,0)=2, w(1,1)=4
    tab = passage_time(f, (0, 0), (1, 1))
    assert tab.value((1, 1)) == 8
    assert backtrack_geodesic(tab, (1, 1)).sites.tolist() == [[0, 0], [0, 1], [1, 1]]


def test_five_by_five_seventy_paths():
    f = WeightField(RngStream(SEED, ("ex-5",)), (0, 0), (4, 4))
    v, p = brute_force_lpp(f.weights, (0, 0), (4, 4))
    tab = passage_time(f, (0, 0), (4, 4))
    assert tab.value((4, 4)) == pytest.approx(v, abs=1e-12)
    assert np.array_equal(backtrack_geodesic(tab, (4, 4)).sites, p)


def test_flat_line_to_point_exit_symmetric():
    N, K, trials = 200, 400, 10_000
    pos = neg = 0
    h0 = InitialCondition.flat(K)
    for t in range(trials):
        f = WeightField(RngStream(SEED, ("ex-flat", t)), (-N, -N), (N, N))
        z = line_passage_table(f, h0, (N, N)).exit((N, N))
        pos += z > 0
        neg += z < 0
    assert abs(pos / trials - 0.5) <= 0.02


def test_flat_exit_reflection():
    # flat data ties at the first step, the e2 rule resolves it upward,
    # so transposing the field sends z to 1 - z rather than -z
    N, h0 = 30, InitialCondition.flat(60)
    for t in range(50):
        f = WeightField(RngStream(SEED, ("ex-refl", t)), (-N, -N), (N, N))
        g = WeightField.from_array(f.weights.T, lo=(-N, -N))
        a, b = line_passage_table(f, h0, (N, N)), line_passage_table(g, h0, (N, N))
        assert b.value((N, N)) == a.value((N, N))
        assert b.exit((N, N)) == 1 - a.exit((N, N))


def test_deviation_profile_matches_scan():
    f = WeightField(RngStream(SEED, ("ex-dev",)), (0, 0), (49, 49))
    g = backtrack_geodesic(passage_time(f, (0, 0), (49, 49)), (49, 49))
    dp = deviation_profile(g, (0.5, 0.5))
    for k in range(50):
        ys = [y for x, y in g.sites.tolist() if x == k]
        assert dp.at(k) == max(abs(y - k) for y in ys)


# --- stationary -----------------------------------------------------------------

def test_direction_density_hand_values():
    assert characteristic_direction(1 / 3) == pytest.approx((4 / 5, 1 / 5))
    assert density_of((4 / 5, 1 / 5)) == pytest.approx(1 / 3)


def test_boundary_I_law():
    b = build_axis_boundary(RngStream(SEED, ("ex-ks",)), 0.7, (0, 0), 10_000)
    assert stats.kstest(b.I, stats.expon(scale=1 / 0.3).cdf).pvalue >= 0.01


def _stationary_oracle(w, I, J, x):
    best = -np.inf
    for k in range(1, x[0] + 1):
        if x[1] >= 1:
            best = max(best, I[:k].sum() + brute_force_lpp(w, (k, 1), x)[0])
    for l in range(1, x[1] + 1):
        if x[0] >= 1:
            best = max(best, J[:l].sum() + brute_force_lpp(w, (1, l), x)[0])
    return best


def test_stationary_four_by_four_decomposition():
    s = RngStream(SEED, ("ex-st4",))
    for k in range(5):
        f = WeightField(s.derive(k), (0, 0), (4, 4))
        b = build_axis_boundary(s.derive(("b", k)[0]).derive(k), 0.5, (0, 0), 4)
        tab, _ = stationary_passage(b, f, (4, 4))
        assert tab.value((4, 4)) == pytest.approx(_stationary_oracle(f.weights, b.I, b.J, (4, 4)), abs=1e-12)


def test_backward_stationary_four_by_four():
    s = RngStream(SEED, ("ex-bw4",))
    for k in range(5):
        f = WeightField(s.derive(k), (0, 0), (4, 4))
        b = build_backward_boundary(s.derive("b").derive(k), 0.4, (4, 4), 4)
        v, _ = backward_stationary_passage(b, f, (0, 0))
        # point-reflect by hand and reuse the forward oracle
        assert v == pytest.approx(_stationary_oracle(f.weights[::-1, ::-1], b.I, b.J, (4, 4)), abs=1e-12)


def test_h0_first_increment_mean_zero():
    n = 100_000
    inc = np.array([build_antidiagonal_h0(RngStream(SEED, ("ex-h0", t)), 0.5, 1)(1) for t in range(n)])
    assert _within_3sigma(inc.mean(), 0.0, math.sqrt(8.0), n)


def test_h0_sigma_zero_is_flat():
    assert not build_antidiagonal_h0(RngStream(SEED), 0.5, 20, sigma=0.0).profile.any()


def test_line_to_point_increments_stationary():
    rho, K, hi = 0.6, 100, (60, 60)
    inc = []
    for t in range(100):
        s = RngStream(SEED, ("ex-g-h0", t))
        f = WeightField(s.derive("bulk"), (-K, -K), hi)
        tab = line_passage_table(f, build_antidiagonal_h0(s, rho, K), hi)
        inc.append(np.diff(tab.values[30 - tab.lo[0]: 51 - tab.lo[0], 60 - tab.lo[1]]))
    assert stats.kstest(np.concatenate(inc), stats.expon(scale=1 / (1 - rho)).cdf).pvalue >= 0.01


def test_horizontal_exit_matches_scan():
    s = RngStream(SEED, ("ex-hx",))
    f = WeightField(s, (0, 0), (80, 80))
    tab, _ = stationary_passage(build_axis_boundary(s.derive("b"), 0.5, (0, 0), 80), f, (80, 80))
    g = backtrack_geodesic(tab, (80, 80))
    for row in (5, 40, 79):
        xs = [x for x, y in g.sites.tolist() if y == row]
        assert horizontal_exit(g, row) == max(xs) - row


# --- queueing --------------------------------------------------------------------

def test_pair_marginals_and_idle_atom():
    beta, alpha = 0.4, 0.6
    up, low, idle = [], [], []
    for q in range(10):
        p = sample_stationary_pair(RngStream(SEED, ("ex-pair", q)), beta, alpha, 1000)
        up.append(p.upper)
        low.append(p.lower)
        idle.append(p.idles)
    up, low, idle = map(np.concatenate, (up, low, idle))
    assert stats.kstest(up, stats.expon(scale=1 / beta).cdf).pvalue >= 0.01
    assert stats.kstest(low, stats.expon(scale=1 / alpha).cdf).pvalue >= 0.01
    assert abs(float((up == low).mean()) - beta / alpha) <= 0.02


def test_lemma59_hand_value():
    assert lemma59_lower_bound(10, 1.0, 1e3, 0.2) == pytest.approx(8.3553, abs=1e-4)


def test_agreement_limit():
    assert agreement_limit(1e-4) == pytest.approx(1 - math.exp(4.08) * 0.01 / 1.02)
    # C = 62 bounds the limit only for eta up to about 4.4e-4
    for e in (1e-5, 1e-4, 4e-4):
        assert agreement_limit(e) >= 1 - 62 * math.sqrt(e)
    for e in (1e-3, 5e-3, 1e-2):
        assert agreement_limit(e) < 1 - 62 * math.sqrt(e)


def test_random_walk_bound_values():
    assert random_walk_sup_bound(0.6, 0.4, 5.0) == pytest.approx(2 / 3 * math.exp(-1), abs=1e-12)
    assert random_walk_sup_bound(0.6, 0.4, 10.0) == pytest.approx(0.0902, abs=1e-4)


# --- regions and geometry ---------------------------------------------------------

def test_cylinder_count_at_scaling():
    sp = ex.scaling_parameters(0.2, 600)
    C = cylinder(0.2, sp.t_r, 600)
    i0 = math.ceil((1 - sp.t_r) * 600 - 1e-9)
    assert region_count(C) == len(region_sites(C)) == (600 - i0 + 1) * (2 * C.half_width + 1)


def test_coalescence_point_matches_full_scan():
    s = RngStream(SEED, ("ex-cp",))
    for k in range(20):
        f = WeightField(s.derive(k), (0, 0), (49, 49))
        a = backtrack_geodesic(passage_time(f, (0, 3), (49, 49)), (49, 49))
        b = backtrack_geodesic(passage_time(f, (5, 0), (49, 49)), (49, 49))
        common = set(map(tuple, a.sites.tolist())) & set(map(tuple, b.sites.tolist()))
        assert coalescence_point(a, b).site == min(common, key=sum)


def test_scaling_report_at_0_2():
    sp = ex.scaling_parameters(0.2, 600)
    rep = sp.report()
    assert len(rep) == 4 and all("margin" in line for line in rep)


def test_corner_reduction_exhaustive_n60():
    for t in range(30):
        a = ex.run_trial_coalescence(60, 0.3, SEED, t, starts="all", early_exit=False)
        b = ex.run_trial_coalescence(60, 0.3, SEED, t, starts="edges", early_exit=False)
        assert a.flags == b.flags
