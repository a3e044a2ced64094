import math

import numpy as np
import pytest

from lppcoal.environment import DomainError, ParameterError, RngStream, WeightField
from lppcoal.lpp import passage_time
from lppcoal.queueing import (QueueInput, agreement_limit, agreement_parameters, b_field,
                              cumulative_idle, departures, final_waits, indicator_Am,
                              lemma59_lower_bound, lindley_waits, random_walk_sup_bound,
                              random_walk_sups, rates_for_densities, sample_queue_input,
                              sample_stationary_pair, stationary_wait_quantile)


def test_lindley_by_hand():
    q = QueueInput(np.array([1.0, 5.0, 1.0]), np.array([2.0, 1.0, 3.0, 0.5]))
    tr = departures(q, 0.0)
    # w1 = max(0 + 2 - 1, 0) = 1, w2 = max(1 + 1 - 5, 0) = 0 (idle 3), w3 = max(0 + 3 - 1, 0) = 2
    assert tr.waits.tolist() == [0.0, 1.0, 0.0, 2.0]
    assert tr.idles.tolist() == [0.0, 3.0, 0.0]
    assert tr.departures.tolist() == [1.0, 6.0, 0.5]


def test_queue_input_validation():
    with pytest.raises(ParameterError):
        QueueInput(np.ones(3), np.ones(3))
    with pytest.raises(ParameterError):
        QueueInput(np.array([1.0, -1.0]), np.ones(3))
    with pytest.raises(ParameterError):
        lindley_waits(QueueInput(np.ones(1), np.ones(2)), -0.1)


def test_cumulative_idle_windows():
    q = sample_queue_input(RngStream(1, ("q",)), 0.4, 0.6, 500)
    tr = departures(q, 0.3)
    for k, l in [(1, 500), (17, 17), (100, 420)]:
        assert cumulative_idle(q, 0.3, k, l) == pytest.approx(tr.idles[k - 1:l].sum(), rel=1e-9, abs=1e-12)
    with pytest.raises(DomainError):
        cumulative_idle(q, 0.0, 5, 4)


def test_wait_quantile():
    beta, alpha = 0.4, 0.6
    assert stationary_wait_quantile(1.0 - beta / alpha - 1e-12, beta, alpha) == 0.0
    u = 1.0 - beta / alpha * math.exp(-0.2 * 3.0)
    assert stationary_wait_quantile(u, beta, alpha) == pytest.approx(3.0)
    with pytest.raises(ParameterError):
        stationary_wait_quantile(0.5, 0.6, 0.4)


def test_pair_structure():
    pair = sample_stationary_pair(RngStream(2, ("p",)), 0.3, 0.5, 1000)
    assert np.allclose(pair.upper, pair.idles + pair.lower)
    assert (pair.upper >= pair.lower).all()
    assert indicator_Am(pair, 0) == (pair.idles[0] == 0.0)
    with pytest.raises(ParameterError):
        sample_stationary_pair(RngStream(2), 0.3, 0.5, 10, init="warm")


def test_rates_for_densities():
    assert rates_for_densities(0.4, 0.6) == pytest.approx((0.4, 0.6))
    with pytest.raises(ParameterError):
        rates_for_densities(0.6, 0.4)


def test_final_waits_exact_init_mean():
    w = final_waits(RngStream(3, ("fw",)), 0.4, 0.6, 20_000, 50, "exact")
    # stationary mean: (beta/alpha) / (alpha - beta)
    assert w.mean() == pytest.approx((0.4 / 0.6) / 0.2, rel=0.05)
    assert np.array_equal(w[5000:6000],
                          final_waits(RngStream(3, ("fw",)), 0.4, 0.6, 1000, 50, "exact", start=5000))


def test_b_field_increments():
    f = WeightField(RngStream(4), (0, 0), (5, 5))
    tab = passage_time(f, (0, 0), (5, 5))
    out = b_field(tab, [(0, 5), (1, 5), (1, 4)])
    assert out[0] == ((0, 5), 1, tab.value((1, 5)) - tab.value((0, 5)))
    assert out[1][:2] == ((1, 4), 2)
    with pytest.raises(DomainError):
        b_field(tab, [(0, 0), (1, 1)])


def test_bound_formulas():
    theta, m = agreement_parameters(0.01, 2.0, 1e6)
    assert m == math.floor(0.01 * 1e4 / 4)
    assert theta == pytest.approx(10 * 2 * 0.01)
    assert agreement_limit(0.0) == 1.0
    assert random_walk_sup_bound(0.6, 0.4, 0.0) == pytest.approx(2 / 3)
    v = lemma59_lower_bound(25, 2.0, 1e6, 0.2)
    assert v > 1 - 2 * 0.02 / 0.52
    with pytest.raises(ParameterError):
        lemma59_lower_bound(0, 2.0, 1e6, 0.2)


def test_random_walk_sups_chunking():
    s = RngStream(5, ("rw",))
    a = random_walk_sups(s, 0.6, 0.4, 300, 50, chunk=7)
    b = random_walk_sups(s, 0.6, 0.4, 300, 50, chunk=50)
    assert np.array_equal(a, b)
