import numpy as np
import pytest

from lppcoal.environment import DomainError, ParameterError, RngStream, WeightField
from lppcoal.lpp import (GeodesicPath, InitialCondition, backtrack_geodesic, backward_passage_values,
                         deviation_profile, line_passage_table, passage_time,
                         passage_time_from_line, truncated)
from lppcoal.oracles import brute_force_lpp, up_right_paths


def test_path_enumeration_counts():
    from math import comb
    assert sum(1 for _ in up_right_paths((0, 0), (3, 4))) == comb(7, 3)
    assert sum(1 for _ in up_right_paths((2, 2), (2, 2))) == 1


def test_hand_computed_3x3():
    w = [[1, 2, 3], [4, 5, 6], [7, 8, 9]]
    f = WeightField.from_array(w)
    tab = passage_time(f, (0, 0), (2, 2))
    assert tab.value((2, 2)) == 1 + 4 + 7 + 8 + 9
    g = backtrack_geodesic(tab, (2, 2))
    assert g.sites.tolist() == [[0, 0], [1, 0], [2, 0], [2, 1], [2, 2]]


def test_ties_resolved_to_e2():
    f = WeightField.from_array(np.ones((2, 2)))
    tab = passage_time(f, (0, 0), (1, 1))
    # the step into (1, 1) is e2
    assert tab.direction((1, 1)) == 1
    assert backtrack_geodesic(tab, (1, 1)).sites.tolist() == [[0, 0], [1, 0], [1, 1]]


@pytest.mark.parametrize("k", range(10))
def test_dp_matches_enumeration(k):
    f = WeightField(RngStream(11, ("lpp", k)), (2, -1), (7, 3))
    tab = passage_time(f, (2, -1), (7, 3))
    for t in [(7, 3), (4, 3), (7, 0)]:
        v, p = brute_force_lpp(f.weights, (0, 0), (t[0] - 2, t[1] + 1))
        assert abs(tab.value(t) - v) <= 1e-12
        assert np.array_equal(backtrack_geodesic(tab, t).sites - [2, -1], p)


def test_backward_equals_forward_on_reflection(stream):
    f = WeightField(stream, (0, 0), (12, 9))
    back = backward_passage_values(f, (0, 0), (12, 9))
    r = f.reflected()
    fwd = passage_time(r, (0, 0), (12, 9)).values
    assert np.allclose(back, fwd[::-1, ::-1], rtol=0, atol=1e-12)
    assert back[0, 0] == pytest.approx(passage_time(f, (0, 0), (12, 9)).value((12, 9)), abs=1e-12)


def test_domain_errors(stream):
    f = WeightField(stream, (0, 0), (4, 4))
    with pytest.raises(DomainError):
        passage_time(f, (3, 0), (2, 4))
    with pytest.raises(DomainError):
        GeodesicPath(np.array([[0, 0], [1, 1]]), 0.0)


def _line_oracle(f, h0, target):
    best, arg = -np.inf, None
    for k in range(-h0.K, h0.K + 1):
        s = (k, -k)
        if s[0] > target[0] or s[1] > target[1]:
            continue
        v, _ = brute_force_lpp(f.weights, (s[0] - f.lo[0], s[1] - f.lo[1]),
                               (target[0] - f.lo[0], target[1] - f.lo[1]))
        v += h0(k) - f.weights[s[0] - f.lo[0], s[1] - f.lo[1]]
        if v > best:
            best, arg = v, k
    return best, arg


def test_line_to_point_matches_enumeration():
    s = RngStream(3, ("line",))
    K = 3
    inc = s.derive("inc").uniforms(0, 2 * K + 1) - 0.5
    h0 = InitialCondition.from_increments(inc, K)
    f = WeightField(s, (-K, -K), (4, 4))
    for target in [(4, 4), (2, 3), (4, 0)]:
        v, z, tr = passage_time_from_line(f, h0, target)
        ov, oz = _line_oracle(f, h0, target)
        assert v == pytest.approx(ov, abs=1e-12)
        assert z == oz
        assert tr == truncated(z, K, target)


def test_initial_condition_profile():
    inc = np.array([0.0, 1.0, 2.0, 3.0, 4.0])  # K = 2
    h0 = InitialCondition.from_increments(inc, 2)
    assert [h0(k) for k in (-2, -1, 0, 1, 2)] == [-3.0, -2.0, 0.0, 3.0, 7.0]
    assert InitialCondition.flat(4)(3) == 0.0
    with pytest.raises(ParameterError):
        InitialCondition(np.ones(3), 1)


def test_truncation_rule():
    assert truncated(5, 5, (10, 10))
    assert not truncated(5, 5, (5, 10))
    assert truncated(-5, 5, (10, 10))
    assert not truncated(4, 5, (10, 10))


def test_line_table_flat_profile_symmetric_target(stream):
    f = WeightField(stream, (-20, -20), (10, 10))
    tab = line_passage_table(f, InitialCondition.flat(20), (10, 10))
    assert tab.kind == "line"
    g = backtrack_geodesic(tab, (10, 10))
    assert g.bulk_start == 1 and sum(g.sites[0]) == 0


def test_deviation_profile():
    sites = np.array([[0, 0], [1, 0], [1, 1], [1, 2], [2, 2]])
    dp = deviation_profile(GeodesicPath(sites, 0.0), (0.5, 0.5))
    assert dp.columns.tolist() == [0, 1, 2]
    assert dp.at(1) == 1.0
    assert dp.at(2) == 0.0
