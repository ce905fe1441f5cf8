import math
import random
from fractions import Fraction

import pytest

from fbsim.chain import Absorbing, ChainConfig, Phase, Reflective, simulate
from fbsim.closed_form import (
    coherent_outcomes,
    imaging_stats,
    p0_geometric,
    p1_limit,
    p_triple,
    p_triple_equal_t,
    p_triple_reflective,
)


def exact_triple(ts):
    """Path sums in rational arithmetic: an independent reference."""
    p0 = Fraction(0)
    prefix = Fraction(1)
    for t in ts:
        t = Fraction(t)
        p0 += ((1 - t) * prefix) ** 2
        prefix *= t
    return p0, 1 - p0 - prefix, prefix


@pytest.mark.parametrize(
    "ts,expected",
    [
        ([0.5], (0.25, 0.25, 0.5)),
        ([1.0, 1.0, 1.0], (0.0, 0.0, 1.0)),
        ([0.5, 0.5], (5 / 16, 7 / 16, 1 / 4)),
    ],
)
def test_p_triple_examples(ts, expected):
    assert p_triple(ts).as_tuple() == pytest.approx(expected, abs=1e-15)


def test_p_triple_rejects_bad_input():
    for bad in ([], [0.0], [1.2], [0.5, -0.1]):
        with pytest.raises(ValueError):
            p_triple(bad)
    for t, n in ((0.0, 3), (0.5, 0), (0.5, 2.5), (0.5, True)):
        with pytest.raises(ValueError):
            p_triple_equal_t(t, n)


def test_equal_t_examples():
    assert p_triple_equal_t(0.5, 20).p2 == 2.0**-20
    assert p_triple_equal_t(1.0, 7).as_tuple() == (0.0, 0.0, 1.0)
    p1 = p_triple_equal_t(0.5, 500).p1
    assert 2 / 3 - 1e-4 <= p1 <= 2 / 3


@pytest.mark.parametrize("t,n", [(0.3, 5), (0.5, 20), (0.9, 64), (0.77, 301)])
def test_equal_t_is_p_triple(t, n):
    assert p_triple_equal_t(t, n) == p_triple([t] * n)


@pytest.mark.parametrize("seed", range(10))
def test_against_rational_reference(seed):
    rng = random.Random(seed)
    ts = [rng.uniform(0.05, 1.0) for _ in range(rng.randint(1, 30))]
    ref = exact_triple(ts)
    got = p_triple(ts).as_tuple()
    for g, r in zip(got, ref):
        assert abs(g - float(r)) <= 1e-15


@pytest.mark.parametrize("t", [0.2, 0.5, 0.8])
def test_long_chain_against_geometric_form(t):
    n = 10_000
    assert p_triple_equal_t(t, n).p0 == pytest.approx(p0_geometric(t, n), rel=1e-13)


def test_p1_converges_monotonically():
    for t in (0.3, 0.5, 0.9):
        prev = 0.0
        for n in (1, 2, 5, 10, 100, 1000, 10_000):
            p1 = p_triple_equal_t(t, n).p1
            assert p1 >= prev
            assert p1 <= p1_limit(t) + 1e-15
            prev = p1
        assert prev == pytest.approx(p1_limit(t), abs=1e-12)


def test_reflective_examples():
    assert p_triple_reflective([0.5]).as_tuple() == pytest.approx((0.5, 0.5, 0.0), abs=1e-15)
    assert p_triple_reflective([1.0]).as_tuple() == (1.0, 0.0, 0.0)
    assert p_triple_reflective([0.5, 0.5]).as_tuple() == pytest.approx((6 / 16, 10 / 16, 0.0), abs=1e-15)


def test_p1_limit_examples():
    assert p1_limit(0.5) == 2 / 3
    assert p1_limit(1.0) == 1.0
    assert p1_limit(0.25) == pytest.approx(0.4, abs=1e-15)
    with pytest.raises(ValueError):
        p1_limit(0.0)


def test_imaging_stats_examples():
    s = imaging_stats(0.5, None, 10, asymptotic=True)
    assert s.epsilon == pytest.approx(3.0**-10, abs=1e-15)
    assert s.p2_cumulative == 0.0
    s = imaging_stats(0.5, 20, 10)
    assert s.p2_cumulative == pytest.approx(1 - (1 - 2.0**-20) ** 10, rel=1e-12)
    for t, n in ((0.4, 3), (0.9, 11)):
        assert imaging_stats(t, n, 1).epsilon == pytest.approx(1 - p_triple_equal_t(t, n).p1, abs=1e-15)
    with pytest.raises(ValueError):
        imaging_stats(0.5, None, 10)
    with pytest.raises(ValueError):
        imaging_stats(0.5, 3, 0)


def test_varied_splitters_bound_p2():
    rng = random.Random(4)
    for _ in range(20):
        ts = [rng.uniform(0.45, 0.55) for _ in range(20)]
        assert p_triple(ts).p2 <= 0.55**20


@pytest.mark.parametrize("seed", range(25))
def test_path_sum_mode_matches_formulas(seed):
    rng = random.Random(seed)
    n = rng.randint(1, 12)
    ts = tuple(rng.uniform(0.05, 1.0) for _ in range(n))
    c = ChainConfig(n, ts, (5,) * n, coherent=False)
    tri = p_triple(ts)
    d = simulate(c, Absorbing())
    assert (d.p_source, d.p_detect, d.p_object) == pytest.approx(tri.as_tuple(), abs=1e-12)
    tri = p_triple_reflective(ts)
    d = simulate(c, Reflective(2))
    assert (d.p_source, d.p_detect, d.p_object) == pytest.approx(tri.as_tuple(), abs=1e-12)


@pytest.mark.parametrize("seed", range(25))
def test_coherent_form_matches_simulation(seed):
    rng = random.Random(100 + seed)
    n = rng.randint(1, 12)
    ts = tuple(rng.uniform(0.05, 1.0) for _ in range(n))
    c = ChainConfig(n, ts, (5,) * n)
    for obj in (Absorbing(), Reflective(3), Phase(rng.uniform(-3, 3), rng.uniform(0, 1))):
        assert simulate(c, obj).max_abs_diff(coherent_outcomes(ts, obj)) <= 1e-12


def test_coherent_two_stage_by_hand():
    d = coherent_outcomes([0.5, 0.5], Absorbing())
    assert d.p_source == pytest.approx(9 / 16)
    assert d.p_detector == pytest.approx((1 / 16, 1 / 8))
    assert math.fsum(d.as_vector()) == pytest.approx(1.0)
