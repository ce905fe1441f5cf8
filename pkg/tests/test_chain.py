import cmath
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbsim import chain
from fbsim.chain import (
    Absent,
    Absorbing,
    ChainConfig,
    NonTerminatingError,
    Phase,
    Port,
    Reflective,
    bs_transform,
    detector_probability_vs_phase,
    enumerate_paths_oracle,
    qwp_phase,
    simulate,
)

ts_strategy = st.floats(min_value=0.01, max_value=1.0, allow_nan=False)


def cfg(ts, coherent=True, **kw):
    ts = list(ts)
    return ChainConfig(len(ts), tuple(ts), (4,) * len(ts), coherent=coherent, **kw)


# -- elementary optics -------------------------------------------------------


def test_bs_left_input_matches_split_rule():
    t = 0.3
    s, r = bs_transform(1, Port.LEFT, t)
    assert s == pytest.approx(math.sqrt(t))
    assert r == pytest.approx(-1j * math.sqrt(1 - t))


def test_bs_fully_transmissive():
    assert bs_transform(1, "left", 1.0) == (1, 0)


def test_bs_right_input_hand_value():
    s, r = bs_transform(0.6j, Port.RIGHT, 0.5)
    assert s == pytest.approx(0.6j / math.sqrt(2), abs=1e-15)
    assert r == pytest.approx(0.6 / math.sqrt(2), abs=1e-15)


@pytest.mark.parametrize("t", [0.0, -0.1, 1.5, float("nan")])
def test_bs_rejects_bad_t(t):
    with pytest.raises(ValueError):
        bs_transform(1, Port.ARM, t)


@given(ts_strategy, st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_bs_conserves_norm(t, a):
    s, r = bs_transform(a, Port.LEFT, t)
    assert abs(s) ** 2 + abs(r) ** 2 == pytest.approx(abs(a) ** 2, rel=1e-12, abs=1e-12)


def test_qwp_examples():
    assert qwp_phase(1, 1) == 1j
    r = 0.25
    assert qwp_phase(-1j * math.sqrt(r), 2) == pytest.approx(1j * math.sqrt(r))
    assert qwp_phase(1, 4) == 1
    with pytest.raises(ValueError):
        qwp_phase(1, 0)


# -- configuration -----------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n_stages=0, transmissivities=(), segment_lengths=()),
        dict(n_stages=2, transmissivities=(0.5,), segment_lengths=(4, 4)),
        dict(n_stages=1, transmissivities=(0.0,), segment_lengths=(4,)),
        dict(n_stages=1, transmissivities=(0.5,), segment_lengths=(0,)),
        dict(n_stages=1, transmissivities=(0.5,), segment_lengths=(4,), bs_loss=1.0),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ChainConfig(**kwargs)


def test_reflectivity_is_derived():
    c = cfg([0.25, 0.5])
    assert c.reflectivities == (0.75, 0.5)


def test_reflective_offset_must_fit_final_segment():
    with pytest.raises(ValueError):
        simulate(cfg([0.5]), Reflective(4))


# -- simulate: documented examples -------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 5, 12])
@pytest.mark.parametrize("t", [0.1, 0.5, 0.93, 1.0])
def test_absent_object_never_clicks(n, t):
    d = simulate(ChainConfig.uniform(t, n))
    assert sum(d.p_detector) <= 1e-12
    assert d.p_source >= 1 - 1e-12
    assert d.p_loss == 0


@pytest.mark.parametrize("coherent", [True, False])
def test_single_stage_absorber(coherent):
    d = simulate(cfg([0.5], coherent), Absorbing())
    assert d.p_source == pytest.approx(0.25, abs=1e-15)
    assert d.p_detector == pytest.approx((0.25,), abs=1e-15)
    assert d.p_object == pytest.approx(0.5, abs=1e-15)


def test_two_stage_absorber_coherent_frozen():
    # amplitude sum: rho_2 = r = 1/2, rho_1 = r + t*rho_2 = 3/4
    d = simulate(cfg([0.5, 0.5]), Absorbing())
    assert d.p_source == pytest.approx(9 / 16, abs=1e-15)
    assert d.p_detector == pytest.approx((1 / 16, 1 / 8), abs=1e-15)
    assert d.p_object == pytest.approx(1 / 4, abs=1e-15)


def test_two_stage_absorber_path_sum_mode():
    d = simulate(cfg([0.5, 0.5], coherent=False), Absorbing())
    assert d.p_source == pytest.approx(5 / 16, abs=1e-15)
    assert d.p_detect == pytest.approx(7 / 16, abs=1e-15)
    assert d.p_object == pytest.approx(1 / 4, abs=1e-15)


@pytest.mark.parametrize("coherent", [True, False])
@pytest.mark.parametrize("offset", [1, 2, 3])
def test_single_stage_reflector(coherent, offset):
    d = simulate(cfg([0.5], coherent), Reflective(offset))
    assert d.p_source == pytest.approx(0.5, abs=1e-15)
    assert d.p_detect == pytest.approx(0.5, abs=1e-15)
    assert d.p_object == 0


def test_invisible_phase_object():
    c = ChainConfig.uniform(0.5, 4)
    assert simulate(c, Phase(0.0, 1.0)) == simulate(c, Absent())


@given(st.lists(ts_strategy, min_size=1, max_size=8))
def test_reflective_offset_zero_is_mirror_x(ts):
    c = cfg(ts)
    a, b = simulate(c, Reflective(0)), simulate(c, Absent())
    assert a.max_abs_diff(b) <= 1e-12


@settings(max_examples=60)
@given(
    st.lists(ts_strategy, min_size=1, max_size=8),
    st.sampled_from([Absent(), Absorbing(), Reflective(1), Reflective(2), Phase(1.1, 0.6)]),
    st.booleans(),
)
def test_distribution_normalised(ts, obj, coherent):
    d = simulate(cfg(ts, coherent), obj)
    assert min(d.as_vector()) >= -1e-15
    assert d.total == pytest.approx(1.0, abs=1e-12)


def test_single_stage_equals_between_modes():
    for obj in (Absorbing(), Reflective(1), Absent()):
        a = simulate(cfg([0.37]), obj)
        b = simulate(cfg([0.37], coherent=False), obj)
        if isinstance(obj, Absent):
            continue  # the path-sum mode loses the dark-port cancellation
        assert a.max_abs_diff(b) <= 1e-15


# -- losses --------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 3, 7])
def test_balanced_loss_keeps_dark_port_dark(n):
    c = ChainConfig.uniform(0.6, n, bs_loss=0.05, mirror_loss=0.02).balanced()
    d = simulate(c)
    assert d.p_detect <= 1e-12
    assert d.p_loss > 0.01
    assert d.total == pytest.approx(1.0, abs=1e-12)


def test_unbalanced_loss_leaks_dark_counts():
    c = ChainConfig.uniform(0.6, 3, arm_loss=(0.2, 0.0, 0.0))
    assert simulate(c).p_detect > 1e-4


def test_losses_are_accounted():
    c = ChainConfig.uniform(0.5, 3, bs_loss=0.1, mirror_loss=0.1)
    d = simulate(c, Absorbing())
    assert d.total == pytest.approx(1.0, abs=1e-12)
    assert d.p_loss > 0


# -- time bins ----------------------------------------------------------------


def test_early_return_does_not_interfere():
    # offset 0 puts the reflector's return in the Y-arm bin (merged); any
    # offset > 0 separates it, so the two distributions must differ
    c = ChainConfig.uniform(0.5, 3)
    merged, separate = simulate(c, Reflective(0)), simulate(c, Reflective(1))
    assert merged.max_abs_diff(separate) > 0.1
    assert simulate(c, Reflective(1)) == simulate(c, Reflective(3))


def test_bin_budget_guard(monkeypatch):
    monkeypatch.setattr(chain, "BIN_BUDGET_FACTOR", 0)
    with pytest.raises(NonTerminatingError):
        simulate(ChainConfig.uniform(0.5, 2))


# -- oracle -------------------------------------------------------------------


def test_oracle_single_stage_absent():
    assert enumerate_paths_oracle(cfg([0.5])).p_source == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize(
    "config,obj",
    [
        (ChainConfig.uniform(0.7, 3), Absorbing()),
        (ChainConfig.uniform(0.5, 2), Reflective(1)),
        (ChainConfig.uniform(0.5, 4, bs_loss=0.1, mirror_loss=0.05), Phase(0.4, 0.8)),
        (ChainConfig(3, (0.2, 0.9, 0.5), (1, 3, 5), coherent=False), Reflective(2)),
    ],
)
def test_oracle_matches_simulation(config, obj):
    assert simulate(config, obj).max_abs_diff(enumerate_paths_oracle(config, obj)) <= 1e-10


def test_oracle_refuses_large_chains():
    with pytest.raises(ValueError):
        enumerate_paths_oracle(ChainConfig.uniform(0.5, 13))


# -- phase sweep --------------------------------------------------------------


def test_phase_sweep_properties():
    c = ChainConfig.uniform(0.5, 1)
    assert detector_probability_vs_phase(c, [0.0])[0][1] <= 1e-12
    (_, at_pi), = detector_probability_vs_phase(c, [math.pi])
    assert at_pi == pytest.approx(enumerate_paths_oracle(c, Phase(math.pi, 1.0)).p_detect, abs=1e-12)
    phis = [0.1 * k for k in range(1, 20)]
    pos = detector_probability_vs_phase(ChainConfig.uniform(0.7, 4), phis, 0.9)
    neg = detector_probability_vs_phase(ChainConfig.uniform(0.7, 4), [-p for p in phis], 0.9)
    for (_, a), (_, b) in zip(pos, neg):
        assert a == pytest.approx(b, abs=1e-12)


def test_phase_pi_single_stage_hand_value():
    # end reflection c = exp(2i*pi) = 1 again, so pi is invisible; pi/2 gives c = -1
    c = ChainConfig.uniform(0.5, 1)
    assert simulate(c, Phase(math.pi, 1.0)).p_detect == pytest.approx(0.0, abs=1e-12)
    rho = 0.5 + 0.5 * cmath.exp(1j * math.pi)
    d = simulate(c, Phase(math.pi / 2, 1.0))
    assert d.p_detect == pytest.approx(0.25 * abs(1 - (-1)) ** 2, abs=1e-12)
    assert d.p_source == pytest.approx(abs(rho) ** 2, abs=1e-12)
