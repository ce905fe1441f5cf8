import json
import math

import numpy as np
import pytest

from fbsim.geometry import (
    CapacityError,
    Layout,
    LayoutError,
    PlanarMirror,
    Spacings,
    TraceIncompleteError,
    build_canonical_layout,
    capacity,
    reflect_ray,
    trace_layout,
)

SP = Spacings(17, 8, 15)


def square_mirror(normal, size=1.0, anchor=(0.0, 0.0, 0.0), name="M"):
    normal = np.asarray(normal, dtype=float)
    normal /= np.linalg.norm(normal)
    helper = np.array([0.0, 0.0, 1.0]) if abs(normal[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, normal)
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    a = np.asarray(anchor, dtype=float)
    verts = [a + size * (su * u + sv * v) for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    return PlanarMirror(name, a, normal, verts)


# -- reflect_ray ----------------------------------------------------------------


def test_normal_incidence_reverses():
    m = square_mirror([-1, 0, 0], anchor=(5, 0, 0))
    hit, d = reflect_ray([0, 0, 0], [1, 0, 0], m)
    assert np.allclose(hit, [5, 0, 0])
    assert np.array_equal(d, [-1.0, 0.0, 0.0])


def test_45_degree_turn():
    m = square_mirror([-1, 1, 0], anchor=(3, 0, 0))
    hit, d = reflect_ray([0, 0, 0], [1, 0, 0], m)
    assert np.allclose(d, [0, 1, 0], atol=1e-15)
    assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-12)


def test_misses():
    m = square_mirror([-1, 0, 0], anchor=(5, 0, 0))
    assert reflect_ray([0, 0, 0], [-1, 0, 0], m) is None  # behind
    assert reflect_ray([0, 0, 0], [0, 1, 0], m) is None  # parallel
    assert reflect_ray([0, 2, 0], [1, 0, 0], m) is None  # outside aperture


def test_mirror_validation():
    with pytest.raises(LayoutError):
        PlanarMirror("M", [0, 0, 0], [2, 0, 0], [[0, 0, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(LayoutError):
        PlanarMirror("M", [0, 0, 0], [1, 0, 0], [[0, 0, 0], [1, 1, 0], [0, 0, 1]])


def test_ray_just_below_trapezoid_edge_misses():
    lay = build_canonical_layout(SP, 4)
    d_prime = lay.mirrors["D'"]
    # the lowest aperture vertex lies on the clearance edge; aim just below it
    verts = d_prime.aperture
    low = verts[np.argmin(verts[:, 2])]
    edge = [v for v in verts if abs(v[2] - low[2]) < 1e-9]
    mid = np.mean(edge, axis=0)
    origin = mid + 10 * d_prime.normal
    target = mid - np.array([0.0, 0.0, 1e-3])
    assert reflect_ray(origin, target - origin, d_prime) is None
    assert reflect_ray(origin, mid + np.array([0.0, 0.0, 1e-3]) - origin, d_prime) is not None


# -- spacings -----------------------------------------------------------------


def test_spacings_invariant():
    assert math.degrees(SP.theta) == pytest.approx(61.92751306414704, abs=1e-12)
    with pytest.raises(LayoutError):
        Spacings(17, 8, 14)
    with pytest.raises(LayoutError):
        Spacings(8, 8, 0)


@pytest.mark.parametrize("k", [0.01, 1.0, 250.0])
def test_tilt_scale_invariant(k):
    lay = build_canonical_layout(Spacings(17 * k, 8 * k, 15 * k), 3)
    assert lay.tilt_theta == pytest.approx(SP.theta, abs=1e-12)


# -- canonical layouts -----------------------------------------------------------


def test_canonical_n4():
    r = trace_layout(build_canonical_layout(SP, 4))
    assert r.parallel_ok and r.lengths_ok and r.delay_match_ok and r.clearance_ok
    L = r.circle_length
    assert r.delay_lengths == pytest.approx([3 * L, 2 * L, L, 0.0], rel=1e-12, abs=1e-9)
    assert r.theta_deg == pytest.approx(61.9275130641, abs=1e-6)
    assert max(v for k, v in r.residuals.items() if k != "clearance_margin") < 1e-9


@pytest.mark.parametrize("spacings", [(17, 8, 15), (5, 3, 4), (5, 4, 3), (13, 12, 5), (0.17, 0.08, 0.15)])
@pytest.mark.parametrize("n", [1, 2, 3, 6, 12])
def test_canonical_layouts_pass(spacings, n):
    r = trace_layout(build_canonical_layout(Spacings(*spacings), n))
    assert r.all_ok, r.notes
    assert len(r.round_lengths) == n - 1
    assert len(r.delay_lengths) == n


def test_bs_extra_length_is_added():
    base = trace_layout(build_canonical_layout(SP, 3))
    extra = trace_layout(build_canonical_layout(SP, 3, bs_extra_length=2.5))
    assert extra.all_ok
    assert extra.circle_length == pytest.approx(base.circle_length + 2.5, rel=1e-12)


def test_layout_round_trip():
    lay = build_canonical_layout(SP, 4)
    again = Layout.from_dict(json.loads(lay.dumps()))
    assert trace_layout(again).to_dict() == trace_layout(lay).to_dict()


# -- perturbations -----------------------------------------------------------------


def test_mirror_a_perturbation_fails_parallel():
    lay = build_canonical_layout(SP, 4).rotated("A", 1e-3)
    with pytest.raises(TraceIncompleteError) as info:
        trace_layout(lay)
    assert info.value.last_hit is not None
    r = trace_layout(lay, strict=False)
    assert not r.complete and not r.parallel_ok and not r.all_ok
    assert r.residuals["parallel"] > 1e-3


def test_residuals_grow_linearly():
    base = build_canonical_layout(SP, 4)
    par, lens = [], []
    for angle in (1e-7, 2e-7, 4e-7):
        r = trace_layout(base.rotated("A", angle))
        assert r.complete
        par.append(r.residuals["parallel"])
        lens.append(r.residuals["lengths"])
    small = trace_layout(base.rotated("A", 1e-7))
    assert not small.parallel_ok and not small.lengths_ok
    for series in (par, lens):
        assert series[1] / series[0] == pytest.approx(2.0, rel=1e-2)
        assert series[2] / series[0] == pytest.approx(4.0, rel=1e-2)


def test_tiny_perturbation_is_continuous():
    base = build_canonical_layout(SP, 4)
    r = trace_layout(base.rotated("A", 1e-12))
    assert r.residuals["lengths"] < 1e-9
    assert r.residuals["parallel"] < 1e-9


# -- capacity ----------------------------------------------------------------------


def test_capacity_formula():
    assert capacity(1.0, SP, 10 * SP.s_b, 0.0) == 11
    half = Spacings(8.5, 4.0, 7.5)
    a, b = capacity(1.0, SP, 170.0), capacity(1.0, half, 170.0)
    assert b in (2 * a - 1, 2 * a, 2 * a + 1)
    with pytest.raises(LayoutError):
        capacity(1.0, SP, SP.s_b)


def test_capacity_error_names_mirror():
    with pytest.raises(CapacityError) as info:
        build_canonical_layout(SP, 4, aperture_width=40.0, edge_margin=20.0)
    assert info.value.mirror
    with pytest.raises(CapacityError):
        build_canonical_layout(SP, 6, aperture_width=3 * SP.s_b)
