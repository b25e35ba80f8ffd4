import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexstereo.core import (NZ_MIN, DegeneratePlaneError, LabelField, MatchParams, NormalDisparity, PlaneLabel,
                            SmoothParams, StereoPair, disparity_at, from_plane, gradient_x, plane_from_world,
                            random_label_field, random_plane, to_plane)

finite = st.floats(-50, 50, allow_nan=False)


def test_disparity_at_examples():
    assert disparity_at(PlaneLabel(0, 0, 5), 10, 20) == 5
    assert disparity_at(PlaneLabel(1, 0, 0), 3, 7) == 3
    assert disparity_at(PlaneLabel(0.5, -0.25, 2), 4, 8) == pytest.approx(2.0)


@given(finite, finite, finite, finite, finite, finite, finite)
def test_disparity_is_affine(a, b, c, u, v, u2, v2):
    lab = PlaneLabel(a, b, c)
    lhs = disparity_at(lab, u, v) + disparity_at(lab, u2, v2)
    rhs = 2 * disparity_at(lab, (u + u2) / 2, (v + v2) / 2)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_plane_from_world():
    assert plane_from_world(0, 0, 1, 10, 1, 100) == PlaneLabel(0, 0, 10)
    lab = plane_from_world(1, 0, 0, 4.0, 2, 1)
    assert (lab.a, lab.b, lab.c) == pytest.approx((2 / 4.0, 0, 0))
    with pytest.raises(DegeneratePlaneError):
        plane_from_world(0.2, 0.1, 1, 0, 1, 1)


@given(st.floats(0.1, 5), st.floats(1, 500), st.floats(0.5, 20))
def test_fronto_world_plane_has_no_slope(baseline, focal, z0):
    lab = plane_from_world(0, 0, 1, z0, baseline, focal)
    assert lab.a == 0 and lab.b == 0
    assert lab.c == pytest.approx(baseline * focal / z0)


def test_to_plane_fronto():
    assert to_plane(NormalDisparity((0, 0, 1), 7), 13, 4) == PlaneLabel(0, 0, 7)


def test_to_plane_rejects_flat_normal():
    with pytest.raises(DegeneratePlaneError):
        to_plane(NormalDisparity((1.0, 0.0, 0.0), 3), 0, 0)


def test_from_plane_examples():
    nd = from_plane(PlaneLabel(0, 0, 7), 5, 9)
    assert nd.n == pytest.approx((0, 0, 1)) and nd.d == 7
    nd = from_plane(PlaneLabel(1, 0, 0), 2, 0)
    s = 1 / math.sqrt(2)
    assert nd.n == pytest.approx((-s, 0, s))
    assert nd.d == pytest.approx(2)


@given(finite, finite, finite, st.floats(0, 200), st.floats(0, 200))
def test_plane_round_trip(a, b, c, u, v):
    lab = PlaneLabel(a, b, c)
    back = to_plane(from_plane(lab, u, v), u, v)
    assert back.as_array() == pytest.approx(lab.as_array(), abs=1e-9)


def test_to_plane_hits_reference_disparity(rng):
    for _ in range(10_000):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        if abs(n[2]) < NZ_MIN:
            continue
        d = rng.uniform(0, 100)
        u, v = rng.uniform(0, 500, 2)
        lab = to_plane(NormalDisparity(tuple(n), d), u, v)
        assert disparity_at(lab, u, v) == pytest.approx(d, abs=1e-9 * max(1, abs(lab.a * u) + abs(lab.b * v)))


def test_random_plane_range_and_mean(rng):
    disp_max = 24.0
    values = [disparity_at(random_plane(rng, 7, 3, disp_max), 7, 3) for _ in range(2000)]
    assert min(values) >= -1e-9 and max(values) <= disp_max + 1e-9
    field = random_label_field(rng, 400, 250, disp_max)
    d = field.disparity()
    assert d.min() >= -1e-6 and d.max() <= disp_max + 1e-6
    assert d.mean() == pytest.approx(disp_max / 2, rel=0.02)


class _FixedNormalRng:
    def __init__(self, z0):
        self.z0 = z0

    def uniform(self, lo, hi):
        return self.z0

    def normal(self, size):
        return np.array([0.0, 0.0, 2.5])


def test_random_plane_with_fronto_normal():
    assert random_plane(_FixedNormalRng(6.5), 11, 2, 10) == PlaneLabel(0, 0, 6.5)


def test_gradient_of_ramp_is_one():
    ramp = np.tile(np.arange(10.0), (4, 1))
    g = gradient_x(ramp)
    assert np.allclose(g[:, 1:-1], 1.0)
    assert np.allclose(g[:, 0], 0.5) and np.allclose(g[:, -1], 0.5)


def test_stereo_pair_validation():
    img = np.zeros((4, 5, 3))
    with pytest.raises(ValueError):
        StereoPair(img, np.zeros((4, 6, 3)), 3)
    with pytest.raises(ValueError):
        StereoPair(img, img, 0)
    pair = StereoPair(img, img, 3)
    assert (pair.height, pair.width) == (4, 5)


def test_param_validation():
    assert MatchParams(window_radius=20).regression_radius == 10
    with pytest.raises(ValueError):
        MatchParams(alpha_blend=1.5)
    with pytest.raises(ValueError):
        SmoothParams(eps=0)
    with pytest.raises(ValueError):
        SmoothParams(neighborhood=6)


def test_label_field_disparity():
    f = LabelField.constant(3, 4, PlaneLabel(1, 2, 3))
    vv, uu = np.mgrid[0:3, 0:4]
    assert np.array_equal(f.disparity(), uu + 2 * vv + 3)
    assert f[1, 2] == PlaneLabel(1, 2, 3)


@settings(max_examples=50)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(NZ_MIN, 1))
def test_normal_disparity_requires_unit_normal(x, y, z):
    n = np.array([x, y, z])
    n /= np.linalg.norm(n)
    NormalDisparity(tuple(n), 1.0)
    with pytest.raises(ValueError):
        NormalDisparity(tuple(2 * n), 1.0)
