import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import textured_pair
from lexstereo.core import LabelField, MatchParams, PlaneLabel, Rect, SmoothParams, StereoPair, random_label_field
from lexstereo.energy import (EnergyModel, _box_sums, data_costs, data_term_naive, guided_weights_naive,
                              pairwise_term, raw_cost, region_data_costs, smooth_weight, total_energy, warp_point)


def constant_pair(h=30, w=30, color=(80.0, 120.0, 200.0), disp_max=5.0):
    img = np.ones((h, w, 3)) * np.asarray(color)
    return StereoPair(img, img.copy(), disp_max)


def test_warp_examples():
    assert warp_point(PlaneLabel(0, 0, 5), (10, 4), "left") == (5, 4)
    assert warp_point(PlaneLabel(0, 0, 0), (10, 4), "left") == (10, 4)
    assert warp_point(PlaneLabel(0, 0, 5), (10, 4), "right") == (15, 4)


def test_raw_cost_identity_and_ceiling(small_pair):
    same = StereoPair(small_pair.left, small_pair.left.copy(), 8)
    model = EnergyModel(same, MatchParams(window_radius=4))
    assert all(raw_cost(model, PlaneLabel(0, 0, 0), u, v) == 0 for u in range(0, 32, 5) for v in range(0, 24, 5))
    black = np.zeros((5, 6, 3))
    white = np.full((5, 6, 3), 255.0)
    white[:, :2] = 0  # a strong gradient at u = 2 on the other side only
    model = EnergyModel(StereoPair(black, white, 3), MatchParams(window_radius=2))
    assert raw_cost(model, PlaneLabel(0, 0, 0), 2, 2) == pytest.approx(2.8)
    # warp leaves the image
    assert raw_cost(EnergyModel(same), PlaneLabel(0, 0, 5), 2, 2) == pytest.approx(2.8)


def test_box_sums_match_explicit_sums(rng):
    img = rng.normal(size=(9, 11, 2))
    sums, counts = _box_sums(img, 2)
    for y in range(9):
        for x in range(11):
            win = img[max(y - 2, 0):y + 3, max(x - 2, 0):x + 3]
            assert np.allclose(sums[y, x], win.sum(axis=(0, 1)))
            assert counts[y, x] == win.shape[0] * win.shape[1]


def test_weights_sum_to_one_on_constant_image():
    model = EnergyModel(constant_pair(), MatchParams(window_radius=6))
    weights, _ = guided_weights_naive(model, 15, 15)
    assert weights.sum() == pytest.approx(1.0, abs=1e-6)


def test_constant_image_weights_are_window_counts():
    r = 4
    rr = r // 2
    model = EnergyModel(constant_pair(), MatchParams(window_radius=r))
    weights, win = guided_weights_naive(model, 15, 15)
    nominal = (2 * rr + 1) ** 2
    # brute-force count of regression windows containing both p and s
    expected = np.zeros_like(weights)
    for y in range(win.y0, win.y1):
        for x in range(win.x0, win.x1):
            shared = sum(1 for ky in range(15 - rr, 16 + rr) for kx in range(15 - rr, 16 + rr)
                         if abs(ky - y) <= rr and abs(kx - x) <= rr)
            expected[y - win.y0, x - win.x0] = shared / nominal**2
    assert np.allclose(weights, expected, atol=1e-9)
    assert weights[15 - win.y0, 15 - win.x0] == pytest.approx(1 / nominal)


def test_weights_concentrate_on_own_side_of_edge():
    img = np.zeros((30, 30, 3))
    img[:, 15:] = 255.0
    model = EnergyModel(StereoPair(img, img.copy(), 5), MatchParams(window_radius=6))
    weights, win = guided_weights_naive(model, 12, 15)
    cols = np.arange(win.x0, win.x1)
    assert weights[:, cols < 15].sum() > weights[:, cols >= 15].sum()


def test_data_term_identity_and_bound(small_pair, rng):
    same = EnergyModel(StereoPair(small_pair.left, small_pair.left.copy(), 8), MatchParams(window_radius=4))
    assert data_term_naive(same, PlaneLabel(0, 0, 0), 10, 10) == pytest.approx(0, abs=1e-12)
    model = EnergyModel(small_pair, MatchParams(window_radius=4))
    for _ in range(20):
        lab = PlaneLabel(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0, 8))
        val = data_term_naive(model, lab, int(rng.integers(32)), int(rng.integers(24)))
        assert -0.05 * 2.8 <= val <= 1.05 * 2.8


@pytest.mark.parametrize("region", [Rect(5, 5, 12, 10), Rect(0, 0, 6, 5), Rect(26, 18, 32, 24), Rect(0, 0, 32, 24)])
def test_fast_path_matches_naive(small_model, region):
    lab = PlaneLabel(0.05, -0.03, 3.2)
    fast = region_data_costs(small_model, lab, region).aggregated
    for v in range(region.y0, region.y1, 2):
        for u in range(region.x0, region.x1, 2):
            ref = data_term_naive(small_model, lab, u, v)
            assert fast[v - region.y0, u - region.x0] == pytest.approx(ref, rel=1e-4, abs=1e-12)


def test_zero_slice_for_identical_images(small_pair):
    model = EnergyModel(StereoPair(small_pair.left, small_pair.left.copy(), 8), MatchParams(window_radius=4))
    s = region_data_costs(model, PlaneLabel(0, 0, 0), Rect(3, 3, 20, 15))
    assert np.allclose(s.aggregated, 0, atol=1e-12)
    assert s.filter_region == Rect(0, 0, 24, 19)


def test_region_outside_image_rejected(small_model):
    with pytest.raises(ValueError):
        region_data_costs(small_model, PlaneLabel(0, 0, 1), Rect(30, 0, 40, 5))


def test_smooth_weight_examples():
    img = np.zeros((2, 3, 3))
    img[0, 1] = (10, 0, 0)
    img[0, 2] = (255, 255, 255)
    model = EnergyModel(StereoPair(img, img.copy(), 1), MatchParams(window_radius=2))
    assert smooth_weight(model, (0, 0), (0, 1)) == 1.0
    assert smooth_weight(model, (0, 0), (1, 0)) == pytest.approx(math.exp(-1))
    w = smooth_weight(model, (2, 0), (2, 1))
    assert w == pytest.approx(math.exp(-76.5)) and w > 0


def test_pairwise_examples(small_model):
    p, q = (4, 4), (5, 4)
    assert pairwise_term(small_model, p, q, PlaneLabel(1, 2, 3), PlaneLabel(1, 2, 3)) == 0
    w = max(smooth_weight(small_model, p, q), 0.01)
    assert pairwise_term(small_model, p, q, PlaneLabel(0, 0, 3), PlaneLabel(0, 0, 1)) == pytest.approx(w * 1.0)
    with pytest.raises(ValueError):
        pairwise_term(small_model, p, (7, 4), PlaneLabel(0, 0, 3), PlaneLabel(0, 0, 1))


coef = st.floats(-3, 3)
offset = st.floats(-20, 20)


@settings(max_examples=200)
@given(coef, coef, offset, coef, coef, offset, st.sampled_from([(1, 0), (0, 1), (1, 1), (-1, 1)]))
def test_pairwise_symmetry(a1, b1, c1, a2, b2, c2, step):
    model = EnergyModel(textured_pair(10, 10), MatchParams(window_radius=2))
    p = (4, 4)
    q = (4 + step[0], 4 + step[1])
    f1, f2 = PlaneLabel(a1, b1, c1), PlaneLabel(a2, b2, c2)
    assert pairwise_term(model, p, q, f1, f2) == pytest.approx(pairwise_term(model, q, p, f2, f1), abs=1e-12)


def test_total_energy_identity():
    pair = constant_pair(12, 12)
    model = EnergyModel(pair, MatchParams(window_radius=3))
    assert total_energy(model, LabelField.constant(12, 12, PlaneLabel(0, 0, 0))) == pytest.approx(0, abs=1e-12)


def test_single_pixel_image_is_data_only():
    img = np.full((1, 1, 3), 50.0)
    other = np.full((1, 1, 3), 60.0)
    model = EnergyModel(StereoPair(img, other, 1), MatchParams(window_radius=2))
    f = LabelField.constant(1, 1, PlaneLabel(0, 0, 0))
    assert total_energy(model, f) == pytest.approx(data_term_naive(model, PlaneLabel(0, 0, 0), 0, 0))


def _reference_energy(model, f, steps):
    h, w = f.shape
    ceiling = model.ceiling
    total = 0.0
    for v in range(h):
        for u in range(w):
            lab = f[v, u]
            d = lab.a * u + lab.b * v + lab.c
            total += ceiling if not 0 <= d <= model.pair.disp_max else data_term_naive(model, lab, u, v)
    for v in range(h):
        for u in range(w):
            for dx, dy in steps:
                uq, vq = u + dx, v + dy
                if 0 <= uq < w and 0 <= vq < h:
                    total += model.smooth.lam * pairwise_term(model, (u, v), (uq, vq), f[v, u], f[vq, uq])
    return total


@pytest.mark.parametrize("neighborhood", [4, 8])
def test_total_energy_matches_double_loop(rng, neighborhood):
    pair = textured_pair(16, 16, disp_max=6)
    model = EnergyModel(pair, MatchParams(window_radius=4), SmoothParams(neighborhood=neighborhood))
    f = random_label_field(rng, 16, 16, 6)
    f.labels[3, 4] = (0, 0, 9)  # out of range
    steps = [(1, 0), (0, 1), (1, 1), (-1, 1)][:neighborhood // 2]
    ref = _reference_energy(model, f, steps)
    assert total_energy(model, f) == pytest.approx(ref, rel=1e-6)


def test_data_costs_parallel_rows_match(small_model, rng):
    f = random_label_field(rng, 24, 32, 8)
    assert np.array_equal(data_costs(small_model, f, workers=1), data_costs(small_model, f, workers=3))


def test_submodularity_sampled(rng):
    n = 20_000
    pu, pv = rng.uniform(0, 500, (2, n))
    step = np.array([(1, 0), (0, 1), (1, 1), (-1, 1)])[rng.integers(4, size=n)]
    qu, qv = pu + step[:, 0], pv + step[:, 1]
    labs = rng.normal(0, [1, 1, 50], (3, n, 3))

    def psi(x, y):
        dp = np.abs((x[:, 0] - y[:, 0]) * pu + (x[:, 1] - y[:, 1]) * pv + x[:, 2] - y[:, 2])
        dq = np.abs((x[:, 0] - y[:, 0]) * qu + (x[:, 1] - y[:, 1]) * qv + x[:, 2] - y[:, 2])
        return np.minimum(dp + dq, 1.0)

    al, be, ga = labs
    assert np.all(psi(al, al) + psi(be, ga) <= psi(be, al) + psi(al, ga) + 1e-9)


def test_region_cost_microbenchmark(rng):
    # filtering a 45x45 region with r = 20 should cost about as much as box filtering its 85x85 support
    pair = textured_pair(120, 120, disp_max=20)
    model = EnergyModel(pair, MatchParams(window_radius=20))
    region = Rect(37, 37, 82, 82)
    region_data_costs(model, PlaneLabel(0, 0, 3), region)
    reps = 20
    t0 = time.perf_counter()
    for _ in range(reps):
        region_data_costs(model, PlaneLabel(0.01, 0, 3), region)
    t_region = (time.perf_counter() - t0) / reps
    block = rng.normal(size=(85, 85, 3))
    t0 = time.perf_counter()
    for _ in range(reps):
        # one guided-filter pass sequence: box sums of guide, raw cost, guide * raw cost, and the coefficients
        for _ in range(3):
            _box_sums(block, 10)
    t_box = (time.perf_counter() - t0) / reps
    assert t_region <= 3 * t_box
