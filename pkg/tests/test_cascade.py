import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import constant_model, random_model, random_sample_set
from lmk.cascade import (CascadeModel, PerturbationPolicy, TrainConfig, estimate, estimate_once,
                         estimate_regions, median, train_cascade)
from lmk.ensemble import as_f32
from lmk.imaging import GrayImage, InvalidParameterError, Region, shrink_recenter


class CountingImage(GrayImage):
    __slots__ = ("reads",)

    def __init__(self, pixels):
        super().__init__(pixels)
        self.reads = 0

    def pixel(self, x, y):
        self.reads += 1
        return super().pixel(x, y)


def test_single_constant_stage_returns_center(rng):
    img = GrayImage(rng.integers(0, 256, (50, 50), dtype=np.uint8))
    assert estimate_once(constant_model([(0, 0)]), img, Region(20.5, 30.25, 17)) == (20.5, 30.25)


@pytest.mark.parametrize("decay", [0.3, 0.7, 1.0])
def test_two_zero_stages_keep_center(rng, decay):
    img = GrayImage(rng.integers(0, 256, (50, 50), dtype=np.uint8))
    assert estimate_once(constant_model([(0, 0), (0, 0)], decay), img, Region(10, 12, 9)) == (10, 12)


def test_two_constant_stages_hand_computed(rng):
    img = GrayImage(rng.integers(0, 256, (50, 50), dtype=np.uint8))
    model = constant_model([(0.5, -0.25), (-0.5, 1.0)], scale_decay=0.5)
    # stage 1 in (20, 20, 40): (20 + 0.5*20, 20 - 0.25*20) = (30, 15)
    # stage 2 in (30, 15, 20): (30 - 0.5*10, 15 + 1.0*10) = (25, 25)
    assert estimate_once(model, img, Region(20, 20, 40)) == (25.0, 25.0)
    np.testing.assert_array_equal(estimate_regions(model, img, [(20, 20, 40)]), [[25.0, 25.0]])


def test_compiled_path_matches_reference_bit_exactly(rng):
    for _ in range(5):
        model = random_model(rng, n_stages=3, n_trees=5, depth=4)
        img = GrayImage(rng.integers(0, 256, (40, 60), dtype=np.uint8))
        regions = np.column_stack([rng.uniform(-10, 70, 20), rng.uniform(-10, 50, 20), rng.uniform(1, 80, 20)])
        fast = estimate_regions(model, img, regions)
        for r, got in zip(regions, fast):
            assert tuple(got) == estimate_once(model, img, Region(*r))


def test_counting_image_reads(rng):
    model = random_model(rng, n_stages=3, n_trees=4, depth=5)
    img = CountingImage(rng.integers(0, 256, (30, 30), dtype=np.uint8))
    estimate_once(model, img, Region(15, 15, 20))
    assert img.reads == 2 * 3 * 4 * 5


def test_degenerate_policy_equals_estimate_once(rng):
    model = random_model(rng)
    img = GrayImage(rng.integers(0, 256, (40, 40), dtype=np.uint8))
    for _ in range(20):
        r = Region(*rng.uniform(5, 35, 2), rng.uniform(5, 40))
        assert estimate(model, img, r, PerturbationPolicy.none()) == estimate_once(model, img, r)
        many = PerturbationPolicy(5, 0.0, (1.0, 1.0), rng_seed=3)
        assert estimate(model, img, r, many) == estimate_once(model, img, r)


def test_constant_model_median_of_drawn_centers(rng):
    img = GrayImage(rng.integers(0, 256, (40, 40), dtype=np.uint8))
    region = Region(20, 20, 30)
    policy = PerturbationPolicy(9, 0.1, (0.8, 1.2), rng_seed=42)
    # oracle: replay the documented draw order and take numpy's median
    g = np.random.default_rng(42)
    offsets = g.uniform(-1.0, 1.0, size=(9, 2))
    centers = region.center_x + offsets * 0.1 * region.size
    expected = tuple(np.median(centers, axis=0))
    assert estimate(constant_model([(0, 0)]), img, region, policy) == pytest.approx(expected, abs=1e-12)


def test_median_rules():
    assert median([3.0, 1.0, 2.0]) == 2.0
    assert median([4.0, 1.0, 3.0, 2.0]) == 2.5
    assert median([1.0, 2.0, 1e300]) == median([1.0, 2.0, 3.0]) == 2.0
    assert median([5.0]) == 5.0


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=15), st.randoms())
def test_median_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert median(shuffled) == median(values)
    assert median(values) == pytest.approx(float(np.median(values)), rel=1e-12, abs=1e-12)


def test_policy_validation():
    with pytest.raises(InvalidParameterError):
        PerturbationPolicy(0)
    with pytest.raises(InvalidParameterError):
        PerturbationPolicy(3, -0.1)
    with pytest.raises(InvalidParameterError):
        PerturbationPolicy(3, 0.1, (1.2, 1.1))
    with pytest.raises(InvalidParameterError):
        PerturbationPolicy(3, 0.1, (0.0, 1.1))


@settings(max_examples=300)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.5, 500), st.floats(-1e3, 1e3),
       st.floats(-1e3, 1e3), st.floats(0.05, 1.0), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_frame_round_trip(cx, cy, size, px, py, factor, lx, ly):
    r = Region(cx, cy, size)
    shrunk = shrink_recenter(r, (px, py), factor)
    u, v = shrunk.to_normalized(lx, ly)
    x, y = shrunk.to_pixel(u, v)
    assert abs(x - lx) <= 1e-9 and abs(y - ly) <= 1e-9


def test_model_validation():
    with pytest.raises(InvalidParameterError):
        CascadeModel([], 0.7)
    with pytest.raises(InvalidParameterError):
        constant_model([(0, 0)], scale_decay=0.0)
    with pytest.raises(InvalidParameterError):
        constant_model([(0, 0)], scale_decay=1.5)
    assert constant_model([(0, 0)], 0.7).scale_decay == as_f32(0.7)


def test_train_one_stage_zero_trees_is_mean(rng):
    ss = random_sample_set(rng, 40)
    model = train_cascade(ss, TrainConfig(n_stages=1, trees_per_stage=0))
    np.testing.assert_array_equal(model.stages[0].base, np.float32(ss.targets.mean(axis=0)))
    assert model.stages[0].trees == []


def test_train_rejects_bad_config(rng):
    ss = random_sample_set(rng, 10)
    for bad in (dict(scale_decay=0.0), dict(scale_decay=1.2), dict(shrinkage=0), dict(n_stages=0),
                dict(depth=0), dict(n_candidates=0)):
        with pytest.raises(InvalidParameterError):
            train_cascade(ss, TrainConfig(**bad))
    with pytest.raises(InvalidParameterError):
        train_cascade([], TrainConfig())


def test_later_stages_train_at_partial_cascade_estimates(rng):
    ss = random_sample_set(rng, 60)
    cfg = TrainConfig(n_stages=2, trees_per_stage=3, depth=3, n_candidates=8, seed=4)
    model = train_cascade(ss, cfg)
    # a zero-tree second stage has base = mean target in the frames stage 1 hands over
    cfg0 = TrainConfig(n_stages=2, trees_per_stage=3, depth=3, n_candidates=8, seed=4)
    first_only = CascadeModel(model.stages[:1], model.scale_decay)
    targets = []
    for i in range(len(ss)):
        s = ss[i]
        p = estimate_once(first_only, s.image, s.region)
        frame = shrink_recenter(s.region, p, model.scale_decay)
        targets.append(frame.to_normalized(*ss.points[i]))
    expected = np.mean(targets, axis=0)
    # the stage-2 base is the mean of its own training targets
    np.testing.assert_allclose(model.stages[1].base, expected, rtol=1e-6, atol=1e-7)
    assert train_cascade(ss, cfg0) == model


def test_training_log_callback(rng):
    ss = random_sample_set(rng, 30)
    rows = []
    train_cascade(ss, TrainConfig(2, 3, 2, n_candidates=4), on_round=lambda *r: rows.append(r))
    assert [(s, r) for s, r, _ in rows] == [(s, r) for s in range(2) for r in range(4)]
    assert all(math.isfinite(m) for _, _, m in rows)
