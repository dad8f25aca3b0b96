"""Poly learning-rate schedule and joint image/label augmentations."""

import numpy as np
import pytest

from shuffleseg.datapipe import IGNORE_LABEL
from shuffleseg.trainproto import (
    CROP_PAD_VALUE,
    SCALE_CHOICES,
    ScheduleConfig,
    dropout_train,
    poly_lr,
    random_crop,
    random_flip,
    random_scale,
    resize_labels,
)


class TestPolyLr:
    def test_start_is_lr_initial_exactly(self):
        cfg = ScheduleConfig(lr_initial=0.001, max_iter=60000, power=0.9)
        assert poly_lr(0, cfg) == 0.001

    def test_end_is_zero_exactly(self):
        cfg = ScheduleConfig(lr_initial=0.001, max_iter=60000, power=0.9)
        assert poly_lr(60000, cfg) == 0.0

    def test_midpoint_matches_direct_evaluation(self):
        cfg = ScheduleConfig(lr_initial=0.001, max_iter=60000, power=0.9)
        got = poly_lr(30000, cfg)
        assert abs(got - 0.001 * 0.5 ** 0.9) < 1e-18
        assert got == pytest.approx(5.359e-4, rel=1e-3)

    def test_slow_start_floor(self):
        cfg = ScheduleConfig(lr_initial=1e-4, max_iter=120000, power=0.9,
                             slow_start_steps=186, slow_start_lr=1e-5)
        assert poly_lr(0, cfg) == 1e-5
        assert poly_lr(185, cfg) == 1e-5
        assert poly_lr(186, cfg) == pytest.approx(1e-4 * (1 - 186 / 120000) ** 0.9)

    def test_beyond_max_iter_clamps_with_warning(self):
        cfg = ScheduleConfig(lr_initial=0.001, max_iter=100)
        with pytest.warns(RuntimeWarning):
            assert poly_lr(101, cfg) == 0.0

    def test_non_increasing_and_continuous_after_slow_start(self):
        cfg = ScheduleConfig(lr_initial=0.001, max_iter=5000, power=0.9,
                             slow_start_steps=50, slow_start_lr=1e-5)
        values = [poly_lr(k, cfg) for k in range(50, 5001)]
        diffs = np.diff(values)
        assert np.all(diffs <= 0)
        assert np.abs(diffs).max() < 1e-6  # no jumps on the poly segment

    def test_invalid_config_rejected(self):
        with pytest.raises(ValueError):
            ScheduleConfig(lr_initial=0.0)
        with pytest.raises(ValueError):
            ScheduleConfig(max_iter=0)
        with pytest.raises(ValueError):
            ScheduleConfig(power=-1.0)
        cfg = ScheduleConfig()
        with pytest.raises(ValueError):
            poly_lr(-1, cfg)


def marker_pair(h=8, w=8, y=2, x=3):
    image = np.zeros((h, w, 3), dtype=np.float32)
    image[y, x] = 200.0
    labels = np.zeros((h, w), dtype=np.int64)
    labels[y, x] = 7
    return image, labels


class TestRandomScale:
    def test_draws_only_the_seven_scales(self):
        rng = np.random.default_rng(0)
        image = np.zeros((8, 8, 3), dtype=np.float32)
        labels = np.zeros((8, 8), dtype=np.int64)
        seen = set()
        for _ in range(10_000):
            img, lab = random_scale(image, labels, rng)
            assert img.shape[:2] == lab.shape
            seen.add(lab.shape[0] / 8)
        assert seen == set(SCALE_CHOICES)

    def test_scale_frequencies_uniform(self):
        rng = np.random.default_rng(1)
        image = np.zeros((8, 8, 3), dtype=np.float32)
        labels = np.zeros((8, 8), dtype=np.int64)
        counts = {s: 0 for s in SCALE_CHOICES}
        n = 10_000
        for _ in range(n):
            _, lab = random_scale(image, labels, rng)
            counts[lab.shape[0] / 8] += 1
        p = 1 / 7
        sigma = (n * p * (1 - p)) ** 0.5
        for s, c in counts.items():
            assert abs(c - n * p) <= 3 * sigma, (s, c)

    def test_identity_scale_preserves_dims(self):
        rng = np.random.default_rng(2)
        image, labels = marker_pair()
        while True:  # draw until the 1.0 scale comes up
            img, lab = random_scale(image, labels, rng)
            if lab.shape == labels.shape:
                break
        np.testing.assert_array_equal(lab, labels)

    def test_labels_stay_integer_valued(self):
        rng = np.random.default_rng(3)
        image, labels = marker_pair(16, 16, 5, 5)
        for _ in range(20):
            _, lab = random_scale(image, labels, rng)
            assert set(np.unique(lab)) <= {0, 7}


class TestRandomCrop:
    def test_exact_size_input_is_identity(self, rng):
        image = rng.uniform(0, 255, size=(769, 769, 3)).astype(np.float32)
        labels = rng.integers(0, 19, size=(769, 769)).astype(np.int64)
        img, lab = random_crop(image, labels, rng)
        np.testing.assert_array_equal(img, image)
        np.testing.assert_array_equal(lab, labels)

    def test_offsets_span_full_range(self):
        # 47x47 input with a 16-crop spans offsets [0, 31]^2, the same span
        # as the published 800 -> 769 case
        rng = np.random.default_rng(4)
        h = w = 47
        image = np.zeros((h, w, 3), dtype=np.float32)
        image[:, :, 0] = np.arange(h)[:, None] * 100 + np.arange(w)[None, :]
        labels = np.zeros((h, w), dtype=np.int64)
        seen = set()
        for _ in range(10_000):
            img, _ = random_crop(image, labels, rng, size=16)
            v = int(img[0, 0, 0])
            seen.add((v // 100, v % 100))
        ys = {y for y, _ in seen}
        xs = {x for _, x in seen}
        assert ys == set(range(32)) and xs == set(range(32))

    def test_small_inputs_padded(self):
        rng = np.random.default_rng(5)
        image = np.full((5, 4, 3), 10.0, dtype=np.float32)
        labels = np.ones((5, 4), dtype=np.int64)
        img, lab = random_crop(image, labels, rng, size=8)
        assert img.shape == (8, 8, 3) and lab.shape == (8, 8)
        assert np.all(img[6:, :, :] == CROP_PAD_VALUE)
        assert np.all(lab[6:, :] == IGNORE_LABEL)
        assert np.all(lab[:5, :4] == 1)

    def test_crop_keeps_pair_aligned(self):
        rng = np.random.default_rng(6)
        image, labels = marker_pair(40, 40, 17, 23)
        for _ in range(50):
            img, lab = random_crop(image, labels, rng, size=20)
            img_pos = np.argwhere(img[:, :, 0] == 200.0)
            lab_pos = np.argwhere(lab == 7)
            np.testing.assert_array_equal(img_pos, lab_pos)


class TestRandomFlip:
    def test_double_forced_flip_is_identity(self, rng):
        image, labels = marker_pair()
        img, lab = random_flip(image, labels, rng, force=True)
        img, lab = random_flip(img, lab, rng, force=True)
        np.testing.assert_array_equal(img, image)
        np.testing.assert_array_equal(lab, labels)

    def test_forced_flip_mirrors_both(self):
        rng = np.random.default_rng(7)
        image, labels = marker_pair(6, 6, 1, 0)
        img, lab = random_flip(image, labels, rng, force=True)
        assert img[1, 5, 0] == 200.0 and lab[1, 5] == 7

    def test_flip_probability_near_half(self):
        rng = np.random.default_rng(8)
        image, labels = marker_pair()
        flips = 0
        n = 10_000
        for _ in range(n):
            _, lab = random_flip(image, labels, rng)
            flips += int(lab[2, 3] != 7)
        sigma = (n * 0.25) ** 0.5
        assert abs(flips - n / 2) <= 4 * sigma


class TestDeterminismAndAlignment:
    def test_fixed_seed_reproduces_stream(self):
        image = np.random.default_rng(0).uniform(0, 255, (32, 32, 3)).astype(np.float32)
        labels = np.random.default_rng(1).integers(0, 19, (32, 32)).astype(np.int64)

        def pipeline(seed):
            rng = np.random.default_rng(seed)
            out = []
            img, lab = image, labels
            for _ in range(5):
                img, lab = random_scale(image, labels, rng)
                img, lab = random_crop(img, lab, rng, size=16)
                img, lab = random_flip(img, lab, rng)
                out.append((img.copy(), lab.copy()))
            return out

        a = pipeline(42)
        b = pipeline(42)
        for (ia, la), (ib, lb) in zip(a, b):
            np.testing.assert_array_equal(ia, ib)
            np.testing.assert_array_equal(la, lb)

    def test_marker_moves_identically_through_pipeline(self):
        rng = np.random.default_rng(9)
        image, labels = marker_pair(24, 24, 11, 5)
        img, lab = random_crop(image, labels, rng, size=16)
        img, lab = random_flip(img, lab, rng, force=True)
        img_pos = np.argwhere(img[:, :, 0] == 200.0)
        lab_pos = np.argwhere(lab == 7)
        np.testing.assert_array_equal(img_pos, lab_pos)

    def test_nearest_label_resize_definition(self):
        labels = np.arange(4).reshape(2, 2)
        out = resize_labels(labels, 4, 4)
        np.testing.assert_array_equal(out[:2, :2], 0)
        np.testing.assert_array_equal(out[2:, 2:], 3)


class TestDropoutTrain:
    def test_keep_prob_one_identity(self, rng):
        x = np.ones((2, 3), dtype=np.float32)
        np.testing.assert_array_equal(dropout_train(x, 1.0, rng), x)

    def test_scaling_preserves_expectation(self):
        rng = np.random.default_rng(10)
        x = np.ones((20000,), dtype=np.float32)
        out = dropout_train(x, 0.9, rng)
        kept = out > 0
        assert abs(kept.mean() - 0.9) < 0.02
        assert np.allclose(out[kept], 1.0 / 0.9, atol=1e-6)

    def test_invalid_keep_prob(self, rng):
        with pytest.raises(ValueError):
            dropout_train(np.ones(3), 0.0, rng)
