import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phsearch.errors import BadGeometry, BadParam, BadPrompt
from phsearch.prompts import (
    Box,
    NoiseParams,
    Point,
    PromptMask,
    Segment,
    add_box_noise,
    prompt_from_json,
    prompt_to_json,
    rasterize,
    rle_decode,
    rle_encode,
    tokenize_mask,
)


class TestRasterize:
    def test_full_image_box(self):
        mask = rasterize(Box(0, 0, 31, 31), 32, 32, 8)
        assert mask.bits.all()

    def test_single_patch_box_area(self):
        mask = rasterize(Box(0, 0, 13, 13), 224, 224, 14)
        assert int(mask.bits.sum()) == 14 * 14

    def test_point_single_patch_window(self):
        mask = rasterize(Point(0, 0, window=1), 32, 32, 8)
        expected = np.zeros((32, 32), dtype=bool)
        expected[0:8, 0:8] = True
        assert np.array_equal(mask.bits, expected)

    def test_point_window_clips_at_edge(self):
        mask = rasterize(Point(0, 0, window=3), 32, 32, 8)
        expected = np.zeros((32, 32), dtype=bool)
        expected[0:16, 0:16] = True  # 2x2 patches survive clipping
        assert np.array_equal(mask.bits, expected)

    def test_point_outside_image(self):
        with pytest.raises(BadPrompt):
            rasterize(Point(40, 0), 32, 32, 8)

    def test_box_clamped_to_bounds(self):
        mask = rasterize(Box(-5, -5, 100, 100), 32, 32, 8)
        assert mask.bits.all()

    def test_segment_round_trip(self, rng):
        bits = rng.uniform(size=(32, 32)) > 0.7
        seg = Segment(tuple(rle_encode(bits)), 32, 32)
        mask = rasterize(seg, 32, 32, 8)
        assert np.array_equal(mask.bits, bits)

    def test_segment_wrong_size(self):
        with pytest.raises(BadPrompt):
            rasterize(Segment((16 * 16,), 16, 16), 32, 32, 8)


class TestRle:
    def test_length_mismatch(self):
        with pytest.raises(BadPrompt):
            rle_decode([5, 5], 4, 4)

    def test_all_zero_and_all_one(self):
        assert rle_encode(np.zeros((2, 2), dtype=bool)) == [4]
        assert rle_encode(np.ones((2, 2), dtype=bool)) == [0, 4]

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip_random(self, seed):
        bits = np.random.default_rng(seed).uniform(size=(8, 8)) > 0.5
        assert np.array_equal(rle_decode(rle_encode(bits), 8, 8), bits)


class TestTokenizeMask:
    def test_full_mask_sets_all(self):
        mask = PromptMask(32, 32, np.ones((32, 32), dtype=bool))
        token = tokenize_mask(mask, 8)
        assert token.n == 16 and token.bits.all()

    def test_single_pixel_sets_one_patch(self):
        bits = np.zeros((32, 32), dtype=bool)
        bits[17, 9] = True
        token = tokenize_mask(PromptMask(32, 32, bits), 8)
        assert int(token.bits.sum()) == 1
        assert token.bits[2 * 4 + 1]  # patch row 2, col 1

    def test_grid_intersection_case(self):
        mask = rasterize(Box(0, 0, 20, 20), 224, 224, 14)
        token = tokenize_mask(mask, 14)
        expected = {0, 1, 16, 17}  # patches (0,0) (0,1) (1,0) (1,1)
        assert set(np.flatnonzero(token.bits)) == expected

    def test_threshold_full_coverage_only(self):
        bits = np.zeros((32, 32), dtype=bool)
        bits[0:8, 0:8] = True
        bits[8, 8] = True  # one stray pixel in the next patch
        token = tokenize_mask(PromptMask(32, 32, bits), 8, overlap_threshold=1.0)
        assert set(np.flatnonzero(token.bits)) == {0}

    def test_monotone_in_mask(self, rng):
        small = rng.uniform(size=(32, 32)) > 0.8
        large = small | (rng.uniform(size=(32, 32)) > 0.8)
        t_small = tokenize_mask(PromptMask(32, 32, small), 8)
        t_large = tokenize_mask(PromptMask(32, 32, large), 8)
        assert np.all(t_large.bits[t_small.bits])

    def test_grid_aligned_box_exact(self):
        mask = rasterize(Box(8, 16, 23, 31), 32, 32, 8)
        token = tokenize_mask(mask, 8)
        expected = {4 * 2 + 1, 4 * 2 + 2, 4 * 3 + 1, 4 * 3 + 2}
        assert set(np.flatnonzero(token.bits)) == expected

    def test_bad_geometry(self):
        with pytest.raises(BadGeometry):
            tokenize_mask(PromptMask(30, 32, np.zeros((30, 32), dtype=bool)), 8)

    def test_bad_threshold(self):
        mask = PromptMask(32, 32, np.ones((32, 32), dtype=bool))
        with pytest.raises(BadParam):
            tokenize_mask(mask, 8, overlap_threshold=1.5)


class TestBoxNoise:
    def test_zero_amplitude_is_identity(self):
        box = Box(4, 6, 20, 25)
        assert add_box_noise(box, NoiseParams(m=0, seed=3), 32, 32) == box

    def test_offsets_within_support(self):
        # huge image so clamping never hides the raw offsets
        box = Box(1000, 1000, 2000, 2000)
        m = 40
        for seed in range(2000):
            noisy = add_box_noise(box, NoiseParams(m=m, seed=seed), 10_000, 10_000)
            cx = ((noisy.x0 - box.x0) + (noisy.x1 - box.x1)) / 2
            lx = ((noisy.x1 - box.x1) - (noisy.x0 - box.x0)) / 2
            cy = ((noisy.y0 - box.y0) + (noisy.y1 - box.y1)) / 2
            ly = ((noisy.y1 - box.y1) - (noisy.y0 - box.y0)) / 2
            for v in (cx, cy, lx, ly):
                assert v == int(v) and -m <= v <= m

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(0, 60))
    def test_clamp_and_swap_keeps_box_valid(self, seed, m):
        noisy = add_box_noise(Box(2, 3, 10, 12), NoiseParams(m=m, seed=seed), 16, 16)
        assert 0 <= noisy.x0 <= noisy.x1 <= 15
        assert 0 <= noisy.y0 <= noisy.y1 <= 15

    def test_negative_amplitude_rejected(self):
        with pytest.raises(BadParam):
            NoiseParams(m=-1)


class TestPromptJson:
    @pytest.mark.parametrize(
        "prompt",
        [
            Box(1, 2, 3, 4),
            Point(5, 6, window=2),
            Segment((0, 4, 12), 4, 4),
        ],
    )
    def test_round_trip(self, prompt):
        assert prompt_from_json(prompt_to_json(prompt)) == prompt

    def test_unknown_type(self):
        with pytest.raises(BadPrompt):
            prompt_from_json({"type": "circle", "x": 1, "y": 2})

    def test_missing_field(self):
        with pytest.raises(BadPrompt):
            prompt_from_json({"type": "box", "x0": 0})
