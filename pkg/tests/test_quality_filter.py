import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from thumbforge.errors import AllFramesFiltered, DimensionMismatch, FrameTooSmall
from thumbforge.frame_io import frames_from_arrays, make_frame, to_gray
from thumbforge.quality_filter import (FilterConfig, detect_shot_boundaries, edge_change_ratio, filter_frames,
                                       frame_quality, luminance_score, sharpness_score, shots_from_keep,
                                       uniformity_score, unfiltered_mask)
from thumbforge.synth import make_video, plant_defects

from conftest import solid, texture


def test_luminance_examples():
    assert luminance_score(solid((0, 0, 0))) == 0.0
    assert luminance_score(solid((1, 1, 1))) == pytest.approx(1.0, abs=1e-15)
    rgb = np.zeros((4, 6, 3))
    rgb[:, :3] = 1.0
    assert luminance_score(make_frame(rgb)) == pytest.approx(0.5, abs=1e-15)


def test_sharpness_examples():
    assert sharpness_score(np.full((5, 5), 0.3)) == 0.0
    W = 11
    ramp = np.tile(np.arange(W) / (W - 1), (7, 1))
    assert sharpness_score(ramp) == pytest.approx(1 / (W - 1), rel=1e-12)
    checker = (np.indices((16, 16)).sum(0) % 2).astype(float)
    from scipy import ndimage
    boxed = ndimage.uniform_filter(checker, 3, mode="nearest")
    assert sharpness_score(checker) > sharpness_score(boxed)
    with pytest.raises(FrameTooSmall):
        sharpness_score(np.zeros((2, 5)))


def test_uniformity_examples():
    assert uniformity_score(np.full((8, 8), 0.4)) == 1.0
    ramp = ((np.arange(256) + 0.5) / 256).reshape(16, 16)
    assert uniformity_score(ramp) == pytest.approx(13 / 256, abs=1e-15)
    two = np.zeros((4, 4))
    two[:2] = 1.0
    assert uniformity_score(two) == 1.0


def _square(offset=0, n=32):
    g = np.zeros((n, n))
    g[8 + offset:20 + offset, 10:22] = 1.0
    return g


def test_ecr_examples():
    a = _square()
    assert edge_change_ratio(a, a) == 0.0
    assert edge_change_ratio(np.zeros_like(a), a) == 1.0
    assert edge_change_ratio(a, _square(1)) == 0.0
    assert edge_change_ratio(a, _square(1), radius=0) > 0.0
    with pytest.raises(DimensionMismatch):
        edge_change_ratio(a, np.zeros((4, 4)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 6))
def test_ecr_symmetric(seed, shift):
    a = texture(seed, 24, 24)[..., 0]
    b = np.roll(texture(seed + 1, 24, 24)[..., 0], shift, axis=1)
    assert edge_change_ratio(a, b) == edge_change_ratio(b, a)
    assert 0.0 <= edge_change_ratio(a, b) <= 1.0


def test_red_blue_cut():
    rng = np.random.default_rng(0)
    checker = (np.indices((10, 10)).sum(0) // 2 % 2)[..., None] * 0.5
    arrays = []
    for i in range(60):
        red = i < 30
        rgb = np.empty((32, 32, 3))
        rgb[:] = (0.9, 0.1, 0.1) if red else (0.1, 0.1, 0.9)
        y, x = (3, 4) if red else (18, 19)
        rgb[y:y + 10, x:x + 10] += checker
        arrays.append(np.clip(rgb + rng.normal(0, 0.003, rgb.shape), 0, 1))
    assert detect_shot_boundaries(frames_from_arrays(arrays)) == [30]


def test_constant_video_has_no_cuts():
    f = [make_frame(texture(3), i) for i in range(10)]
    assert detect_shot_boundaries(f) == []


def test_planted_cuts_exact():
    v = make_video((25, 35, 30, 20), seed=3)
    assert v.cuts == [25, 60, 90]
    assert detect_shot_boundaries(v.frames) == [25, 60, 90]


def test_clean_video_keeps_everything():
    v = make_video((100,), seed=5)
    mask = filter_frames(v.frames)
    assert mask.keep.all() and mask.shots == [(0, 99)]


def test_planted_black_frames_dropped():
    v = make_video((60,), seed=2)
    arrays = v.arrays
    black = [7, 19, 30, 41, 52]
    for i in black:
        arrays[i] = np.zeros_like(arrays[i])
    mask = filter_frames(frames_from_arrays(arrays), FilterConfig(boundary_margin=0, ecr_threshold=1.0))
    assert sorted(np.flatnonzero(~mask.keep)) == black


def test_all_filtered_and_fallback():
    frames = [solid((0, 0, 0), index=i) for i in range(4)]
    with pytest.raises(AllFramesFiltered):
        filter_frames(frames)
    mask = unfiltered_mask(frames)
    assert mask.keep.all() and mask.shots == [(0, 3)]


def test_config_validation():
    for bad in ({"luminance_min": 1.5}, {"sharpness_min": -1}, {"uniformity_max": -0.1},
                {"ecr_threshold": 2}, {"boundary_margin": -1}):
        with pytest.raises(ValueError):
            FilterConfig(**bad)


@pytest.fixture(scope="module")
def defect_video():
    return plant_defects(make_video((50, 40, 60, 50), seed=11), seed=4)


def test_every_drop_is_explained(defect_video):
    cfg = FilterConfig()
    mask = filter_frames(defect_video.frames, cfg)
    near = set()
    for b in mask.boundaries:
        near.update(range(b - cfg.boundary_margin, b + cfg.boundary_margin))
    for q in mask.qualities:
        fails = (q.luminance < cfg.luminance_min or q.sharpness < cfg.sharpness_min
                 or q.uniformity > cfg.uniformity_max)
        assert mask.keep[q.index] == (not fails and q.index not in near)
        assert np.isfinite([q.luminance, q.sharpness, q.uniformity]).all() and q.uniformity <= 1.0


def test_shots_cover_kept_indices(defect_video):
    mask = filter_frames(defect_video.frames)
    covered = [i for s, e in mask.shots for i in range(s, e + 1)]
    assert covered == list(mask.kept_indices)
    assert all(e1 < s2 for (_, e1), (s2, _) in zip(mask.shots, mask.shots[1:]))


def test_luminance_threshold_monotone(defect_video):
    counts = []
    for t in (0.0, 0.05, 0.1, 0.3, 0.5, 0.55, 0.6):
        try:
            counts.append(int(filter_frames(defect_video.frames, FilterConfig(luminance_min=t)).keep.sum()))
        except AllFramesFiltered:
            counts.append(0)
    assert counts == sorted(counts, reverse=True)


@settings(max_examples=100, deadline=None)
@given(arrays(bool, st.integers(1, 40)), st.lists(st.integers(0, 39), max_size=5))
def test_shot_spans_round_trip(keep, boundaries):
    shots = shots_from_keep(keep, boundaries)
    rebuilt = np.zeros(len(keep), bool)
    for s, e in shots:
        assert s <= e
        rebuilt[s:e + 1] = True
    assert np.array_equal(rebuilt, keep)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 7, 3), elements=st.floats(0, 1)))
def test_scores_finite(rgb):
    q = frame_quality(make_frame(rgb))
    assert 0 <= q.luminance <= 1 and q.sharpness >= 0 and 0 < q.uniformity <= 1
