import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thumbforge.clustering import (LOG_EPS, RESTARTS, Subshot, extract_keyframes, gap_statistic, kmeans,
                                   segment_subshots)
from thumbforge.errors import EmptyInput, KTooLarge
from thumbforge.quality_filter import FrameMask
from thumbforge.synth import blobs


def _same_partition(a, b):
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


def test_k1_is_mean(rng):
    x = rng.normal(size=(40, 3))
    c = kmeans(x, 1)
    assert np.allclose(c.centroids[0], x.mean(axis=0))
    assert c.inertia == pytest.approx(x.var(axis=0).sum() * len(x), rel=1e-12)


def test_two_blobs_recovered():
    x, labels = blobs(2, 30, 4, seed=3)
    for seed in range(5):
        assert _same_partition(kmeans(x, 2, seed).assignment, labels)


def test_k_equals_n(rng):
    x = rng.normal(size=(9, 2))
    assert kmeans(x, 9).inertia == pytest.approx(0.0, abs=1e-20)


def test_errors():
    with pytest.raises(EmptyInput):
        kmeans(np.zeros((0, 3)), 1)
    with pytest.raises(KTooLarge):
        kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(EmptyInput):
        gap_statistic(np.zeros((0, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(1, 8), st.integers(0, 2**31))
def test_kmeans_invariants(n, k, seed):
    k = min(k, n)
    x = np.random.default_rng(seed).normal(size=(n, 3))
    x[: n // 3] = x[0]  # duplicates exercise the empty-cluster repair
    c = kmeans(x, k, seed)
    assert c.assignment.min() >= 0 and c.assignment.max() < k
    assert np.all(c.sizes() > 0)
    exact = float(((x - c.centroids[c.assignment]) ** 2).sum())
    assert c.inertia == pytest.approx(exact, rel=1e-9, abs=1e-12)
    tol = 1e-9 * float((x * x).sum())
    assert all(b <= a + tol for a, b in zip(c.inertia_trace, c.inertia_trace[1:]))
    again = kmeans(x, k, seed)
    assert np.array_equal(again.assignment, c.assignment) and np.array_equal(again.centroids, c.centroids)


def _gap_oracle(x, ks, B, ref_samples, seed):
    """Plain reimplementation of the gap formula over the same reference draws."""
    def log_w(points, k, s, n_init):
        cl = kmeans(points, k, s, n_init=n_init)
        w = 0.0
        for j in range(k):
            members = points[cl.assignment == j]
            w += ((members - members.mean(axis=0)) ** 2).sum()
        return np.log(w + LOG_EPS)

    rng = np.random.default_rng(seed)
    lo, hi = x.min(axis=0), x.max(axis=0)
    data = np.array([log_w(x, k, seed, RESTARTS) for k in ks])
    refs = []
    for _ in range(B):
        sample = lo + rng.uniform(size=(ref_samples, x.shape[1])) * (hi - lo)
        s = int(rng.integers(2**31))
        refs.append([log_w(sample, k, s, 1) for k in ks])
    refs = np.array(refs)
    gap = refs.mean(axis=0) - data
    sd = np.sqrt(((refs - refs.mean(axis=0)) ** 2).mean(axis=0))
    sk = sd * np.sqrt(1 + 1 / B)
    for j in range(len(ks) - 1):
        if gap[j] >= gap[j + 1] - sk[j + 1]:
            return ks[j], gap, sk
    return ks[int(np.argmax(gap))], gap, sk


def test_gap_matches_direct_formula():
    x, _ = blobs(4, 15, 3, seed=8, separation=6.0)
    res = gap_statistic(x, 2, 6, B=4, ref_samples=120, seed=5)
    k_star, gap, sk = _gap_oracle(x, list(range(2, 7)), 4, 120, 5)
    assert res.k_star == k_star
    assert np.allclose(res.gap, gap, rtol=1e-9, atol=1e-9)
    assert np.allclose(res.sk, sk, rtol=1e-9, atol=1e-12)


def test_gap_small_seven_blobs():
    x, _ = blobs(7, 20, 10, seed=0)
    res = gap_statistic(x, 5, 10, B=5, ref_samples=300, seed=0)
    assert res.k_star == 7 and res.ks == list(range(5, 11))


def test_gap_clamps(caplog, rng):
    x = rng.normal(size=(6, 2))
    with caplog.at_level(logging.WARNING):
        res = gap_statistic(x, 5, 10, B=3, ref_samples=50)
    assert res.k_star in (5, 6) and "clamping" in caplog.text


def test_gap_identical_points():
    res = gap_statistic(np.ones((20, 4)), 5, 10, B=3, ref_samples=50)
    assert res.k_star == 5 and np.all(np.isfinite(res.gap))


def _mask(shots, n):
    keep = np.zeros(n, bool)
    for s, e in shots:
        keep[s:e + 1] = True
    return FrameMask(keep, list(shots))


def _modes(pattern, rng, dim=6):
    centers = {"A": np.zeros(dim), "B": np.full(dim, 5.0), "C": np.full(dim, -5.0)}
    return [centers[p] + rng.normal(0, 0.1, dim) for p in pattern]


def test_single_shot_one_subshot(rng):
    mask = _mask([(0, 9)], 10)
    subs = segment_subshots(mask, _modes("A" * 10, rng))
    assert subs == [Subshot(0, 0, 9, subs[0].cluster_id)]


def test_two_shots_respect_boundaries(rng):
    mask = _mask([(0, 9), (10, 19)], 20)
    subs = segment_subshots(mask, _modes("A" * 10 + "B" * 10, rng))
    assert len(subs) >= 2
    for s in subs:
        assert mask.shots[s.shot_id][0] <= s.start <= s.end <= mask.shots[s.shot_id][1]


def test_abab_gives_four_subshots(rng):
    # shot 0 alternates two appearance modes; shot 1 is a third scene
    pattern = "AAAABBBBAAAABBBB" + "CCCCCC"
    mask = _mask([(0, 15), (16, 21)], 22)
    subs = segment_subshots(mask, dict(enumerate(_modes(pattern, rng))))
    first = [(s.start, s.end) for s in subs if s.shot_id == 0]
    assert first == [(0, 3), (4, 7), (8, 11), (12, 15)]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.integers(0, 2**31))
def test_subshots_partition_kept_frames(lengths, seed):
    rng = np.random.default_rng(seed)
    shots, pos = [], 0
    for length in lengths:
        shots.append((pos, pos + length - 1))
        pos += length + 1  # one dropped frame between shots
    mask = _mask(shots, pos)
    desc = {i: rng.normal(size=3) for i in range(pos)}
    subs = segment_subshots(mask, desc, seed)
    covered = [i for s in subs for i in s.indices]
    assert covered == list(mask.kept_indices)
    still = rng.uniform(size=pos)
    keys = extract_keyframes(subs, still)
    assert len(keys) == len(subs)
    for s, k in zip(subs, keys):
        assert s.start <= k <= s.end and still[k] == max(still[i] for i in s.indices)
    for a, b in zip(keys, keys[1:]):
        assert a < b


def test_keyframe_ties_and_single_frames():
    subs = [Subshot(0, 0, 3, 0), Subshot(0, 4, 4, 1)]
    assert extract_keyframes(subs, [0.5, 0.9, 0.9, 0.1, 0.2]) == [1, 4]
