import csv
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thumbforge.aesthetics import ANALYSIS_NAMES
from thumbforge.analysis import (QuantileMatrix, chi_square_p, chi_square_uniform, feature_quantile_report,
                                 rank_quantile, video_quantiles, write_quantile_csv, write_significance_csv)
from thumbforge.errors import NoComparisonFrames, ThumbforgeError, TooFewSamples
from thumbforge.frame_io import frames_from_arrays
from thumbforge.synth import quantile_corpus

from conftest import texture
from oracles import chi2_sf_oracle


def test_rank_quantile_cases():
    assert rank_quantile([1, 2, 3, 4], 5) == 1.0
    assert rank_quantile([1, 2, 3, 4], 0) == 0.0
    assert rank_quantile([1, 2, 3, 4], 2) == pytest.approx(0.375)
    assert rank_quantile([2, 2], 2) == 0.5
    assert rank_quantile([1, 9, 3], 5, mask=[True, False, True]) == 1.0
    with pytest.raises(NoComparisonFrames):
        rank_quantile([1, 2], 0, mask=[False, False])
    with pytest.raises(NoComparisonFrames):
        rank_quantile([], 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=30), st.integers(-1000, 1000))
def test_rank_quantile_increasing_transform(values, t):
    q = rank_quantile(values, t)
    assert 0.0 <= q <= 1.0
    # integers keep the transform exact, so no ties are created by rounding
    f = lambda x: np.asarray(x, dtype=np.float64) ** 3 + 5 * np.asarray(x, dtype=np.float64)
    assert rank_quantile(f(values), f(t)) == q


@pytest.mark.parametrize("stat", [0.0, 5.0, 16.92, 50.0])
def test_chi_square_p_vs_quadrature(stat):
    assert abs(chi_square_p(stat, 9) - chi2_sf_oracle(stat, 9)) < 1e-6


def test_chi_square_p_critical_value():
    assert chi_square_p(16.919, 9) == pytest.approx(0.05, abs=1e-4)


def test_uniform_samples_pass():
    passes = 0
    for seed in range(100):
        q = np.random.default_rng(seed).uniform(size=1000)
        r = chi_square_uniform(q)
        assert r.statistic >= 0 and r.dof == 9
        passes += r.p_value > 0.05
    assert passes >= 90


def test_skewed_samples_fail():
    q = np.random.default_rng(0).uniform(size=500) ** 3
    assert chi_square_uniform(q).p_value < 1e-6


def test_bins_and_edges():
    r = chi_square_uniform(np.linspace(0, 1, 100), bins=4)
    assert r.dof == 3
    # 1.0 lands in the last bin, so counts are 25/25/25/25
    assert r.statistic == 0.0 and r.p_value == 1.0


def test_too_few_samples_warns():
    with pytest.warns(TooFewSamples):
        chi_square_uniform(np.full(10, 0.5))
    with pytest.raises(ValueError):
        chi_square_uniform([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=50, max_size=200), st.integers(2, 12))
def test_statistic_nonnegative(q, bins):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TooFewSamples)
        r = chi_square_uniform(q, bins)
    assert r.statistic >= 0 and r.dof == bins - 1 and 0 <= r.p_value <= 1


def test_video_quantiles():
    frames = frames_from_arrays([texture(s, 24, 24) * (0.5 + 0.1 * s) for s in range(6)])
    q = video_quantiles(frames, 2)
    assert q.shape == (len(ANALYSIS_NAMES),) and np.all((q >= 0) & (q <= 1))
    with pytest.raises(ThumbforgeError):
        video_quantiles(frames, 10)
    same = frames_from_arrays([texture(0, 24, 24)] * 3)
    with pytest.raises(NoComparisonFrames):
        video_quantiles(same, 0)


def test_planted_sharpness_flagged():
    corpus = quantile_corpus(60, 8, seed=3, planted="sharpness")
    report = feature_quantile_report(corpus)
    r = report.result("sharpness_sobel")
    assert r.significant and r.mean_quantile > 0.9
    assert report.results[0].p_value <= r.p_value or report.results[0].feature == "sharpness_sobel"
    assert [x.p_value for x in report.results] == sorted(x.p_value for x in report.results)


def test_report_skips_bad_videos(tmp_path):
    corpus = quantile_corpus(4, 6, seed=1)
    same = frames_from_arrays([texture(0, 24, 24)] * 3)
    with pytest.warns(TooFewSamples):
        report = feature_quantile_report(corpus + [("dupes", same, 0)])
    assert report.skipped == ["dupes"] and len(report.matrix.video_ids) == 4
    write_quantile_csv(tmp_path / "q.csv", report.matrix)
    write_significance_csv(tmp_path / "s.csv", report.results)
    with open(tmp_path / "q.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["video_id"] + list(ANALYSIS_NAMES) and len(rows) == 5
    with open(tmp_path / "s.csv") as fh:
        sig = list(csv.DictReader(fh))
    assert list(sig[0]) == ["feature", "mean_q", "std_q", "chi2", "dof", "p", "significant"]
    assert len(sig) == len(ANALYSIS_NAMES)


def test_quantile_matrix_column():
    m = QuantileMatrix(["a", "b"], ["x", "y"], np.array([[0.1, 0.2], [0.3, 0.4]]))
    assert list(m.column("y")) == [0.2, 0.4]
