"""Which features set designated thumbnails apart: per-video rank quantiles and chi-square tests."""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from ._imageops import parallel_map
from .aesthetics import ANALYSIS_NAMES, analysis_vector, compute_aesthetic_vectors, stillness_sequence
from .errors import NoComparisonFrames, ThumbforgeError, TooFewSamples
from .evaluation import GroundTruth, MatchConfig, VideoMatcher

log = logging.getLogger(__name__)

BINS = 10
ALPHA = 0.05


@dataclass(frozen=True)
class ChiSquareResult:
    feature: str
    statistic: float
    dof: int
    p_value: float
    mean_quantile: float
    std_quantile: float

    @property
    def significant(self) -> bool:
        return self.p_value < ALPHA


@dataclass
class QuantileMatrix:
    video_ids: list[str]
    names: list[str]
    values: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


@dataclass
class QuantileReport:
    matrix: QuantileMatrix
    results: list[ChiSquareResult]
    skipped: list[str]

    @property
    def flagged(self) -> list[str]:
        return [r.feature for r in self.results if r.significant]

    def result(self, feature: str) -> ChiSquareResult:
        return next(r for r in self.results if r.feature == feature)


def rank_quantile(values, thumbnail_value: float, mask=None) -> float:
    """Share of comparison values below the thumbnail's, ties counting one half.

    ``values`` are the non-thumbnail frames; ``mask`` (True = keep) drops near-duplicates.
    """
    v = np.asarray(values, dtype=np.float64)
    if mask is not None:
        v = v[np.asarray(mask, dtype=bool)]
    if v.size == 0:
        raise NoComparisonFrames("no frames left to compare the thumbnail against")
    below = np.count_nonzero(v < thumbnail_value)
    ties = np.count_nonzero(v == thumbnail_value)
    return float((below + 0.5 * ties) / v.size)


def chi_square_p(statistic: float, dof: int) -> float:
    """Upper tail of the chi-square distribution via the regularized incomplete gamma."""
    return float(gammaincc(dof / 2.0, max(statistic, 0.0) / 2.0))


def chi_square_uniform(quantiles, bins: int = BINS, feature: str = "") -> ChiSquareResult:
    q = np.asarray(quantiles, dtype=np.float64)
    n = q.size
    if n == 0:
        raise ValueError("chi-square test needs at least one sample")
    if n < 5 * bins:
        warnings.warn(f"{feature or 'sample'}: {n} samples < {5 * bins} (expected count under 5 per bin)",
                      TooFewSamples, stacklevel=2)
    # 1.0 belongs to the last bin
    counts = np.bincount(np.clip((q * bins).astype(np.int64), 0, bins - 1), minlength=bins)
    expected = n / bins
    stat = float(np.sum((counts - expected) ** 2) / expected)
    dof = bins - 1
    return ChiSquareResult(feature, stat, dof, chi_square_p(stat, dof), float(q.mean()), float(q.std()))


def video_quantiles(frames, thumbnail: int, match: MatchConfig = MatchConfig(), threads: int | None = 1,
                    prior=None) -> np.ndarray:
    """53 rank quantiles of the thumbnail frame against the rest of its video."""
    frames = list(frames)
    if not 0 <= thumbnail < len(frames):
        raise ThumbforgeError(f"thumbnail index {thumbnail} outside 0..{len(frames) - 1}")
    matcher = VideoMatcher(GroundTruth("", thumbnail), match, frames)
    others = [i for i in range(len(frames)) if i != thumbnail and not matcher.matches(i)]
    if not others:
        raise NoComparisonFrames("every other frame near-duplicates the thumbnail")
    still = stillness_sequence(frames)
    vecs = compute_aesthetic_vectors(frames, prior, threads)
    table = np.stack([analysis_vector(v, still[v.index]).vector for v in vecs])
    comp = table[others]
    return np.array([rank_quantile(comp[:, j], table[thumbnail, j]) for j in range(table.shape[1])])


def feature_quantile_report(corpus, bins: int = BINS, match: MatchConfig = MatchConfig(),
                            threads: int | None = 1) -> QuantileReport:
    """``corpus``: iterable of (video_id, frames, thumbnail index).

    Videos that fail (too small, nothing to compare) are skipped with a warning.
    Results are sorted by p-value, most significant first.
    """
    corpus = list(corpus)

    def row(item):
        vid, frames, thumb = item
        try:
            return vid, video_quantiles(frames, thumb, match)
        except ThumbforgeError as e:
            log.warning("skipping %s: %s", vid, e)
            return vid, None

    rows = parallel_map(row, corpus, threads)
    kept = [(v, q) for v, q in rows if q is not None]
    skipped = [v for v, q in rows if q is None]
    if not kept:
        raise NoComparisonFrames("no video produced a quantile row")
    matrix = QuantileMatrix([v for v, _ in kept], list(ANALYSIS_NAMES), np.stack([q for _, q in kept]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TooFewSamples)
        results = [chi_square_uniform(matrix.values[:, j], bins, name) for j, name in enumerate(matrix.names)]
    if len(kept) < 5 * bins:
        warnings.warn(f"{len(kept)} videos < {5 * bins}; chi-square p-values are approximate", TooFewSamples,
                      stacklevel=2)
    results.sort(key=lambda r: (r.p_value, -r.statistic, r.feature))
    return QuantileReport(matrix, results, skipped)


def write_quantile_csv(path, matrix: QuantileMatrix) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id"] + matrix.names)
        for vid, row in zip(matrix.video_ids, matrix.values):
            w.writerow([vid] + [repr(float(x)) for x in row])


def write_significance_csv(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mean_q", "std_q", "chi2", "dof", "p", "significant"])
        for r in results:
            w.writerow([r.feature, repr(r.mean_quantile), repr(r.std_quantile), repr(r.statistic), r.dof,
                        repr(r.p_value), int(r.significant)])
