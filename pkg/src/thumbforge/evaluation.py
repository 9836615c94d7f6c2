"""Near-duplicate matching against a ground-truth frame and corpus-level P@k."""
from __future__ import annotations

import csv
import json
import logging
import os
import zlib
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import baselines, descriptors as desc
from ._imageops import downscale, parallel_map
from .aesthetics import stillness_sequence
from .errors import ManifestError, MatcherUnavailable, ThumbforgeError
from .frame_io import Frame, load_video, read_image
from .selection import SelectionConfig, select_thumbnails

log = logging.getLogger(__name__)

MATCH_SIZE = (64, 64)
DEFAULT_THETA = 0.005
DEFAULT_KS = (1, 3, 5)
OUR_METHODS = ("unsupervised", "supervised")
ALL_METHODS = OUR_METHODS + baselines.METHODS


class Matcher(str, Enum):
    EXACT_INDEX = "exact_index"
    DESCRIPTOR_L2 = "descriptor_l2"
    PIXEL_SSD = "pixel_ssd"


@dataclass(frozen=True)
class MatchConfig:
    matcher: Matcher = Matcher.PIXEL_SSD
    theta: float = DEFAULT_THETA

    def __post_init__(self):
        object.__setattr__(self, "matcher", Matcher(self.matcher))
        if self.theta < 0:
            raise ValueError("theta must be >= 0")


@dataclass(frozen=True)
class GroundTruth:
    video_id: str
    gt_frame_index: int | None
    gt_image: str | None = None
    category: str | None = None


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    source: str
    source_kind: str | None
    truth: GroundTruth
    category: str | None = None


def pixel_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference of 64x64 downscales (per pixel and channel, values in [0,1])."""
    da = downscale(np.asarray(a, dtype=np.float64), MATCH_SIZE)
    db = downscale(np.asarray(b, dtype=np.float64), MATCH_SIZE)
    return float(np.mean((da - db) ** 2))


class VideoMatcher:
    """Decides whether frames of one video near-duplicate its ground truth.

    ``frames`` maps frame index -> Frame (a list works); pixel and descriptor
    matchers need it unless the truth carries its own image and candidates
    are passed as Frames.
    """

    def __init__(self, truth: GroundTruth, config: MatchConfig = MatchConfig(), frames=None):
        self.truth = truth
        self.config = config
        self.frames = frames
        self._gt_rgb = None
        self._gt_desc = None
        self._cache: dict[int, bool] = {}
        if config.matcher is Matcher.EXACT_INDEX:
            if truth.gt_frame_index is None:
                raise MatcherUnavailable("exact_index matching needs gt_frame_index")
            return
        if truth.gt_image is not None:
            self._gt_rgb = read_image(truth.gt_image)
        elif frames is not None and truth.gt_frame_index is not None:
            self._gt_rgb = frames[truth.gt_frame_index].rgb
        else:
            raise MatcherUnavailable(f"{config.matcher.value} matching needs the video frames or a gt image")

    def _gt_descriptor(self) -> np.ndarray:
        if self._gt_desc is None:
            self._gt_desc = desc.compute_descriptor(Frame(-1, 0.0, self._gt_rgb)).vector
        return self._gt_desc

    def frame_distance(self, frame: Frame) -> float:
        if self.config.matcher is Matcher.PIXEL_SSD:
            return pixel_distance(frame.rgb, self._gt_rgb)
        if self.config.matcher is Matcher.DESCRIPTOR_L2:
            return desc.normalized_distance(desc.compute_descriptor(frame).vector, self._gt_descriptor())
        return 0.0 if frame.index == self.truth.gt_frame_index else np.inf

    def matches_frame(self, frame: Frame) -> bool:
        if self.config.matcher is Matcher.EXACT_INDEX:
            return frame.index == self.truth.gt_frame_index
        return self.frame_distance(frame) < self.config.theta

    def matches(self, index: int) -> bool:
        index = int(index)
        if index not in self._cache:
            if self.config.matcher is Matcher.EXACT_INDEX:
                self._cache[index] = index == self.truth.gt_frame_index
            elif self.frames is None:
                raise MatcherUnavailable(f"{self.config.matcher.value} matching needs the candidate frames")
            else:
                self._cache[index] = self.matches_frame(self.frames[index])
        return self._cache[index]


def near_duplicate(candidate, truth: GroundTruth, config: MatchConfig = MatchConfig(), frames=None) -> bool:
    """``candidate`` is a Frame, or a frame index resolved through ``frames``."""
    matcher = VideoMatcher(truth, config, frames)
    if isinstance(candidate, Frame):
        return matcher.matches_frame(candidate)
    return matcher.matches(int(candidate))


def _index(c) -> int:
    return int(getattr(c, "frame_index", c))


def precision_at_k(candidates, truth, k: int, config: MatchConfig = MatchConfig(), frames=None) -> int:
    """1 if any of the top-k candidates matches the ground truth, else 0.

    ``truth`` may be a GroundTruth or a prepared VideoMatcher.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    matcher = truth if isinstance(truth, VideoMatcher) else VideoMatcher(truth, config, frames)
    return int(any(matcher.matches(_index(c)) for c in list(candidates)[:k]))


# ---------------------------------------------------------------- methods


def video_seed(seed: int, video_id: str) -> int:
    """Per-video seed so corpus runs draw independently yet reproducibly."""
    return int(np.random.SeedSequence([seed, zlib.crc32(video_id.encode())]).generate_state(1)[0])


def rank_frames(method: str, frames, k: int = 5, seed: int = 42, lam: float = 1.0, model=None,
                selection: SelectionConfig | None = None, threads: int | None = 1) -> list[int]:
    """Ranked frame indices produced by ``method`` on one video."""
    frames = list(frames)
    n = len(frames)
    if method in OUR_METHODS:
        cfg = selection or SelectionConfig()
        cfg = SelectionConfig(**{**cfg.__dict__, "mode": method, "seed": seed})
        return [c.frame_index for c in select_thumbnails(frames, cfg, model, threads).all_candidates]
    if method == "random":
        return baselines.baseline_random(n, min(k, n), seed)
    if method == "beauty":
        return baselines.baseline_beauty_rank(frames, model, threads=threads)
    idx = baselines.subsample(n)
    vectors = desc.descriptor_matrix(desc.compute_descriptors([frames[i] for i in idx], threads))
    kmin = (selection or SelectionConfig()).k_min
    kmax = (selection or SelectionConfig()).k_max
    if method == "kmeans-centroid":
        return baselines.baseline_kmeans_centroid(vectors, seed, kmin, kmax, indices=idx)
    if method == "kmeans-stillness":
        still = stillness_sequence(frames)
        return baselines.baseline_kmeans_stillness(vectors, still, seed, kmin, kmax, indices=idx)
    if method == "glasso":
        return baselines.baseline_group_lasso(vectors, lam, indices=idx)[0]
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(ALL_METHODS)}")


# ---------------------------------------------------------------- corpus


def load_manifest(path) -> list[ManifestRecord]:
    """JSON lines: {id, source, source_kind, gt_frame_index, category?}; paths resolve against the manifest."""
    base = os.path.dirname(os.path.abspath(path))
    records = []
    try:
        fh = open(path)
    except OSError as e:
        raise ManifestError(f"cannot open manifest {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                vid, source = str(rec["id"]), str(rec["source"])
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ManifestError(f"{path}:{lineno}: bad record ({e})") from e
            source = source if os.path.isabs(source) else os.path.join(base, source)
            if not os.path.exists(source):
                raise ManifestError(f"{path}:{lineno}: source {source} does not exist")
            gt = rec.get("gt_frame_index")
            if gt is not None and (not isinstance(gt, int) or gt < 0):
                raise ManifestError(f"{path}:{lineno}: gt_frame_index must be a non-negative integer")
            gt_image = rec.get("gt_image")
            if gt_image is not None and not os.path.isabs(gt_image):
                gt_image = os.path.join(base, gt_image)
            if gt is None and gt_image is None:
                raise ManifestError(f"{path}:{lineno}: record has no ground truth")
            cat = rec.get("category")
            records.append(ManifestRecord(vid, source, rec.get("source_kind"),
                                          GroundTruth(vid, gt, gt_image, cat), cat))
    if not records:
        raise ManifestError(f"{path}: no records")
    return records


@dataclass(frozen=True)
class VideoResult:
    video_id: str
    category: str | None
    hits: dict[int, int]
    ranked: tuple[int, ...]


def evaluate_video(video_id: str, frames, truth: GroundTruth, method: str, ks=DEFAULT_KS,
                   match: MatchConfig = MatchConfig(), seed: int = 42, **kwargs) -> VideoResult:
    frames = list(frames)
    if truth.gt_frame_index is not None and not 0 <= truth.gt_frame_index < len(frames):
        raise ManifestError(f"{video_id}: gt_frame_index {truth.gt_frame_index} outside 0..{len(frames) - 1}")
    ranked = rank_frames(method, frames, max(ks), video_seed(seed, video_id), **kwargs)
    matcher = VideoMatcher(truth, match, frames)
    return VideoResult(video_id, truth.category, {k: precision_at_k(ranked, matcher, k) for k in ks},
                       tuple(ranked))


def aggregate(results, method: str, ks=DEFAULT_KS) -> list[dict]:
    """Mean P@k overall and per category (rows for the results CSV)."""
    results = list(results)
    rows = []
    groups: dict[str | None, list[VideoResult]] = defaultdict(list)
    for r in results:
        if r.category is not None:
            groups[r.category].append(r)
    for k in ks:
        rows.append({"method": method, "k": k, "n_videos": len(results),
                     "mean_p_at_k": float(np.mean([r.hits[k] for r in results])) if results else 0.0})
    for cat in sorted(groups):
        for k in ks:
            rs = groups[cat]
            rows.append({"method": method, "k": k, "n_videos": len(rs), "category": cat,
                         "mean_p_at_k": float(np.mean([r.hits[k] for r in rs]))})
    return rows


def evaluate_corpus(videos, method: str, ks=DEFAULT_KS, match: MatchConfig = MatchConfig(), seed: int = 42,
                    threads: int | None = 1, **kwargs) -> tuple[list[dict], list[VideoResult]]:
    """``videos``: iterable of (video_id, frames, GroundTruth)."""
    videos = list(videos)
    # videos run in parallel; each method runs single-threaded inside
    results = parallel_map(lambda v: evaluate_video(v[0], v[1], v[2], method, ks, match, seed, **kwargs),
                           videos, threads)
    return aggregate(results, method, ks), results


def mean_precision_at_k(manifest_path, method: str, ks=DEFAULT_KS, match: MatchConfig = MatchConfig(),
                        seed: int = 42, threads: int | None = 1, **kwargs) -> tuple[list[dict], list[VideoResult]]:
    records = load_manifest(manifest_path)

    def run(rec: ManifestRecord) -> VideoResult:
        try:
            _, frames = load_video(rec.source, rec.source_kind)
        except (OSError, ThumbforgeError) as e:
            raise ManifestError(f"{rec.id}: cannot read {rec.source}: {e}") from e
        return evaluate_video(rec.id, frames, rec.truth, method, ks, match, seed, **kwargs)

    results = parallel_map(run, records, threads)
    return aggregate(results, method, ks), results


def write_results_csv(path, rows) -> None:
    with_cat = any("category" in r for r in rows)
    cols = ["method", "k", "mean_p_at_k", "n_videos"] + (["category"] if with_cat else [])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "") for c in cols})
