"""End-to-end thumbnail pipeline: filter, subshots/keyframes, keyframe clustering, ranking."""
from __future__ import annotations

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from . import aesthetics, clustering, descriptors as desc
from .errors import AllFramesFiltered, EmptyStream, ModelMissing
from .frame_io import Frame, write_image
from .quality_filter import FilterConfig, filter_frames, unfiltered_mask
from .scoring import ForestModel, ScoreMode, ScoreTable, score_keyframes

log = logging.getLogger(__name__)

DEDUP_THETA = 0.005


@dataclass(frozen=True)
class SelectionConfig:
    mode: str = "unsupervised"
    k_output: int = 5
    seed: int = 42
    k_min: int = 5
    k_max: int = 10
    gap_refs: int = 10
    gap_ref_samples: int = 1000
    dedup_theta: float = DEDUP_THETA
    filter: FilterConfig = field(default_factory=FilterConfig)

    def __post_init__(self):
        ScoreMode.parse(self.mode)
        if self.k_output < 1:
            raise ValueError("k_output must be >= 1")
        if not 1 <= self.k_min <= self.k_max:
            raise ValueError("need 1 <= k_min <= k_max")


@dataclass(frozen=True)
class ThumbnailCandidate:
    frame_index: int
    timestamp: float
    cluster_id: int
    cluster_size: int
    attractiveness: float
    rank: int

    def to_json(self) -> dict:
        return {"rank": self.rank, "frame_index": self.frame_index, "timestamp_s": self.timestamp,
                "cluster_id": self.cluster_id, "cluster_size": self.cluster_size,
                "attractiveness": self.attractiveness}


@dataclass
class PipelineReport:
    frames_total: int = 0
    frames_after_filter: int = 0
    keyframes: int = 0
    clusters: int = 0
    video_duration: float = 0.0
    k_star: int | None = None
    filter_fallback: bool = False
    keyframe_fallback: bool = False
    wall_time: dict[str, float] = field(default_factory=dict)

    @property
    def total_wall_time(self) -> float:
        return float(sum(self.wall_time.values()))

    def to_json(self, deterministic: bool = False) -> dict:
        d = asdict(self)
        if deterministic:
            d.pop("wall_time")
        return d


@dataclass
class SelectionResult:
    candidates: list[ThumbnailCandidate]
    all_candidates: list[ThumbnailCandidate]
    report: PipelineReport
    keyframes: list[int] = field(default_factory=list)
    subshots: list[clustering.Subshot] = field(default_factory=list)


def rank_candidates(clusters, scores, timestamps=None) -> list[ThumbnailCandidate]:
    """One candidate per cluster: its best-scored member, ranked by cluster size.

    ``clusters`` maps cluster id -> member frame indices; ``scores`` maps frame index -> score.
    Ties: larger cluster, then higher score, then lower frame index.
    """
    picks = []
    for cid, members in clusters.items():
        members = sorted(int(m) for m in members)
        if not members:
            raise ValueError(f"cluster {cid} is empty")
        best = max(members, key=lambda i: (scores[i], -i))
        picks.append((len(members), float(scores[best]), best, int(cid)))
    picks.sort(key=lambda p: (-p[0], -p[1], p[2]))
    out = []
    for r, (size, score, idx, cid) in enumerate(picks, start=1):
        ts = float(timestamps[idx]) if timestamps is not None else 0.0
        out.append(ThumbnailCandidate(idx, ts, cid, size, score, r))
    return out


def dedup_candidates(candidates, vectors, theta: float = DEDUP_THETA) -> list[ThumbnailCandidate]:
    """Drop candidates within normalized descriptor distance ``theta`` of a better-ranked one."""
    kept: list[ThumbnailCandidate] = []
    for c in candidates:
        if all(desc.normalized_distance(vectors[c.frame_index], vectors[k.frame_index]) > theta for k in kept):
            kept.append(c)
    return [ThumbnailCandidate(c.frame_index, c.timestamp, c.cluster_id, c.cluster_size,
                               c.attractiveness, r) for r, c in enumerate(kept, start=1)]


def cluster_keyframes(keyframes, vectors, config: SelectionConfig, report: PipelineReport):
    """Gap-statistic k-means over keyframe descriptors; one cluster each when too few."""
    if len(keyframes) < config.k_min:
        report.keyframe_fallback = True
        return {c: [k] for c, k in enumerate(keyframes)}
    x = np.stack([vectors[k] for k in keyframes])
    gap = clustering.gap_statistic(x, config.k_min, config.k_max, config.gap_refs,
                                   config.gap_ref_samples, config.seed)
    report.k_star = gap.k_star
    best = gap.best
    return {c: [keyframes[i] for i in best.members(c)] for c in range(best.k)}


def select_thumbnails(frames, config: SelectionConfig | None = None, model: ForestModel | None = None,
                      threads: int | None = 1, fps: float | None = None) -> SelectionResult:
    config = config or SelectionConfig()
    frames: list[Frame] = list(frames)
    if not frames:
        raise EmptyStream("the input stream contains no frames")
    mode = ScoreMode.parse(config.mode)
    if mode is ScoreMode.SUPERVISED and model is None:
        raise ModelMissing("supervised selection needs a trained model (--model)")
    report = PipelineReport(frames_total=len(frames))
    if fps is None:
        fps = 1.0 / frames[1].timestamp if len(frames) > 1 and frames[1].timestamp > 0 else 30.0
    report.video_duration = len(frames) / fps

    with _stage(report, "filter"):
        try:
            mask = filter_frames(frames, config.filter, threads)
        except AllFramesFiltered:
            log.warning("every frame failed the quality filters; rerunning unfiltered")
            report.filter_fallback = True
            mask = unfiltered_mask(frames, config.filter, threads)
        kept = [int(i) for i in mask.kept_indices]
        report.frames_after_filter = len(kept)

    with _stage(report, "descriptors"):
        vectors = {d.index: d.vector for d in desc.compute_descriptors([frames[i] for i in kept], threads)}
        still = aesthetics.stillness_sequence(frames)

    with _stage(report, "keyframes"):
        subshots = clustering.segment_subshots(mask, vectors, config.seed)
        keyframes = clustering.extract_keyframes(subshots, still)
        report.keyframes = len(keyframes)

    with _stage(report, "clustering"):
        clusters = cluster_keyframes(keyframes, vectors, config, report)
        report.clusters = len(clusters)

    with _stage(report, "scoring"):
        vecs = None
        if mode is ScoreMode.SUPERVISED:
            vecs = {v.index: v for v in aesthetics.compute_aesthetic_vectors(
                [frames[k] for k in keyframes], threads=threads)}
        table: ScoreTable = score_keyframes(keyframes, mode, model, still, vecs)

    with _stage(report, "ranking"):
        ranked = rank_candidates(clusters, table.scores, [f.timestamp for f in frames])
        ranked = dedup_candidates(ranked, vectors, config.dedup_theta)
    budget = 0.1 * report.video_duration
    if report.total_wall_time > budget:
        log.info("pipeline took %.2fs, over the %.2fs budget (10%% of duration)", report.total_wall_time, budget)
    return SelectionResult(ranked[:config.k_output], ranked, report, keyframes, subshots)


@contextmanager
def _stage(report: PipelineReport, name: str):
    t0 = time.perf_counter()
    try:
        yield
    finally:
        report.wall_time[name] = time.perf_counter() - t0


def manifest(result: SelectionResult, frames_total: int, duration: float, run_config: dict,
             deterministic: bool = False) -> dict:
    """JSON-ready manifest; every cluster's candidate is kept under ``all_candidates``."""
    return {
        "video": {"frames": frames_total, "duration_s": duration},
        "config": run_config,
        "candidates": [c.to_json() for c in result.candidates],
        "all_candidates": [c.to_json() for c in result.all_candidates],
        "report": result.report.to_json(deterministic),
    }


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_frames(candidates, frames, out_dir, ext: str = "ppm") -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for c in candidates:
        p = os.path.join(out_dir, f"rank_{c.rank}_frame_{c.frame_index}.{ext}")
        write_image(p, frames[c.frame_index].rgb)
        paths.append(p)
    return paths
