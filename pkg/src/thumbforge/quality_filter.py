"""Low-quality frame scoring (dark / blurry / uniform) and shot-boundary removal."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._imageops import gradient_magnitude, parallel_map
from .errors import AllFramesFiltered, DimensionMismatch, FrameTooSmall
from .frame_io import LUMA_WEIGHTS, Frame, GrayFrame, to_gray

HIST_BINS = 256
TOP_FRACTION = 0.05
TOP_BINS = math.ceil(TOP_FRACTION * HIST_BINS)  # 13
ECR_EDGE_THRESHOLD = 0.1
ECR_DILATION_RADIUS = 2


@dataclass(frozen=True)
class FrameQuality:
    index: int
    luminance: float
    sharpness: float
    uniformity: float


@dataclass(frozen=True)
class FilterConfig:
    luminance_min: float = 0.10
    sharpness_min: float = 0.02
    uniformity_max: float = 0.95
    ecr_threshold: float = 0.5
    boundary_margin: int = 3

    def __post_init__(self):
        for name in ("luminance_min", "uniformity_max", "ecr_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.sharpness_min < 0:
            raise ValueError("sharpness_min must be >= 0")
        if self.boundary_margin < 0:
            raise ValueError("boundary_margin must be >= 0")


@dataclass
class FrameMask:
    keep: np.ndarray
    shots: list[tuple[int, int]]
    boundaries: list[int] = field(default_factory=list)
    qualities: list[FrameQuality] = field(default_factory=list)
    ecr: np.ndarray | None = None

    @property
    def kept_indices(self) -> np.ndarray:
        return np.flatnonzero(self.keep)


def luminance_score(frame: Frame) -> float:
    # channel means first: exact on constant frames; the clamp guards weight-sum rounding
    return float(min(frame.rgb.mean(axis=(0, 1)) @ LUMA_WEIGHTS, 1.0))


def _gray_array(g) -> np.ndarray:
    return g.gray if isinstance(g, GrayFrame) else np.asarray(g, dtype=np.float64)


def sharpness_score(gray) -> float:
    g = _gray_array(gray)
    if g.shape[0] < 3 or g.shape[1] < 3:
        raise FrameTooSmall(f"sharpness needs at least 3x3, got {g.shape}")
    return float(gradient_magnitude(g).mean())


def intensity_histogram(g: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    idx = np.clip((g * bins).astype(np.int64), 0, bins - 1)
    hist = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
    return hist / hist.sum()


def uniformity_score(gray) -> float:
    hist = intensity_histogram(_gray_array(gray))
    return float(min(np.sort(hist)[::-1][:TOP_BINS].sum(), 1.0))


def edge_map(g: np.ndarray, threshold: float = ECR_EDGE_THRESHOLD) -> np.ndarray:
    """Edge pixels: gradient magnitude above ``threshold`` times the frame's peak magnitude."""
    mag = gradient_magnitude(g)
    peak = mag.max()
    if peak <= 1e-12:
        return np.zeros(g.shape, dtype=bool)
    return mag > threshold * peak


def _dilate(edges: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return edges
    return ndimage.binary_dilation(edges, structure=np.ones((2 * radius + 1, 2 * radius + 1), bool))


def _ecr_from_edges(e_prev, e_cur, radius: int) -> float:
    n_prev, n_cur = int(e_prev.sum()), int(e_cur.sum())
    out_ratio = 0.0
    in_ratio = 0.0
    if n_prev:
        out_ratio = 1.0 - np.count_nonzero(e_prev & _dilate(e_cur, radius)) / n_prev
    if n_cur:
        in_ratio = 1.0 - np.count_nonzero(e_cur & _dilate(e_prev, radius)) / n_cur
    return float(max(out_ratio, in_ratio))


def edge_change_ratio(prev, cur, radius: int = ECR_DILATION_RADIUS,
                      edge_threshold: float = ECR_EDGE_THRESHOLD) -> float:
    a, b = _gray_array(prev), _gray_array(cur)
    if a.shape != b.shape:
        raise DimensionMismatch(f"frame sizes differ: {a.shape} vs {b.shape}")
    return _ecr_from_edges(edge_map(a, edge_threshold), edge_map(b, edge_threshold), radius)


def ecr_sequence(grays, threads: int | None = 1) -> np.ndarray:
    """ECR between each frame and its predecessor; entry 0 is 0 by convention."""
    arrays = [_gray_array(g) for g in grays]
    edges = parallel_map(edge_map, arrays, threads)
    ecr = np.zeros(len(arrays))
    for i in range(1, len(arrays)):
        if arrays[i].shape != arrays[i - 1].shape:
            raise DimensionMismatch(f"frame {i} size differs from frame {i - 1}")
        ecr[i] = _ecr_from_edges(edges[i - 1], edges[i], ECR_DILATION_RADIUS)
    return ecr


def boundaries_from_ecr(ecr: np.ndarray, threshold: float) -> list[int]:
    """Frames i with ECR(i-1, i) above threshold; runs of consecutive hits collapse to their peak."""
    hits = np.flatnonzero(np.asarray(ecr) > threshold)
    out: list[int] = []
    run: list[int] = []
    for i in hits:
        if run and i != run[-1] + 1:
            out.append(max(run, key=lambda j: (ecr[j], -j)))
            run = []
        run.append(int(i))
    if run:
        out.append(max(run, key=lambda j: (ecr[j], -j)))
    return out


def detect_shot_boundaries(frames, ecr_threshold: float = 0.5, threads: int | None = 1) -> list[int]:
    grays = [to_gray(f) if isinstance(f, Frame) else f for f in frames]
    return boundaries_from_ecr(ecr_sequence(grays, threads), ecr_threshold)


def frame_quality(frame: Frame) -> FrameQuality:
    g = to_gray(frame).gray
    return FrameQuality(frame.index, luminance_score(frame), sharpness_score(g), uniformity_score(g))


def shots_from_keep(keep: np.ndarray, boundaries=()) -> list[tuple[int, int]]:
    """Maximal runs of kept frames, additionally split at every boundary index."""
    cuts = set(int(b) for b in boundaries)
    shots = []
    start = None
    for i, k in enumerate(keep):
        if k and start is not None and i in cuts:
            shots.append((start, i - 1))
            start = None
        if k and start is None:
            start = i
        elif not k and start is not None:
            shots.append((start, i - 1))
            start = None
    if start is not None:
        shots.append((start, len(keep) - 1))
    return shots


def filter_frames(frames, config: FilterConfig | None = None, threads: int | None = 1,
                  apply_quality: bool = True, apply_margin: bool = True) -> FrameMask:
    """Score every frame, drop failures and frames around detected cuts.

    Raises AllFramesFiltered when nothing survives; callers fall back to the
    unfiltered video.
    """
    config = config or FilterConfig()
    frames = list(frames)
    grays = [to_gray(f).gray for f in frames]
    qualities = parallel_map(frame_quality, frames, threads)
    ecr = ecr_sequence(grays, threads) if len(frames) >= 2 else np.zeros(len(frames))
    boundaries = boundaries_from_ecr(ecr, config.ecr_threshold)

    keep = np.ones(len(frames), dtype=bool)
    if apply_quality:
        for i, q in enumerate(qualities):
            if (q.luminance < config.luminance_min or q.sharpness < config.sharpness_min
                    or q.uniformity > config.uniformity_max):
                keep[i] = False
    if apply_margin and config.boundary_margin > 0:
        m = config.boundary_margin
        for b in boundaries:
            keep[max(0, b - m):min(len(frames), b + m)] = False
    if len(frames) and not keep.any():
        raise AllFramesFiltered(f"all {len(frames)} frames were filtered out")
    return FrameMask(keep, shots_from_keep(keep, boundaries), boundaries, qualities, ecr)


def unfiltered_mask(frames, config: FilterConfig | None = None, threads: int | None = 1) -> FrameMask:
    """Keep every frame; shots still follow detected cuts."""
    return filter_frames(frames, config, threads, apply_quality=False, apply_margin=False)


def write_quality_csv(path, mask: FrameMask) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "luminance", "sharpness", "uniformity", "ecr"])
        for q in mask.qualities:
            ecr = mask.ecr[q.index] if mask.ecr is not None else 0.0
            w.writerow([q.index, repr(q.luminance), repr(q.sharpness), repr(q.uniformity), repr(float(ecr))])
