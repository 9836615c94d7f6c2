"""Color/edge pyramid descriptors (2,220 dims) for clustering and duplicate detection.

Layout per region: H(128) S(128) V(128) edge-orientation(30) edge-magnitude(30);
regions are the whole frame followed by the 2x2 quadrants in row-major order.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._imageops import gradients, parallel_map
from .errors import DimensionMismatch, FrameTooSmall, ThumbforgeError
from .frame_io import Frame, LUMA_WEIGHTS, rgb_to_hsv

HSV_BINS = 128
EDGE_BINS = 30
N_REGIONS = 5
REGION_DIM = 3 * HSV_BINS + 2 * EDGE_BINS
DESCRIPTOR_DIM = REGION_DIM * N_REGIONS  # 2220
EDGE_THRESHOLD = 0.05
MAGNITUDE_RANGE = float(np.sqrt(2.0))
MIN_SIZE = 8
DUMP_MAGIC = b"THDESC01"


@dataclass(frozen=True, eq=False)
class FrameDescriptor:
    index: int
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.shape != (DESCRIPTOR_DIM,):
            raise DimensionMismatch(f"descriptor must have {DESCRIPTOR_DIM} dims, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


def _hist(values: np.ndarray, bins: int, upper: float, weights=None) -> np.ndarray:
    idx = np.clip((values / upper * bins).astype(np.int64), 0, bins - 1)
    return np.bincount(idx.ravel(), weights=None if weights is None else weights.ravel(),
                       minlength=bins).astype(np.float64)


def _l1(h: np.ndarray) -> np.ndarray:
    s = h.sum()
    return h / s if s > 0 else h


def region_slices(height: int, width: int) -> list[tuple[slice, slice]]:
    """Whole frame, then quadrants; odd sizes give the extra row/column to the last half."""
    my, mx = height // 2, width // 2
    whole = (slice(0, height), slice(0, width))
    return [whole,
            (slice(0, my), slice(0, mx)), (slice(0, my), slice(mx, width)),
            (slice(my, height), slice(0, mx)), (slice(my, height), slice(mx, width))]


def _region_features(h, s, v, mag, ori) -> np.ndarray:
    parts = [_l1(_hist(h, HSV_BINS, 1.0)), _l1(_hist(s, HSV_BINS, 1.0)), _l1(_hist(v, HSV_BINS, 1.0))]
    edges = mag > EDGE_THRESHOLD
    if edges.any():
        parts.append(_l1(_hist(ori[edges], EDGE_BINS, np.pi, weights=mag[edges])))
    else:
        parts.append(np.full(EDGE_BINS, 1.0 / EDGE_BINS))
    parts.append(_l1(_hist(mag, EDGE_BINS, MAGNITUDE_RANGE)))
    return np.concatenate(parts)


def compute_descriptor(frame: Frame) -> FrameDescriptor:
    rgb = frame.rgb
    height, width = rgb.shape[:2]
    if height < MIN_SIZE or width < MIN_SIZE:
        raise FrameTooSmall(f"descriptor needs at least {MIN_SIZE}x{MIN_SIZE}, got {width}x{height}")
    h, s, v = rgb_to_hsv(rgb)
    dx, dy = gradients(rgb @ LUMA_WEIGHTS)
    mag = np.hypot(dx, dy)
    ori = np.mod(np.arctan2(dy, dx), np.pi)
    ori = np.where(ori >= np.pi, 0.0, ori)
    vec = np.concatenate([_region_features(h[r], s[r], v[r], mag[r], ori[r])
                          for r in region_slices(height, width)])
    return FrameDescriptor(frame.index, vec)


def compute_descriptors(frames, threads: int | None = 1) -> list[FrameDescriptor]:
    return parallel_map(compute_descriptor, frames, threads)


def descriptor_matrix(descriptors) -> np.ndarray:
    return np.stack([d.vector for d in descriptors]) if descriptors else np.zeros((0, DESCRIPTOR_DIM))


def descriptor_distance(a, b) -> float:
    va = a.vector if isinstance(a, FrameDescriptor) else np.asarray(a, dtype=np.float64)
    vb = b.vector if isinstance(b, FrameDescriptor) else np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"descriptor dims differ: {va.shape} vs {vb.shape}")
    return float(np.linalg.norm(va - vb))


# 25 L1-normalized histograms; two such histograms are at most sqrt(2) apart
MAX_DISTANCE = float(np.sqrt(2.0 * N_REGIONS * 5))


def normalized_distance(a, b) -> float:
    return descriptor_distance(a, b) / MAX_DISTANCE


def write_descriptors(path, descriptors) -> None:
    """Binary dump: magic, then per frame u32 index + 2,220 f32, all little-endian."""
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        for d in descriptors:
            fh.write(struct.pack("<I", d.index))
            fh.write(np.asarray(d.vector, dtype="<f4").tobytes())


def read_descriptors(path) -> list[FrameDescriptor]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(DUMP_MAGIC)] != DUMP_MAGIC:
        raise ThumbforgeError(f"{path}: not a descriptor dump")
    record = 4 + 4 * DESCRIPTOR_DIM
    body = data[len(DUMP_MAGIC):]
    if len(body) % record:
        raise ThumbforgeError(f"{path}: truncated descriptor record")
    out = []
    for off in range(0, len(body), record):
        (index,) = struct.unpack_from("<I", body, off)
        vec = np.frombuffer(body, dtype="<f4", count=DESCRIPTOR_DIM, offset=off + 4)
        out.append(FrameDescriptor(index, vec.astype(np.float64)))
    return out
