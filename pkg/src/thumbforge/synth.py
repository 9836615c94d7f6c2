"""Synthetic video generators with known answers.

Used by the test-suite, the acceptance harness and ``thumbforge train --synthetic``.
Scenes are flat backgrounds carrying a few fine checker patches on a coarse
grid (fine texture is what blur destroys, so mean-gradient sharpness
separates blurred frames); camera shake is modelled as integer crop offsets plus faint sensor noise, so only
deliberately planted "static" frames repeat their predecessor exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .frame_io import Frame, frames_from_arrays
from .frame_io import hsv_to_rgb as _hsv_to_rgb

PAD = 4
CELL = 16


def scene_canvas(rng: np.random.Generator, height: int, width: int, n_patches: int = 3,
                 avoid=(), pad: int = PAD, cell: int = CELL) -> tuple[np.ndarray, list[int]]:
    """A padded RGB canvas: ramp-lit background plus fine checker patches on grid cells.

    Returns the canvas and the grid cells used; ``avoid`` keeps consecutive
    scenes from reusing the same cells so their edge maps differ. Patch means
    stay near the background level so blurring leaves only faint outlines.
    """
    H, W = height + 2 * pad, width + 2 * pad
    canvas = np.empty((H, W, 3))
    level = rng.uniform(0.45, 0.65)
    canvas[:] = hsv_to_rgb(rng.uniform(), rng.uniform(0.3, 1.0), level)
    # smooth illumination ramp: spreads the tonal histogram without adding edges
    angle = rng.uniform(0, 2 * np.pi)
    gy, gx = np.mgrid[0:H, 0:W]
    ramp = (np.cos(angle) * (gx / W - 0.5) + np.sin(angle) * (gy / H - 0.5)) * 0.3
    canvas *= (1.0 + ramp)[..., None]
    rows, cols = height // cell, width // cell
    free = [c for c in range(rows * cols) if c not in set(avoid)]
    if len(free) < n_patches:
        free = list(range(rows * cols))
    cells = sorted(int(c) for c in rng.choice(free, size=min(n_patches, len(free)), replace=False))
    yy, xx = np.mgrid[0:cell, 0:cell]
    checker = ((yy // 2 + xx // 2) % 2).astype(bool)
    for c in cells:
        r, q = divmod(c, cols)
        mid = level + rng.choice([-1.0, 1.0]) * 0.1
        dark = hsv_to_rgb(rng.uniform(), rng.uniform(0.2, 0.8), mid - 0.35)
        light = hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.4), min(1.0, mid + 0.35))
        y0, x0 = pad + r * cell, pad + q * cell
        canvas[y0:y0 + cell, x0:x0 + cell] = np.where(checker[..., None], light, dark)
    return np.clip(canvas, 0.0, 1.0), cells


def hsv_to_rgb(h: float, s: float, v: float) -> np.ndarray:
    return _hsv_to_rgb(np.array(h), np.array(s), np.array(v)).astype(np.float64)


def render(canvas: np.ndarray, dy: int, dx: int, height: int, width: int, pad: int = PAD) -> np.ndarray:
    return canvas[pad + dy:pad + dy + height, pad + dx:pad + dx + width].copy()


def add_noise(rgb: np.ndarray, rng: np.random.Generator, sigma: float = 0.004) -> np.ndarray:
    return np.clip(rgb + rng.normal(0.0, sigma, size=rgb.shape), 0.0, 1.0)


def make_dark(rgb: np.ndarray, factor: float = 0.08) -> np.ndarray:
    return rgb * factor


def make_blurry(rgb: np.ndarray, sigma: float = 1.3) -> np.ndarray:
    return ndimage.gaussian_filter(rgb, sigma=(sigma, sigma, 0), mode="nearest")


def make_uniform(rgb: np.ndarray, amplitude: float = 0.03) -> np.ndarray:
    return np.clip(0.5 + amplitude * (rgb - 0.5), 0.0, 1.0)


@dataclass
class SyntheticVideo:
    frames: list[Frame]
    scene_of: np.ndarray
    cuts: list[int]
    static: list[int] = field(default_factory=list)
    planted: dict[str, list[int]] = field(default_factory=dict)
    canvases: list[np.ndarray] = field(default_factory=list)

    @property
    def arrays(self) -> list[np.ndarray]:
        return [f.rgb for f in self.frames]


def make_video(scene_lengths, seed: int = 0, height: int = 48, width: int = 64, jitter: int = 1,
               static_frames=(), noise: float = 0.004, fps: float = 30.0,
               scene_ids=None) -> SyntheticVideo:
    """Concatenate shaky segments separated by hard cuts.

    ``static_frames`` lists absolute indices that duplicate their predecessor exactly.
    ``scene_ids`` (one per segment) lets a scene recur; recurring layouts draw
    every scene's patches from cells no earlier scene used, while plain
    layouts only avoid the previous scene's cells.
    """
    rng = np.random.default_rng(seed)
    ids = list(range(len(scene_lengths))) if scene_ids is None else [int(s) for s in scene_ids]
    if len(ids) != len(scene_lengths):
        raise ValueError("scene_ids needs one entry per segment")
    canvases = []
    cells: list[int] = []
    used: list[int] = []
    for _ in range(max(ids) + 1):
        canvas, cells = scene_canvas(rng, height, width, avoid=cells if scene_ids is None else used)
        used += cells
        canvases.append(canvas)
    static = set(int(i) for i in static_frames)
    arrays = []
    scene_of = []
    cuts = []
    for seg, (s, length) in enumerate(zip(ids, scene_lengths)):
        if seg > 0:
            cuts.append(len(arrays))
        for j in range(length):
            i = len(arrays)
            if i in static and j > 0:
                arrays.append(arrays[-1].copy())
            else:
                dy, dx = rng.integers(-jitter, jitter + 1, size=2) if jitter else (0, 0)
                arrays.append(add_noise(render(canvases[s], int(dy), int(dx), height, width), rng, noise))
            scene_of.append(s)
    return SyntheticVideo(frames_from_arrays(arrays, fps), np.array(scene_of), cuts,
                          sorted(static), {}, canvases)


PLANTED_LENGTHS = (40, 45, 80, 45, 45, 45)
PLANTED_LARGEST = 2
DARK_INTRO = 5


def planted_answer_video(seed: int = 0) -> tuple[SyntheticVideo, int]:
    """300 frames, 6 scenes; the largest holds the video's only exact repeat.

    The video opens on a few dark frames (a fade-in) so that no kept frame
    inherits the first-frame stillness convention. Returns (video, answer).
    """
    starts = np.cumsum((0,) + PLANTED_LENGTHS[:-1])
    answer = int(starts[PLANTED_LARGEST] + PLANTED_LENGTHS[PLANTED_LARGEST] // 2)
    video = make_video(PLANTED_LENGTHS, seed=seed, height=64, width=96, static_frames=[answer],
                       scene_ids=range(len(PLANTED_LENGTHS)))
    arrays = video.arrays
    for i in range(DARK_INTRO):
        arrays[i] = make_dark(arrays[i])
    video.frames = frames_from_arrays(arrays)
    return video, answer


def plant_defects(video: SyntheticVideo, n_each: int = 5, seed: int = 0, margin: int = 5) -> SyntheticVideo:
    """Replace clean frames with dark, blurry and uniform variants of themselves."""
    rng = np.random.default_rng(seed)
    n = len(video.frames)
    forbidden = set()
    for c in video.cuts:
        forbidden.update(range(c - margin, c + margin))
    for s in video.static:
        forbidden.update((s - 1, s))
    candidates = np.array([i for i in range(1, n - 1) if i not in forbidden])
    # keep planted frames isolated from one another
    chosen: list[int] = []
    for i in rng.permutation(candidates):
        if all(abs(int(i) - j) > 2 for j in chosen):
            chosen.append(int(i))
        if len(chosen) == 3 * n_each:
            break
    arrays = video.arrays
    planted = {"dark": chosen[:n_each], "blurry": chosen[n_each:2 * n_each],
               "uniform": chosen[2 * n_each:3 * n_each]}
    for i in planted["dark"]:
        arrays[i] = make_dark(arrays[i])
    for i in planted["blurry"]:
        arrays[i] = make_blurry(arrays[i])
    for i in planted["uniform"]:
        arrays[i] = make_uniform(arrays[i])
    fps = 1.0 / video.frames[1].timestamp if n > 1 and video.frames[1].timestamp else 30.0
    return SyntheticVideo(frames_from_arrays(arrays, fps), video.scene_of, video.cuts,
                          video.static, {k: sorted(v) for k, v in planted.items()}, video.canvases)


def blobs(n_clusters: int, per_cluster: int, dim: int, seed: int = 0, spread: float = 1.0,
          separation: float = 20.0) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian blobs with centers drawn far apart."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-separation, separation, size=(n_clusters, dim))
    labels = np.repeat(np.arange(n_clusters), per_cluster)
    points = centers[labels] + rng.normal(0.0, spread, size=(len(labels), dim))
    return points, labels


def synthetic_regression(n: int, dim: int = 52, informative: int = 0, noise: float = 0.05,
                         seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """X uniform on [0,1]^dim; y equals one informative column plus small noise."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, dim))
    y = X[:, informative] + rng.normal(0.0, noise, size=n)
    return X, y


def random_scene_frames(n: int, seed: int = 0, height: int = 48, width: int = 64) -> list[Frame]:
    """``n`` unrelated frames of smooth random colour fields plus fine grain.

    Every frame spans all hues, saturations and values, so histogram-bin
    features are rarely tied between frames; tone curve, smoothness and
    grain vary per frame.
    """
    rng = np.random.default_rng(seed)
    arrays = []
    for _ in range(n):
        sigma = (rng.uniform(1.5, 5.0),) * 2 + (0,)
        # a shared luminance component makes dark and bright regions common to all channels
        raw = 0.5 * rng.uniform(size=(height, width, 3)) + 0.5 * rng.uniform(size=(height, width, 1))
        field = ndimage.gaussian_filter(raw, sigma)
        lo, hi = field.min(axis=(0, 1)), field.max(axis=(0, 1))
        # per-channel stretch keeps every hue, saturation and value bin populated
        field = (field - lo) / np.maximum(hi - lo, 1e-12)
        field = field ** rng.uniform(0.7, 2.5, size=3)
        arrays.append(np.clip(field + rng.normal(0.0, rng.uniform(0.005, 0.05), field.shape), 0.0, 1.0))
    return frames_from_arrays(arrays)


def quantile_corpus(n_videos: int, frames_per_video: int = 10, seed: int = 0, planted: str | None = None,
                    **kwargs) -> list[tuple[str, list[Frame], int]]:
    """(video id, frames, thumbnail) triples for the rank-quantile study.

    ``planted=None`` designates a uniformly random frame; ``planted="sharpness"``
    designates each video's sharpest frame (Sobel measure).
    """
    from .aesthetics import sharpness_sobel
    from .frame_io import to_gray

    ss = np.random.SeedSequence(seed)
    out = []
    for v, child in enumerate(ss.spawn(n_videos)):
        rng = np.random.default_rng(child)
        frames = random_scene_frames(frames_per_video, int(rng.integers(2**31)), **kwargs)
        if planted == "sharpness":
            thumb = int(np.argmax([sharpness_sobel(to_gray(f).gray) for f in frames]))
        elif planted is None:
            thumb = int(rng.integers(frames_per_video))
        else:
            raise ValueError(f"unknown planted signal {planted!r}")
        out.append((f"video{v:04d}", frames, thumb))
    return out
