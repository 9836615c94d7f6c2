"""Small array helpers shared by the feature modules."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import ndimage


def gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences in the interior, one-sided at the borders. Returns (dx, dy)."""
    dy, dx = np.gradient(np.asarray(gray, dtype=np.float64))
    return dx, dy


def gradient_magnitude(gray: np.ndarray) -> np.ndarray:
    dx, dy = gradients(gray)
    return np.hypot(dx, dy)


def resize(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with pixel-center alignment; works on 2-D or H x W x C arrays."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    oh, ow = shape
    if (h, w) == (oh, ow):
        return img.copy()
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    if img.ndim == 2:
        return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")
    return np.stack(
        [ndimage.map_coordinates(img[..., c], [yy, xx], order=1, mode="nearest") for c in range(img.shape[2])],
        axis=-1,
    )


def downscale(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Area-ish downscale: box prefilter proportional to the shrink factor, then bilinear."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    fy, fx = h / shape[0], w / shape[1]
    if fy > 1 or fx > 1:
        size = [max(1, int(round(fy))), max(1, int(round(fx)))] + [1] * (img.ndim - 2)
        img = ndimage.uniform_filter(img, size=size, mode="nearest")
    return resize(img, shape)


def resolve_threads(threads: int | None) -> int:
    if threads:
        return max(1, int(threads))
    env = os.environ.get("THUMBFORGE_THREADS")
    return max(1, int(env)) if env else 1


def parallel_map(fn, items, threads: int | None = 1) -> list:
    """Order-preserving map; results are identical for any thread count."""
    items = list(items)
    n = resolve_threads(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
