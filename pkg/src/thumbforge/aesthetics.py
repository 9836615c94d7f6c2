"""Hand-crafted aesthetic features (52 dims) plus the stillness score.

Slot order: contrast, HSV averages, central HSV averages, HSV histograms
(12/3/5 bins), HSV histogram contrasts, pleasure/arousal/dominance, GLCM
texture, contrast balance, exposure balance, JPEG quality, Sobel sharpness,
3x3 saliency grid, spectral uniqueness, left/right symmetry.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._imageops import gradients, parallel_map, resize
from .errors import DimensionMismatch, EmptyCorpus, FrameTooSmall
from .frame_io import Frame, GrayFrame, HsvFrame, to_gray, to_hsv

CANONICAL = 64
GLCM_LEVELS = 16
HUE_BINS, SAT_BINS, VAL_BINS = 12, 3, 5
MIN_SIZE = 16


def _slot_names() -> list[tuple[str, list[str]]]:
    return [
        ("contrast", ["contrast"]),
        ("hsv_avg", ["hsv_avg_h", "hsv_avg_s", "hsv_avg_v"]),
        ("hsv_central", ["hsv_central_h", "hsv_central_s", "hsv_central_v"]),
        ("hsv_hist", [f"hsv_hist_h{i:02d}" for i in range(HUE_BINS)]
         + [f"hsv_hist_s{i}" for i in range(SAT_BINS)]
         + [f"hsv_hist_v{i}" for i in range(VAL_BINS)]),
        ("hsv_contrast", ["hsv_contrast_h", "hsv_contrast_s", "hsv_contrast_v"]),
        ("pad", ["pleasure", "arousal", "dominance"]),
        ("glcm", ["glcm_entropy", "glcm_energy", "glcm_contrast", "glcm_homogeneity"]),
        ("contrast_balance", ["contrast_balance"]),
        ("exposure_balance", ["exposure_balance"]),
        ("jpeg_quality", ["jpeg_quality"]),
        ("sharpness_sobel", ["sharpness_sobel"]),
        ("object_presence", [f"object_presence_{i}" for i in range(9)]),
        ("uniqueness", ["uniqueness"]),
        ("symmetry", ["symmetry"]),
    ]


SLOTS: dict[str, slice] = {}
AESTHETIC_NAMES: list[str] = []
for _slot, _names in _slot_names():
    SLOTS[_slot] = slice(len(AESTHETIC_NAMES), len(AESTHETIC_NAMES) + len(_names))
    AESTHETIC_NAMES.extend(_names)
AESTHETIC_DIM = len(AESTHETIC_NAMES)
ANALYSIS_NAMES = AESTHETIC_NAMES + ["stillness"]
ANALYSIS_DIM = len(ANALYSIS_NAMES)
assert AESTHETIC_DIM == 52 and ANALYSIS_DIM == 53


@dataclass(frozen=True, eq=False)
class AestheticVector:
    index: int
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.shape != (AESTHETIC_DIM,):
            raise DimensionMismatch(f"aesthetic vector must have {AESTHETIC_DIM} dims, got {v.shape}")
        object.__setattr__(self, "vector", v)

    def slot(self, name: str) -> np.ndarray:
        return self.vector[SLOTS[name]]


@dataclass(frozen=True, eq=False)
class AnalysisVector:
    index: int
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.shape != (ANALYSIS_DIM,):
            raise DimensionMismatch(f"analysis vector must have {ANALYSIS_DIM} dims, got {v.shape}")
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class JpegQualityParams:
    """Constants of the Wang-Sheikh-Bovik blockiness model."""

    alpha: float = -245.9
    beta: float = 261.9
    gamma1: float = -0.0240
    gamma2: float = 0.0160
    gamma3: float = 0.0064
    floor: float = 1e-6


@dataclass(frozen=True, eq=False)
class SpectrumPrior:
    spectrum: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.spectrum, dtype=np.float64)
        if s.shape != (CANONICAL, CANONICAL) or not np.all(np.isfinite(s)):
            raise DimensionMismatch("spectrum prior must be a finite 64x64 array")
        object.__setattr__(self, "spectrum", s)


def _gray(g) -> np.ndarray:
    if isinstance(g, GrayFrame):
        return g.gray
    if isinstance(g, Frame):
        return to_gray(g).gray
    return np.asarray(g, dtype=np.float64)


def _require(g: np.ndarray, h: int, w: int, what: str) -> None:
    if g.shape[0] < h or g.shape[1] < w:
        raise FrameTooSmall(f"{what} needs at least {w}x{h}, got {g.shape[1]}x{g.shape[0]}")


# ---------------------------------------------------------------- color


def contrast_feature(gray) -> float:
    g = _gray(gray)
    mean = g.mean()
    if mean <= 0:
        return 0.0
    return float((g.max() - g.min()) / mean)


def _norm_hist(values: np.ndarray, bins: int) -> np.ndarray:
    idx = np.clip((values * bins).astype(np.int64), 0, bins - 1)
    h = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
    return h / h.sum()


def pad_scores(mean_s: float, mean_v: float) -> np.ndarray:
    """Pleasure, arousal, dominance from mean saturation and brightness."""
    return np.array([
        0.69 * mean_v + 0.22 * mean_s,
        -0.31 * mean_v + 0.60 * mean_s,
        -0.76 * mean_v + 0.32 * mean_s,
    ])


def hsv_stats(hsv: HsvFrame) -> np.ndarray:
    """32 values: averages(3), central averages(3), histograms(20), histogram stds(3), PAD(3)."""
    h, s, v = hsv.h, hsv.s, hsv.v
    rows, cols = h.shape
    cy, cx = rows // 4, cols // 4
    centre = (slice(cy, cy + max(1, rows // 2)), slice(cx, cx + max(1, cols // 2)))
    avg = np.array([h.mean(), s.mean(), v.mean()])
    central = np.array([h[centre].mean(), s[centre].mean(), v[centre].mean()])
    hists = [_norm_hist(h, HUE_BINS), _norm_hist(s, SAT_BINS), _norm_hist(v, VAL_BINS)]
    spread = np.array([hh.std() for hh in hists])
    return np.concatenate([avg, central, *hists, spread, pad_scores(avg[1], avg[2])])


# ---------------------------------------------------------------- texture


_GLCM_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1))  # 0, 45, 90, 135 degrees


def glcm_matrix(gray, levels: int = GLCM_LEVELS) -> np.ndarray:
    g = _gray(gray)
    _require(g, 2, 2, "GLCM")
    q = np.clip((g * levels).astype(np.int64), 0, levels - 1)
    rows, cols = q.shape
    counts = np.zeros(levels * levels)
    for dy, dx in _GLCM_OFFSETS:
        y0, y1 = max(0, -dy), rows - max(0, dy)
        x0, x1 = max(0, -dx), cols - max(0, dx)
        a = q[y0:y1, x0:x1]
        b = q[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        counts += np.bincount((a * levels + b).ravel(), minlength=levels * levels)
    m = counts.reshape(levels, levels)
    m = m + m.T
    return m / m.sum()


def glcm_features(gray) -> np.ndarray:
    """Entropy (bits), energy, contrast, homogeneity of the symmetric GLCM."""
    p = glcm_matrix(gray)
    i, j = np.indices(p.shape)
    nz = p[p > 0]
    entropy = float(-(nz * np.log2(nz)).sum()) + 0.0
    energy = float((p ** 2).sum())
    contrast = float(((i - j) ** 2 * p).sum())
    homogeneity = float((p / (1.0 + np.abs(i - j))).sum())
    return np.array([entropy, energy, contrast, homogeneity])


# ---------------------------------------------------------------- basic quality


def equalize(g: np.ndarray, bins: int = 256) -> np.ndarray:
    """Histogram equalization mapping each bin to its mid-cdf value."""
    idx = np.clip((g * bins).astype(np.int64), 0, bins - 1)
    hist = np.bincount(idx.ravel(), minlength=bins) / idx.size
    cdf = np.cumsum(hist)
    mid = cdf - 0.5 * hist
    return mid[idx]


def contrast_balance(gray) -> float:
    g = _gray(gray)
    idx = np.clip((g * 256).astype(np.int64), 0, 255)
    if np.all(idx == idx.flat[0]):
        return 0.0
    return float(np.sqrt(np.mean((g - equalize(g)) ** 2)))


def exposure_balance(gray) -> float:
    g = _gray(gray).ravel()
    d = g - g.mean()
    m2 = np.mean(d * d)
    if m2 <= 1e-12:
        return 0.0
    return float(abs(np.mean(d ** 3) / m2 ** 1.5))


def jpeg_quality(gray, params: JpegQualityParams = JpegQualityParams()) -> float:
    """No-reference blockiness score on 8x8 block boundaries (higher is better)."""
    x = _gray(gray) * 255.0
    _require(x, 16, 16, "JPEG quality")

    def one_direction(a: np.ndarray) -> tuple[float, float, float]:
        rows, cols = a.shape
        d = a[:, 1:] - a[:, :-1]
        nblocks = cols // 8 - 1
        b = np.abs(d[:, 7::8][:, :nblocks]).mean()
        act = (8.0 * np.abs(d).mean() - b) / 7.0
        z = ((d[:, :-1] * d[:, 1:]) < 0).mean()
        return b, act, z

    bh, ah, zh = one_direction(x)
    bv, av, zv = one_direction(x.T)
    f = params.floor
    B = max((bh + bv) / 2.0, f)
    A = max((ah + av) / 2.0, f)
    Z = max((zh + zv) / 2.0, f)
    return float(params.alpha + params.beta * B ** params.gamma1 * A ** params.gamma2 * Z ** params.gamma3)


def sharpness_sobel(gray) -> float:
    g = _gray(gray)
    _require(g, 3, 3, "Sobel sharpness")
    sx = ndimage.sobel(g, axis=1, mode="nearest")
    sy = ndimage.sobel(g, axis=0, mode="nearest")
    return float(np.hypot(sx, sy).mean())


# ---------------------------------------------------------------- composition


def saliency_map(gray, size: int = CANONICAL, sigma: float = 3.0) -> np.ndarray:
    """Spectral-residual saliency, computed at size x size and resized back, in [0, 1]."""
    g = _gray(gray)
    _require(g, 8, 8, "saliency")
    small = resize(g, (size, size))
    if np.ptp(small) < 1e-12:
        return np.zeros_like(g)
    spectrum = np.fft.fft2(small)
    log_amp = np.log(np.abs(spectrum) + 1e-12)
    residual = log_amp - ndimage.uniform_filter(log_amp, size=3, mode="wrap")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * np.angle(spectrum)))) ** 2
    sal = ndimage.gaussian_filter(sal, sigma=sigma, mode="nearest")
    lo, hi = sal.min(), sal.max()
    if hi - lo <= 0:
        return np.zeros_like(g)
    sal = (sal - lo) / (hi - lo)
    return np.clip(resize(sal, g.shape), 0.0, 1.0)


def grid_means(a: np.ndarray, n: int = 3) -> np.ndarray:
    ys = (np.arange(n + 1) * a.shape[0]) // n
    xs = (np.arange(n + 1) * a.shape[1]) // n
    return np.array([a[ys[r]:ys[r + 1], xs[c]:xs[c + 1]].mean() for r in range(n) for c in range(n)])


def object_presence(gray) -> np.ndarray:
    """Mean saliency on a 3x3 grid, row-major."""
    return grid_means(saliency_map(gray))


def log_spectrum(gray) -> np.ndarray:
    """Log-amplitude spectrum at 64x64 with the DC bin zeroed and the rest mean-centred."""
    small = resize(_gray(gray), (CANONICAL, CANONICAL))
    spec = np.log(np.abs(np.fft.fft2(small)) + 1e-6)
    return _centre_spectrum(spec)


def _centre_spectrum(spec: np.ndarray) -> np.ndarray:
    spec = spec.copy()
    spec[0, 0] = 0.0
    mask = np.ones(spec.shape, dtype=bool)
    mask[0, 0] = False
    spec[mask] -= spec[mask].mean()
    return spec


def one_over_f_prior() -> SpectrumPrior:
    """Radially symmetric 1/f amplitude model, used when no corpus prior is given."""
    f = np.fft.fftfreq(CANONICAL) * CANONICAL
    r = np.hypot(*np.meshgrid(f, f, indexing="ij"))
    r[0, 0] = 1.0
    return SpectrumPrior(_centre_spectrum(-np.log(r)))


def build_spectrum_prior(frames) -> SpectrumPrior:
    spectra = [log_spectrum(f) for f in frames]
    if not spectra:
        raise EmptyCorpus("spectrum prior needs at least one frame")
    return SpectrumPrior(np.mean(spectra, axis=0))


def uniqueness(gray, prior: SpectrumPrior | None = None) -> float:
    prior = prior or one_over_f_prior()
    return float(np.linalg.norm(log_spectrum(gray) - prior.spectrum))


def hog(g: np.ndarray, cell: int = 8, bins: int = 9, block: int = 2) -> np.ndarray:
    """Unsigned-orientation HOG with L2-normalized blocks (stride one cell)."""
    rows, cols = g.shape[0] // cell, g.shape[1] // cell
    if rows == 0 or cols == 0:
        return np.zeros(bins)
    dx, dy = gradients(g)
    mag = np.hypot(dx, dy)[:rows * cell, :cols * cell]
    ang = np.mod(np.degrees(np.arctan2(dy, dx)), 180.0)[:rows * cell, :cols * cell]
    b = np.clip((ang / (180.0 / bins)).astype(np.int64), 0, bins - 1)
    cy, cx = np.indices(b.shape)
    key = ((cy // cell) * cols + (cx // cell)) * bins + b
    cells = np.bincount(key.ravel(), weights=mag.ravel(), minlength=rows * cols * bins)
    cells = cells.reshape(rows, cols, bins)
    by, bx = min(block, rows), min(block, cols)
    out = []
    for r in range(rows - by + 1):
        for c in range(cols - bx + 1):
            v = cells[r:r + by, c:c + bx].ravel()
            out.append(v / np.sqrt(np.dot(v, v) + 1e-10))
    return np.concatenate(out)


def symmetry(gray) -> float:
    """HOG distance between the left half and the mirrored right half (0 = mirror symmetric)."""
    g = _gray(gray)
    if g.shape[1] < 16 or g.shape[0] < 8:
        raise FrameTooSmall(f"symmetry needs at least 16x8, got {g.shape[1]}x{g.shape[0]}")
    half = g.shape[1] // 2
    left = g[:, :half]
    right = g[:, g.shape[1] - half:][:, ::-1]
    return float(np.linalg.norm(hog(left) - hog(right)))


# ---------------------------------------------------------------- motion


def stillness(prev, cur) -> float:
    a, b = _gray(prev), _gray(cur)
    if a.shape != b.shape:
        raise DimensionMismatch(f"frame sizes differ: {a.shape} vs {b.shape}")
    return float(1.0 / (1.0 + np.mean((a - b) ** 2)))


def stillness_sequence(frames) -> np.ndarray:
    """Stillness of each frame against its predecessor; the first frame scores 1."""
    grays = [_gray(f) for f in frames]
    out = np.ones(len(grays))
    for i in range(1, len(grays)):
        out[i] = stillness(grays[i - 1], grays[i])
    return out


# ---------------------------------------------------------------- assembly


def compute_aesthetic_vector(frame: Frame, prior: SpectrumPrior | None = None) -> AestheticVector:
    g = to_gray(frame).gray
    _require(g, MIN_SIZE, MIN_SIZE, "aesthetic features")
    vec = np.concatenate([
        [contrast_feature(g)],
        hsv_stats(to_hsv(frame)),
        glcm_features(g),
        [contrast_balance(g), exposure_balance(g), jpeg_quality(g), sharpness_sobel(g)],
        object_presence(g),
        [uniqueness(g, prior), symmetry(g)],
    ])
    return AestheticVector(frame.index, vec)


def compute_aesthetic_vectors(frames, prior: SpectrumPrior | None = None,
                              threads: int | None = 1) -> list[AestheticVector]:
    prior = prior or one_over_f_prior()
    return parallel_map(lambda f: compute_aesthetic_vector(f, prior), frames, threads)


def analysis_vector(aesthetic: AestheticVector, still: float) -> AnalysisVector:
    return AnalysisVector(aesthetic.index, np.append(aesthetic.vector, still))


def write_aesthetics_csv(path, vectors, stillness_by_index=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["index"] + AESTHETIC_NAMES + (["stillness"] if stillness_by_index is not None else [])
        w.writerow(header)
        for v in vectors:
            row = [v.index] + [repr(float(x)) for x in v.vector]
            if stillness_by_index is not None:
                row.append(repr(float(stillness_by_index[v.index])))
            w.writerow(row)
