"""Comparison methods: random, k-means (centroid / stillness), group-LASSO and beauty rank.

Baselines see every frame: no quality filtering and no keyframe extraction.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import aesthetics
from .clustering import GapResult, gap_statistic
from .errors import KTooLarge, ModelMissing, NonConvergence

log = logging.getLogger(__name__)

SUBSAMPLE_ABOVE = 2000
STRIDE = 5
BEAUTY_STRIDE = 5
METHODS = ("random", "kmeans-centroid", "kmeans-stillness", "glasso", "beauty")


def subsample(n_frames: int, limit: int = SUBSAMPLE_ABOVE, stride: int = STRIDE) -> np.ndarray:
    """Frame indices fed to the baselines: all of them, or every ``stride``-th above ``limit``."""
    return np.arange(0, n_frames, stride if n_frames > limit else 1)


def baseline_random(n_frames: int, k: int, seed: int = 42) -> list[int]:
    if k > n_frames:
        raise KTooLarge(f"cannot draw {k} distinct frames from {n_frames}")
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.choice(n_frames, size=k, replace=False)]


def _merged_clusters(gap: GapResult, indices) -> list[tuple[list[int], np.ndarray]]:
    """Clusters of the selected k as (frame indices, centroid); identical centroids are merged."""
    best = gap.best
    groups: dict[bytes, tuple[list[int], np.ndarray]] = {}
    for c in range(best.k):
        members = [int(indices[i]) for i in best.members(c)]
        if not members:
            continue
        key = best.centroids[c].tobytes()
        if key in groups:
            groups[key][0].extend(members)
        else:
            groups[key] = (members, best.centroids[c])
    return [(sorted(m), cen) for m, cen in groups.values()]


def _rank_by_size(picks) -> list[int]:
    """picks: (cluster size, frame index); larger clusters first, then lower index."""
    return [i for _, i in sorted(picks, key=lambda p: (-p[0], p[1]))]


def cluster_frames(vectors, seed: int = 42, k_min: int = 5, k_max: int = 10) -> GapResult:
    """The partition shared by both k-means baselines."""
    return gap_statistic(np.asarray(vectors, dtype=np.float64), k_min, k_max, seed=seed)


def baseline_kmeans_centroid(vectors, seed: int = 42, k_min: int = 5, k_max: int = 10,
                             indices=None, gap: GapResult | None = None) -> list[int]:
    """Per cluster the frame closest to the centroid, ranked by cluster size.

    ``vectors`` holds one descriptor per row; ``indices`` maps rows to frame numbers.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if gap is None:
        gap = cluster_frames(x, seed, k_min, k_max)
    idx = np.arange(len(x)) if indices is None else np.asarray(indices)
    row_of = {int(f): r for r, f in enumerate(idx)}
    picks = []
    for members, centroid in _merged_clusters(gap, idx):
        d = [float(np.sum((x[row_of[m]] - centroid) ** 2)) for m in members]
        picks.append((len(members), members[int(np.argmin(d))]))
    return _rank_by_size(picks)


def baseline_kmeans_stillness(vectors, stillness, seed: int = 42, k_min: int = 5, k_max: int = 10,
                              indices=None, gap: GapResult | None = None) -> list[int]:
    """Same partition as the centroid baseline; per cluster the stillest frame.

    ``stillness`` maps frame index -> score.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if gap is None:
        gap = cluster_frames(x, seed, k_min, k_max)
    idx = np.arange(len(x)) if indices is None else np.asarray(indices)
    picks = []
    for members, _ in _merged_clusters(gap, idx):
        best = max(members, key=lambda i: (stillness[i], -i))
        picks.append((len(members), best))
    return _rank_by_size(picks)


@dataclass
class SparseCoefficients:
    A: np.ndarray
    lam: float
    objective_trace: list[float] = field(default_factory=list)
    row_scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    converged: bool = True
    n_iter: int = 0


def group_lasso_objective(X: np.ndarray, A: np.ndarray, lam: float) -> float:
    R = X - X @ A
    return float(np.sum(R * R) + 0.5 * lam * np.linalg.norm(A, axis=1).sum())


def _row_shrink(V: np.ndarray, t: float) -> np.ndarray:
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    scale = np.where(norms > t, 1.0 - t / np.where(norms > 0, norms, 1.0), 0.0)
    return V * scale


def zero_solution_lambda(X) -> float:
    """Smallest lambda for which A = 0 is optimal: lambda/2 >= 2 max_i ||(X^T X)_i||."""
    G = np.asarray(X, dtype=np.float64).T @ np.asarray(X, dtype=np.float64)
    return 4.0 * float(np.linalg.norm(G, axis=1).max())


def group_lasso_scores(X, lam: float, max_iter: int = 5000, tol: float = 1e-6,
                       warn_tol: float = 1e-4) -> SparseCoefficients:
    """Minimize ||X - XA||_F^2 + (lam/2) ||A||_{2,1} over n x n A by proximal gradient.

    X is d x n (one column per frame). Starts from A = 0 with step 1/L,
    L = 2 sigma_max(X^T X). Row scores are the row norms of A.
    """
    X = np.asarray(X, dtype=np.float64)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("X must be a d x n matrix with n >= 1")
    n = X.shape[1]
    G = X.T @ X
    L = 2.0 * float(np.linalg.eigvalsh(G)[-1])
    A = np.zeros((n, n))
    f0 = group_lasso_objective(X, A, lam)
    trace = [f0]
    if L <= 0:
        return SparseCoefficients(A, lam, trace, np.zeros(n), True, 0)
    step = 1.0 / L
    shrink = 0.5 * lam * step
    converged = False
    change = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * (G @ A - G)
        A = _row_shrink(A - step * grad, shrink)
        f = group_lasso_objective(X, A, lam)
        if f > trace[-1] + 1e-12 * max(1.0, abs(trace[-1])):
            raise AssertionError(f"group-LASSO objective increased at iteration {it}")
        change = abs(trace[-1] - f) / max(abs(trace[-1]), 1e-300)
        trace.append(f)
        if change < tol or f <= 1e-15 * f0:
            converged = True
            break
    if not converged and change > warn_tol:
        warnings.warn(f"group-LASSO stopped after {max_iter} iterations (relative change {change:.2e})",
                      NonConvergence, stacklevel=2)
    converged = converged or change <= warn_tol
    return SparseCoefficients(A, lam, trace, np.linalg.norm(A, axis=1), converged, it)


def baseline_group_lasso(vectors, lam: float = 1.0, indices=None) -> tuple[list[int], SparseCoefficients]:
    """Rank frames by representativeness s_i (descending, lowest index on ties).

    ``vectors`` holds one feature row per frame; the solver sees their transpose.
    """
    x = np.asarray(vectors, dtype=np.float64)
    idx = np.arange(len(x)) if indices is None else np.asarray(indices)
    coef = group_lasso_scores(x.T, lam)
    order = sorted(range(len(idx)), key=lambda r: (-coef.row_scores[r], int(idx[r])))
    return [int(idx[r]) for r in order], coef


def baseline_beauty_rank(frames, model, stride: int = BEAUTY_STRIDE, threads: int | None = 1,
                         prior=None) -> list[int]:
    """Score every ``stride``-th frame with the forest and rank by score; no dedup."""
    if model is None:
        raise ModelMissing("beauty rank needs a trained model (--model)")
    frames = list(frames)
    picked = [f for f in frames if f.index % stride == 0]
    if not picked:
        return []
    vecs = aesthetics.compute_aesthetic_vectors(picked, prior, threads)
    scores = model.predict_many(np.stack([v.vector for v in vecs]))
    order = sorted(range(len(picked)), key=lambda j: (-scores[j], picked[j].index))
    return [picked[j].index for j in order]
