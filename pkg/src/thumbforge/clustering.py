"""Seeded k-means, gap-statistic model selection, subshots and stillness keyframes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, KTooLarge, ThumbforgeError

log = logging.getLogger(__name__)

LOG_EPS = 1e-12
# best-of-n restarts for data clusterings; uniform gap references have no competing basins
RESTARTS = 10


@dataclass
class Clustering:
    k: int
    assignment: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0
    inertia_trace: list[float] = field(default_factory=list)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster)


@dataclass
class GapResult:
    k_star: int
    ks: list[int]
    gap: np.ndarray
    sk: np.ndarray
    log_wk: np.ndarray
    clusterings: dict[int, Clustering] = field(default_factory=dict, repr=False)

    @property
    def best(self) -> Clustering:
        return self.clusterings[self.k_star]


@dataclass(frozen=True)
class Subshot:
    shot_id: int
    start: int
    end: int
    cluster_id: int

    @property
    def indices(self) -> range:
        return range(self.start, self.end + 1)


def _sq_dists(x: np.ndarray, c: np.ndarray, x_sq: np.ndarray) -> np.ndarray:
    d = x_sq[:, None] - 2.0 * (x @ c.T) + np.einsum("ij,ij->i", c, c)[None, :]
    return np.maximum(d, 0.0)


def _inertia(x: np.ndarray, centroids: np.ndarray, assignment: np.ndarray) -> float:
    diff = x - centroids[assignment]
    return float(np.einsum("ij,ij->", diff, diff))


def _means(x: np.ndarray, assignment: np.ndarray, k: int) -> np.ndarray:
    onehot = np.zeros((k, len(x)))
    onehot[assignment, np.arange(len(x))] = 1.0
    return (onehot @ x) / onehot.sum(axis=1)[:, None]


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator, x_sq: np.ndarray) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(x, x[chosen], x_sq)[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a centre: pick an unused index uniformly
            unused = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(unused))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(x, x[[nxt]], x_sq)[:, 0])
    return x[chosen].copy()


def _repair_empty(x, assignment, centroids, k):
    """Give each empty cluster the point farthest from its current centroid."""
    sizes = np.bincount(assignment, minlength=k)
    for j in np.flatnonzero(sizes == 0):
        dist = np.einsum("ij,ij->i", x - centroids[assignment], x - centroids[assignment])
        donors = sizes[assignment] > 1
        if not donors.any():
            break
        dist = np.where(donors, dist, -1.0)
        p = int(np.argmax(dist))
        sizes[assignment[p]] -= 1
        assignment[p] = j
        sizes[j] = 1
        centroids[j] = x[p]
    return assignment


def kmeans(points, k: int, seed: int = 42, max_iter: int = 100, n_init: int = 1) -> Clustering:
    """Lloyd's algorithm from k-means++ seeds; deterministic for a given seed.

    With ``n_init > 1`` the best of that many seeded restarts is kept (first wins ties).
    """
    if n_init > 1:
        seeds = np.random.SeedSequence(seed).generate_state(n_init)
        runs = [kmeans(points, k, int(s), max_iter) for s in seeds]
        return min(runs, key=lambda c: c.inertia)
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise EmptyInput("k-means needs a non-empty 2-D point array")
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} available points")
    rng = np.random.default_rng(seed)
    x_sq = np.einsum("ij,ij->i", x, x)
    total_sq = float(x_sq.sum())
    centroids = _kmeans_pp(x, k, rng, x_sq)
    assignment = np.full(n, -1)
    trace: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(x, centroids, x_sq), axis=1)
        new = _repair_empty(x, new, centroids, k)
        if np.array_equal(new, assignment):
            break
        assignment = new
        onehot = np.zeros((k, n))
        onehot[assignment, np.arange(n)] = 1.0
        counts = onehot.sum(axis=1)
        centroids = (onehot @ x) / counts[:, None]
        # centroids are cluster means, so W = sum|x|^2 - sum_j n_j |c_j|^2
        inertia = max(total_sq - float(counts @ np.einsum("ij,ij->i", centroids, centroids)), 0.0)
        if trace and inertia > trace[-1] + 1e-9 * total_sq:
            raise ThumbforgeError(f"k-means inertia increased at iteration {it}")
        trace.append(inertia)
    return Clustering(k, assignment, centroids, _inertia(x, centroids, assignment), it, trace)


def gap_statistic(points, k_min: int = 5, k_max: int = 10, B: int = 10, ref_samples: int = 1000,
                  seed: int = 42) -> GapResult:
    """Pick k by comparing log W_k against uniform reference data in the bounding box."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise EmptyInput("gap statistic needs a non-empty 2-D point array")
    n = len(x)
    if k_max > n:
        log.warning("clamping k_max from %d to %d points", k_max, n)
        k_max = n
    if k_min > k_max:
        log.warning("clamping k_min from %d to %d", k_min, k_max)
        k_min = k_max
    k_min = max(1, k_min)
    ks = list(range(k_min, k_max + 1))
    rng = np.random.default_rng(seed)
    full = x
    # zero-range dimensions add nothing to any distance, for data or references
    x = x[:, x.max(axis=0) > x.min(axis=0)] if x.shape[1] > 1 else x
    if x.shape[1] == 0:
        x = np.zeros((n, 1))
    lo, hi = x.min(axis=0), x.max(axis=0)

    clusterings = {k: kmeans(x, k, seed, n_init=RESTARTS) for k in ks}
    for c in clusterings.values():
        c.centroids = _means(full, c.assignment, c.k)
    log_wk = np.array([np.log(clusterings[k].inertia + LOG_EPS) for k in ks])
    ref = np.empty((B, len(ks)))
    for b in range(B):
        sample = rng.uniform(size=(ref_samples, x.shape[1])) * (hi - lo) + lo
        ref_seed = int(rng.integers(2**31))
        for j, k in enumerate(ks):
            kk = min(k, ref_samples)
            ref[b, j] = np.log(kmeans(sample, kk, ref_seed).inertia + LOG_EPS)
    gap = ref.mean(axis=0) - log_wk
    sk = ref.std(axis=0) * np.sqrt(1.0 + 1.0 / B)
    k_star = None
    for j in range(len(ks) - 1):
        if gap[j] >= gap[j + 1] - sk[j + 1]:
            k_star = ks[j]
            break
    if k_star is None:
        k_star = ks[int(np.argmax(gap))]
    return GapResult(k_star, ks, gap, sk, log_wk, clusterings)


def segment_subshots(mask, descriptors, seed: int = 42) -> list[Subshot]:
    """Cluster kept frames with k = #shots; subshots are same-cluster runs inside a shot.

    ``descriptors`` maps frame index -> vector (a dict, or a sequence indexed by frame).
    """
    kept = [i for s, e in mask.shots for i in range(s, e + 1)]
    if not kept:
        raise EmptyInput("no kept frames to segment")
    x = np.stack([np.asarray(getattr(descriptors[i], "vector", descriptors[i])) for i in kept])
    k = len(mask.shots)
    if k > len(kept):
        log.warning("clamping subshot k from %d to %d frames", k, len(kept))
        k = len(kept)
    labels = dict(zip(kept, kmeans(x, k, seed, n_init=RESTARTS).assignment.tolist()))
    subshots = []
    for shot_id, (start, end) in enumerate(mask.shots):
        run_start = start
        for i in range(start + 1, end + 2):
            if i > end or labels[i] != labels[run_start]:
                subshots.append(Subshot(shot_id, run_start, i - 1, labels[run_start]))
                run_start = i
    return subshots


def extract_keyframes(subshots, stillness) -> list[int]:
    """Most still frame per subshot; ties go to the lowest frame index."""
    out = []
    for sub in subshots:
        idx = np.arange(sub.start, sub.end + 1)
        scores = np.array([stillness[i] for i in idx])
        out.append(int(idx[int(np.argmax(scores))]))
    return out
