"""Keyframe attractiveness: stillness heuristic or a random-forest regressor on aesthetic vectors."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._imageops import parallel_map
from .aesthetics import AESTHETIC_DIM, AESTHETIC_NAMES, AestheticVector
from .errors import (BadMagic, CorruptNode, DimensionMismatch, EmptyTrainingSet, ModelMissing,
                     VersionMismatch)

MAGIC = b"THFOR01"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<7sIIIQ")
_NODE = struct.Struct("<HdIIdB")
_COUNT = struct.Struct("<I")

N_TREES = 100
MIN_LEAF = 5
MAX_FEATURES = 7  # round(sqrt(52))


class ScoreMode(str, Enum):
    UNSUPERVISED = "unsupervised_stillness"
    SUPERVISED = "supervised_forest"

    @classmethod
    def parse(cls, value) -> "ScoreMode":
        if isinstance(value, cls):
            return value
        aliases = {"unsupervised": cls.UNSUPERVISED, "stillness": cls.UNSUPERVISED,
                   "supervised": cls.SUPERVISED, "forest": cls.SUPERVISED}
        return aliases.get(value) or cls(value)


@dataclass(eq=False)
class Tree:
    """Flat node arrays; node 0 is the root and children always follow their parent."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    is_leaf: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = ~self.is_leaf[node]
        while active.any():
            n = node[active]
            go_left = X[rows[active], self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = ~self.is_leaf[node]
        return self.value[node]

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls(np.zeros(1, np.int64), np.zeros(1), np.zeros(1, np.int64), np.zeros(1, np.int64),
                   np.array([float(value)]), np.ones(1, bool))


@dataclass(eq=False)
class ForestModel:
    trees: list[Tree]
    feature_dim: int = AESTHETIC_DIM
    seed: int = 0
    min_leaf: int = MIN_LEAF
    max_features: int = MAX_FEATURES
    bootstrap: bool = True

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_dim:
            raise DimensionMismatch(f"model expects {self.feature_dim} features, got {X.shape[1]}")
        # sorted per sample so the mean does not depend on tree order
        return _stable_mean(np.sort(np.stack([t.predict(X) for t in self.trees]), axis=0), axis=0)


@dataclass
class ScoreTable:
    mode: ScoreMode
    scores: dict[int, float] = field(default_factory=dict)

    def __getitem__(self, index: int) -> float:
        return self.scores[index]

    def __len__(self) -> int:
        return len(self.scores)


def _stable_mean(a: np.ndarray, axis: int = 0) -> np.ndarray:
    # shifting by the first entry makes the mean of identical values exact
    first = np.take(a, [0], axis=axis)
    return np.squeeze(first, axis=axis) + np.mean(a - first, axis=axis)


def _best_split(Xn: np.ndarray, yn: np.ndarray, feats: np.ndarray, min_leaf: int):
    """Lowest pooled SSE split over ``feats``; returns (feature, threshold) or None."""
    n = len(yn)
    cols = Xn[:, feats]
    order = np.argsort(cols, axis=0, kind="stable")
    xs = np.take_along_axis(cols, order, axis=0)
    ys = yn[order] - yn.mean()
    csum = np.cumsum(ys, axis=0)[:-1]
    csq = np.cumsum(ys * ys, axis=0)[:-1]
    tot, tot_sq = ys.sum(axis=0), (ys * ys).sum(axis=0)
    n_left = np.arange(1, n)[:, None]
    n_right = n - n_left
    sse = (csq - csum ** 2 / n_left) + ((tot_sq - csq) - (tot - csum) ** 2 / n_right)
    valid = (xs[1:] > xs[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    # feature order first, then position: the first minimum wins
    flat = int(np.argmin(sse.T))
    j, pos = divmod(flat, n - 1)
    lo, hi = xs[pos, j], xs[pos + 1, j]
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return int(feats[j]), float(thr)


def _grow_tree(X, y, rng: np.random.Generator, min_leaf: int, max_features: int) -> Tree:
    dim = X.shape[1]
    feature, threshold, left, right, value, is_leaf = [], [], [], [], [], []

    def new_node():
        for lst, v in ((feature, 0), (threshold, 0.0), (left, 0), (right, 0), (value, 0.0), (is_leaf, True)):
            lst.append(v)
        return len(feature) - 1

    stack = [(new_node(), np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        yn = y[idx]
        value[node] = float(_stable_mean(yn))
        if len(idx) <= min_leaf or np.all(yn == yn[0]):
            continue
        perm = rng.permutation(dim)
        split = _best_split(X[idx], yn, perm[:max_features], 1)
        if split is None and max_features < dim:
            # keep drawing features when the sampled ones are constant on this node
            split = _best_split(X[idx], yn, perm[max_features:], 1)
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        is_leaf[node] = False
        feature[node], threshold[node] = f, thr
        left[node] = new_node()
        right[node] = new_node()
        # push right first so the left subtree is numbered first
        stack.append((right[node], idx[~mask]))
        stack.append((left[node], idx[mask]))
    return Tree(np.array(feature, np.int64), np.array(threshold), np.array(left, np.int64),
                np.array(right, np.int64), np.array(value), np.array(is_leaf, bool))


def train_forest(X, y, n_trees: int = N_TREES, seed: int = 42, min_leaf: int = MIN_LEAF,
                 max_features: int = MAX_FEATURES, bootstrap: bool = True,
                 threads: int | None = 1) -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or len(X) < 2:
        raise EmptyTrainingSet(f"need at least 2 training rows, got {len(X) if X.ndim == 2 else 0}")
    if len(y) != len(X):
        raise DimensionMismatch(f"{len(X)} feature rows but {len(y)} targets")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training data contains NaN or infinite values")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    max_features = max(1, min(max_features, X.shape[1]))
    children = np.random.SeedSequence(seed).spawn(n_trees)

    def one_tree(ss):
        rng = np.random.default_rng(ss)
        rows = rng.integers(0, len(y), size=len(y)) if bootstrap else np.arange(len(y))
        return _grow_tree(X[rows], y[rows], rng, min_leaf, max_features)

    trees = parallel_map(one_tree, children, threads)
    return ForestModel(trees, X.shape[1], seed, min_leaf, max_features, bootstrap)


def _vector(v) -> np.ndarray:
    return v.vector if isinstance(v, AestheticVector) else np.asarray(v, dtype=np.float64)


def predict(model: ForestModel, vector) -> float:
    x = _vector(vector)
    if x.shape != (model.feature_dim,):
        raise DimensionMismatch(f"model expects {model.feature_dim} features, got shape {x.shape}")
    return float(model.predict_many(x[None, :])[0])


def save_model(model: ForestModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, model.n_trees, model.feature_dim, model.seed))
        for t in model.trees:
            fh.write(_COUNT.pack(t.n_nodes))
            for i in range(t.n_nodes):
                fh.write(_NODE.pack(int(t.feature[i]), float(t.threshold[i]), int(t.left[i]),
                                    int(t.right[i]), float(t.value[i]), int(t.is_leaf[i])))


def load_model(path) -> ForestModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size or data[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a THFOR01 model file")
    _, version, n_trees, dim, seed = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    off = _HEADER.size
    trees = []
    for t in range(n_trees):
        if off + _COUNT.size > len(data):
            raise CorruptNode(f"{path}: truncated before tree {t}")
        (n_nodes,) = _COUNT.unpack_from(data, off)
        off += _COUNT.size
        if n_nodes == 0 or off + n_nodes * _NODE.size > len(data):
            raise CorruptNode(f"{path}: tree {t} has a truncated or empty node table")
        rows = list(_NODE.iter_unpack(data[off:off + n_nodes * _NODE.size]))
        off += n_nodes * _NODE.size
        f, thr, lo, hi, val, leaf = (np.array(c) for c in zip(*rows))
        for i in range(n_nodes):
            if leaf[i] not in (0, 1):
                raise CorruptNode(f"{path}: tree {t} node {i} has leaf flag {leaf[i]}")
            if leaf[i]:
                if not np.isfinite(val[i]):
                    raise CorruptNode(f"{path}: tree {t} leaf {i} is not finite")
            elif not (i < lo[i] < n_nodes and i < hi[i] < n_nodes) or f[i] >= dim:
                raise CorruptNode(f"{path}: tree {t} node {i} points outside the tree")
        trees.append(Tree(f.astype(np.int64), thr.astype(np.float64), lo.astype(np.int64),
                          hi.astype(np.int64), val.astype(np.float64), leaf.astype(bool)))
    if off != len(data):
        raise CorruptNode(f"{path}: {len(data) - off} trailing bytes")
    return ForestModel(trees, dim, seed)


def load_training_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """52 feature columns plus a ``score`` column; the header row is required."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyTrainingSet(f"{path}: empty file")
        header = [h.strip() for h in header]
        if "score" not in header:
            raise ValueError(f"{path}: missing 'score' column")
        target = header.index("score")
        if set(AESTHETIC_NAMES) <= set(header):
            cols = [header.index(n) for n in AESTHETIC_NAMES]
        else:
            cols = [i for i, h in enumerate(header) if i != target]
        if len(cols) != AESTHETIC_DIM:
            raise DimensionMismatch(f"{path}: expected {AESTHETIC_DIM} feature columns, got {len(cols)}")
        rows = [r for r in reader if r]
    if not rows:
        raise EmptyTrainingSet(f"{path}: no data rows")
    data = np.array([[float(r[i]) for i in cols + [target]] for r in rows])
    return data[:, :-1], data[:, -1]


def score_keyframes(keyframes, mode, model: ForestModel | None = None, stillness=None,
                    aesthetics=None) -> ScoreTable:
    """Score each keyframe index.

    ``stillness`` and ``aesthetics`` map frame index -> stillness score / AestheticVector.
    """
    mode = ScoreMode.parse(mode)
    table = ScoreTable(mode)
    if mode is ScoreMode.UNSUPERVISED:
        for i in keyframes:
            table.scores[int(i)] = float(stillness[i])
        return table
    if model is None:
        raise ModelMissing("supervised scoring needs a trained model (--model)")
    keyframes = [int(i) for i in keyframes]
    if keyframes:
        preds = model.predict_many(np.stack([_vector(aesthetics[i]) for i in keyframes]))
        table.scores.update(zip(keyframes, map(float, preds)))
    return table
