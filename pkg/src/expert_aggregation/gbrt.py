"""
Three-class gradient-boosted regression trees.

Softmax objective with base score 0: every boosting round fits one regression
tree per class on that class's gradient/hessian statistics

    g = (p_k - 1[y = k]) * w,   h = max(2 p_k (1 - p_k), 1e-16) * w

with exact greedy splits over a seeded per-node column sample, the usual
second-order gain

    gain = 1/2 [G_L^2/(H_L + lambda) + G_R^2/(H_R + lambda) - G^2/(H + lambda)]

and leaf values ``-G / (H + lambda) * learning_rate``. A split is kept only if
both children carry a hessian cover of at least ``min_child_weight``. Rows go
left when ``x < threshold``.

Identical training rows are merged first (weights summed, lexicographic row
order), so oversampling by weight and physical duplication train the very
same forest.

Reference: expert-aggregation-layer.md §Boosted forest
"""
from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax

from src.config import ForestParams
from src.models.awake import CLASSES
from src.observability.logging import get_logger
from src.observability.metrics import record_degenerate

logger = get_logger(__name__)

FOREST_FORMAT_VERSION = 1
N_CLASSES = len(CLASSES)
_MIN_HESSIAN = 1e-16
_MIN_SPLIT_GAIN = 1e-10
_LEAF = -1


class ForestError(ValueError):
    """Malformed forest: missing cover metadata or unsupported serialization."""


@dataclass(frozen=True)
class TrainingSample:
    features: tuple[float, ...]
    label: int
    replication: int = 1


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@dataclass
class RegressionTree:
    """Array-encoded binary tree; ``children_left[i] == -1`` marks a leaf."""

    children_left: NDArray[np.int64]
    children_right: NDArray[np.int64]
    feature: NDArray[np.int64]
    threshold: NDArray[np.float64]
    value: NDArray[np.float64]
    cover: NDArray[np.float64] | None

    @property
    def n_nodes(self) -> int:
        return int(self.value.size)

    def is_leaf(self, node: int) -> bool:
        return bool(self.children_left[node] == _LEAF)

    def leaf_for(self, x: NDArray[np.float64]) -> int:
        node = 0
        while not self.is_leaf(node):
            if x[self.feature[node]] < self.threshold[node]:
                node = int(self.children_left[node])
            else:
                node = int(self.children_right[node])
        return node

    def predict(self, x: NDArray[np.float64]) -> float:
        return float(self.value[self.leaf_for(x)])

    def apply(self, X: NDArray[np.float64]) -> NDArray[np.int64]:
        """Leaf index of every row of *X*."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            rows = np.flatnonzero(self.children_left[node] != _LEAF)
            if rows.size == 0:
                return node
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] < self.threshold[cur]
            node[rows] = np.where(go_left, self.children_left[cur], self.children_right[cur])

    def depth(self) -> int:
        def _depth(node: int) -> int:
            if self.is_leaf(node):
                return 0
            return 1 + max(
                _depth(int(self.children_left[node])), _depth(int(self.children_right[node]))
            )

        return _depth(0)

    def leaves(self) -> list[int]:
        return [i for i in range(self.n_nodes) if self.is_leaf(i)]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "children_left": self.children_left.tolist(),
            "children_right": self.children_right.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "value": self.value.tolist(),
        }
        if self.cover is not None:
            out["cover"] = self.cover.tolist()
        return out

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> RegressionTree:
        try:
            return cls(
                children_left=np.asarray(raw["children_left"], dtype=np.int64),
                children_right=np.asarray(raw["children_right"], dtype=np.int64),
                feature=np.asarray(raw["feature"], dtype=np.int64),
                threshold=np.asarray(raw["threshold"], dtype=np.float64),
                value=np.asarray(raw["value"], dtype=np.float64),
                cover=np.asarray(raw["cover"], dtype=np.float64) if "cover" in raw else None,
            )
        except KeyError as exc:
            raise ForestError(f"tree is missing field {exc}") from exc


@dataclass
class BoostedForest:
    """``trees[r][k]`` is the tree of boosting round *r* for class ``k + 1``."""

    trees: list[list[RegressionTree]]
    params: ForestParams
    seed: int
    n_features: int
    feature_names: tuple[str, ...] = ()
    constant_class: int | None = None
    n_training_rows: int = 0

    def trees_for_class(self, k: int) -> list[RegressionTree]:
        return [round_trees[k] for round_trees in self.trees]

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": FOREST_FORMAT_VERSION,
            "params": asdict(self.params),
            "seed": self.seed,
            "n_features": self.n_features,
            "n_classes": N_CLASSES,
            "feature_names": list(self.feature_names),
            "constant_class": self.constant_class,
            "n_training_rows": self.n_training_rows,
            "trees": [[t.to_dict() for t in round_trees] for round_trees in self.trees],
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> BoostedForest:
        version = raw.get("format_version")
        if version != FOREST_FORMAT_VERSION:
            raise ForestError(f"unsupported forest format_version {version!r}")
        return cls(
            trees=[[RegressionTree.from_dict(t) for t in rt] for rt in raw["trees"]],
            params=ForestParams(**raw["params"]),
            seed=int(raw["seed"]),
            n_features=int(raw["n_features"]),
            feature_names=tuple(raw.get("feature_names", ())),
            constant_class=raw.get("constant_class"),
            n_training_rows=int(raw.get("n_training_rows", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> BoostedForest:
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def canonicalize_rows(
    X: NDArray[np.float64], y: NDArray[np.int64], w: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.int64], NDArray[np.float64]]:
    """Merge identical (features, label) rows, summing their weights."""
    stacked = np.column_stack([X, y.astype(np.float64)])
    unique, inverse = np.unique(stacked, axis=0, return_inverse=True)
    weights = np.bincount(inverse.reshape(-1), weights=w, minlength=unique.shape[0])
    return unique[:, :-1], unique[:, -1].astype(np.int64), weights


@dataclass
class _TreeBuilder:
    X: NDArray[np.float64]
    g: NDArray[np.float64]
    h: NDArray[np.float64]
    params: ForestParams
    max_depth: int
    rng: np.random.Generator
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    cover: list[float] = field(default_factory=list)

    def build(self) -> RegressionTree:
        idx = np.arange(self.X.shape[0])
        self._grow(idx, 0, float(self.h.sum()))
        return RegressionTree(
            children_left=np.asarray(self.left, dtype=np.int64),
            children_right=np.asarray(self.right, dtype=np.int64),
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            value=np.asarray(self.value, dtype=np.float64),
            cover=np.asarray(self.cover, dtype=np.float64),
        )

    def _grow(self, idx: NDArray[np.int64], depth: int, cover: float) -> int:
        node = len(self.value)
        grad = float(self.g[idx].sum())
        lam = self.params.reg_lambda
        self.left.append(_LEAF)
        self.right.append(_LEAF)
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.value.append(-grad / (cover + lam) * self.params.learning_rate)
        self.cover.append(cover)

        if depth >= self.max_depth or idx.size < 2:
            return node
        split = self._best_split(idx, grad, cover)
        if split is None:
            return node
        f, thr, cover_left, cover_right = split
        go_left = self.X[idx, f] < thr
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._grow(idx[go_left], depth + 1, cover_left)
        self.right[node] = self._grow(idx[~go_left], depth + 1, cover_right)
        return node

    def _sample_features(self) -> NDArray[np.int64]:
        m = self.X.shape[1]
        k = max(1, min(m, math.ceil(self.params.colsample_per_node * m - 1e-9)))
        return np.sort(self.rng.choice(m, size=k, replace=False))

    def _best_split(
        self, idx: NDArray[np.int64], grad: float, hess: float
    ) -> tuple[int, float, float, float] | None:
        lam = self.params.reg_lambda
        mcw = self.params.min_child_weight
        parent = grad * grad / (hess + lam)
        best_gain = _MIN_SPLIT_GAIN
        best: tuple[int, float, float, float] | None = None
        g_node = self.g[idx]
        h_node = self.h[idx]
        for f in self._sample_features():
            xf = self.X[idx, f]
            order = np.argsort(xf, kind="stable")
            xs = xf[order]
            g_left = np.cumsum(g_node[order])[:-1]
            h_left = np.cumsum(h_node[order])[:-1]
            g_right = grad - g_left
            h_right = hess - h_left
            valid = (xs[:-1] < xs[1:]) & (h_left >= mcw) & (h_right >= mcw)
            if not valid.any():
                continue
            gain = 0.5 * (
                g_left**2 / (h_left + lam) + g_right**2 / (h_right + lam) - parent
            )
            gain = np.where(valid, gain, -np.inf)
            j = int(np.argmax(gain))
            if gain[j] > best_gain:
                best_gain = float(gain[j])
                lo, hi = float(xs[j]), float(xs[j + 1])
                thr = lo + (hi - lo) / 2.0
                if not lo < thr <= hi:
                    thr = hi
                best = (int(f), thr, float(h_left[j]), float(h_right[j]))
        return best


def train_forest_arrays(
    X: ArrayLike,
    y: ArrayLike,
    weights: ArrayLike | None = None,
    params: ForestParams | None = None,
    seed: int = 0,
    feature_names: Sequence[str] = (),
) -> BoostedForest:
    """Fit the forest on a feature matrix, labels in {1, 2, 3} and row weights."""
    params = params or ForestParams()
    X_arr = np.asarray(X, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.int64)
    w_arr = np.ones(y_arr.size) if weights is None else np.asarray(weights, dtype=np.float64)
    if X_arr.ndim != 2 or X_arr.shape[0] != y_arr.size or w_arr.size != y_arr.size:
        raise ForestError("features, labels and weights must have matching rows")
    if y_arr.size == 0:
        raise ForestError("cannot train on an empty set")
    if not np.isin(y_arr, CLASSES).all():
        raise ForestError(f"labels must be in {CLASSES}")

    X_arr, y_arr, w_arr = canonicalize_rows(X_arr, y_arr, w_arr)
    present = np.unique(y_arr)
    constant_class = int(present[0]) if present.size == 1 else None
    max_depth = params.max_depth
    if constant_class is not None:
        logger.warning("single_class_training", label=constant_class, n_rows=int(y_arr.size))
        record_degenerate("single_class_training")
        max_depth = 0

    rng = np.random.default_rng(seed)
    margins = np.zeros((y_arr.size, N_CLASSES))
    trees: list[list[RegressionTree]] = []
    for _ in range(params.n_rounds):
        p = softmax(margins, axis=1)
        round_trees = []
        for k in range(N_CLASSES):
            target = (y_arr == k + 1).astype(np.float64)
            pk = p[:, k]
            g = (pk - target) * w_arr
            h = np.maximum(2.0 * pk * (1.0 - pk), _MIN_HESSIAN) * w_arr
            round_trees.append(_TreeBuilder(X_arr, g, h, params, max_depth, rng).build())
        for k, tree in enumerate(round_trees):
            margins[:, k] += tree.value[tree.apply(X_arr)]
        trees.append(round_trees)

    return BoostedForest(
        trees=trees,
        params=params,
        seed=seed,
        n_features=X_arr.shape[1],
        feature_names=tuple(feature_names),
        constant_class=constant_class,
        n_training_rows=int(y_arr.size),
    )


def train_forest(
    samples: Sequence[TrainingSample],
    params: ForestParams | None = None,
    seed: int = 0,
    feature_names: Sequence[str] = (),
) -> BoostedForest:
    """Fit the forest with each sample weighted by its replication."""
    if not samples:
        raise ForestError("cannot train on an empty set")
    X = np.array([s.features for s in samples], dtype=np.float64)
    y = np.array([s.label for s in samples], dtype=np.int64)
    w = np.array([s.replication for s in samples], dtype=np.float64)
    return train_forest_arrays(X, y, w, params, seed, feature_names)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict_margins(forest: BoostedForest, features: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(features, dtype=np.float64)
    if x.size != forest.n_features:
        raise ForestError(f"{x.size} features for a forest trained on {forest.n_features}")
    margins = np.zeros(N_CLASSES)
    for round_trees in forest.trees:
        for k, tree in enumerate(round_trees):
            margins[k] += tree.predict(x)
    return margins


def predict_class(forest: BoostedForest, features: ArrayLike) -> tuple[int, NDArray[np.float64]]:
    """Argmax class of the summed margins; any tie resolves to class 2."""
    margins = predict_margins(forest, features)
    winners = np.flatnonzero(margins == margins.max())
    if winners.size > 1:
        return 2, margins
    return int(winners[0]) + 1, margins


def forest_violations(forest: BoostedForest) -> list[str]:
    """Structural audit: depth limit and cover of leaves created by a split."""
    problems = []
    for r, round_trees in enumerate(forest.trees):
        for k, tree in enumerate(round_trees):
            if tree.depth() > forest.params.max_depth:
                problems.append(f"round {r} class {k + 1}: depth {tree.depth()}")
            if tree.cover is None or tree.n_nodes == 1:
                continue
            for leaf in tree.leaves():
                if tree.cover[leaf] < forest.params.min_child_weight:
                    problems.append(
                        f"round {r} class {k + 1} leaf {leaf}: cover {tree.cover[leaf]}"
                    )
    return problems
