"""
Exact path-dependent TreeSHAP for the boosted forest, on class margins.

Node covers (sums of hessians) act as the background distribution: a feature
outside the coalition sends the path down both children in proportion to
their cover. Attributions of a class are summed over that class's trees, and
``base_value + sum(phi) == margin`` holds per class.

The dependence export pairs one feature's value with its attribution over a
run and fits an ordinary least-squares line to the scatter.

Reference: expert-aggregation-layer.md §Explanations
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from src.expert_aggregation.gbrt import N_CLASSES, BoostedForest, ForestError, RegressionTree
from src.models.ledger import RunLedger


@dataclass(frozen=True)
class ShapAttribution:
    base_values: NDArray[np.float64]
    """Expected margin per class."""

    phi: NDArray[np.float64]
    """Shape (classes, features)."""

    prediction_margins: NDArray[np.float64]

    def local_accuracy_gap(self) -> float:
        return float(np.max(np.abs(self.base_values + self.phi.sum(axis=1) - self.prediction_margins)))


# ---------------------------------------------------------------------------
# Path bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class _Path:
    feature: list[int] = field(default_factory=list)
    zero: list[float] = field(default_factory=list)
    one: list[float] = field(default_factory=list)
    weight: list[float] = field(default_factory=list)

    def copy(self) -> _Path:
        return _Path(self.feature[:], self.zero[:], self.one[:], self.weight[:])

    def extend(self, zero_fraction: float, one_fraction: float, feature: int) -> None:
        depth = len(self.feature)
        self.feature.append(feature)
        self.zero.append(zero_fraction)
        self.one.append(one_fraction)
        self.weight.append(1.0 if depth == 0 else 0.0)
        w = self.weight
        for i in range(depth - 1, -1, -1):
            w[i + 1] += one_fraction * w[i] * (i + 1) / (depth + 1)
            w[i] = zero_fraction * w[i] * (depth - i) / (depth + 1)

    def unwind(self, index: int) -> None:
        depth = len(self.feature) - 1
        one_fraction = self.one[index]
        zero_fraction = self.zero[index]
        w = self.weight
        next_one = w[depth]
        for i in range(depth - 1, -1, -1):
            if one_fraction != 0:
                tmp = w[i]
                w[i] = next_one * (depth + 1) / ((i + 1) * one_fraction)
                next_one = tmp - w[i] * zero_fraction * (depth - i) / (depth + 1)
            else:
                w[i] = w[i] * (depth + 1) / (zero_fraction * (depth - i))
        del self.feature[index], self.zero[index], self.one[index]
        del w[depth]

    def unwound_sum(self, index: int) -> float:
        depth = len(self.feature) - 1
        one_fraction = self.one[index]
        zero_fraction = self.zero[index]
        w = self.weight
        next_one = w[depth]
        total = 0.0
        for i in range(depth - 1, -1, -1):
            if one_fraction != 0:
                tmp = next_one * (depth + 1) / ((i + 1) * one_fraction)
                total += tmp
                next_one = w[i] - tmp * zero_fraction * ((depth - i) / (depth + 1))
            else:
                total += (w[i] / zero_fraction) / ((depth - i) / (depth + 1))
        return total


def _recurse(
    tree: RegressionTree,
    cover: NDArray[np.float64],
    x: NDArray[np.float64],
    phi: NDArray[np.float64],
    node: int,
    parent: _Path,
    zero_fraction: float,
    one_fraction: float,
    feature: int,
) -> None:
    path = parent.copy()
    path.extend(zero_fraction, one_fraction, feature)

    if tree.is_leaf(node):
        leaf_value = float(tree.value[node])
        for i in range(1, len(path.feature)):
            w = path.unwound_sum(i)
            phi[path.feature[i]] += w * (path.one[i] - path.zero[i]) * leaf_value
        return

    split = int(tree.feature[node])
    left, right = int(tree.children_left[node]), int(tree.children_right[node])
    hot, cold = (left, right) if x[split] < tree.threshold[node] else (right, left)

    incoming_zero, incoming_one = 1.0, 1.0
    for k in range(1, len(path.feature)):
        if path.feature[k] == split:
            incoming_zero, incoming_one = path.zero[k], path.one[k]
            path.unwind(k)
            break

    _recurse(tree, cover, x, phi, hot, path,
             incoming_zero * cover[hot] / cover[node], incoming_one, split)
    _recurse(tree, cover, x, phi, cold, path,
             incoming_zero * cover[cold] / cover[node], 0.0, split)


def expected_value(tree: RegressionTree) -> float:
    """Cover-weighted mean leaf value, with the fractions used by the path algorithm."""
    cover = _require_cover(tree)

    def _expect(node: int) -> float:
        if tree.is_leaf(node):
            return float(tree.value[node])
        left, right = int(tree.children_left[node]), int(tree.children_right[node])
        return (cover[left] / cover[node]) * _expect(left) + (cover[right] / cover[node]) * _expect(right)

    return _expect(0)


def _require_cover(tree: RegressionTree) -> NDArray[np.float64]:
    if tree.cover is None:
        raise ForestError("tree has no cover metadata; attributions need node covers")
    if np.any(tree.cover <= 0):
        raise ForestError("tree covers must be positive")
    return tree.cover


def tree_shap_single(tree: RegressionTree, x: NDArray[np.float64], n_features: int) -> NDArray[np.float64]:
    """Attributions of one tree's output for input *x*."""
    cover = _require_cover(tree)
    phi = np.zeros(n_features)
    if not tree.is_leaf(0):
        _recurse(tree, cover, x, phi, 0, _Path(), 1.0, 1.0, -1)
    return phi


def tree_shap(forest: BoostedForest, features: ArrayLike) -> ShapAttribution:
    x = np.asarray(features, dtype=np.float64)
    if x.size != forest.n_features:
        raise ForestError(f"{x.size} features for a forest trained on {forest.n_features}")
    base = np.zeros(N_CLASSES)
    phi = np.zeros((N_CLASSES, forest.n_features))
    margins = np.zeros(N_CLASSES)
    for round_trees in forest.trees:
        for k, tree in enumerate(round_trees):
            base[k] += expected_value(tree)
            phi[k] += tree_shap_single(tree, x, forest.n_features)
            margins[k] += tree.predict(x)
    return ShapAttribution(base, phi, margins)


# ---------------------------------------------------------------------------
# Dependence export
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DependenceFit:
    slope: float
    intercept: float
    r_squared: float
    f_statistic: float
    p_value: float
    n_points: int


@dataclass(frozen=True)
class DependenceExport:
    feature_name: str
    points: list[tuple[float, float, int]]
    """(feature_value, phi_value, predicted_class) of every attributed round."""

    fit: DependenceFit | None


def ols_fit(x: ArrayLike, y: ArrayLike) -> DependenceFit | None:
    """
    Least-squares line ``y = intercept + slope * x`` with its F-test.

    Returns ``None`` below 3 points or when *x* is constant. A constant *y*
    gives slope 0 and R² = 0.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    n = xa.size
    if n < 3 or float(np.ptp(xa)) == 0.0:
        return None
    if float(np.ptp(ya)) == 0.0:
        return DependenceFit(0.0, float(ya.mean()), 0.0, 0.0, 1.0, n)
    line = stats.linregress(xa, ya)
    r2 = float(line.rvalue) ** 2
    dof = n - 2
    if 1.0 - r2 <= 1e-12:
        f_stat, p_value = math.inf, 0.0
    else:
        f_stat = r2 / (1.0 - r2) * dof
        p_value = float(stats.f.sf(f_stat, 1, dof))
    return DependenceFit(float(line.slope), float(line.intercept), r2, f_stat, p_value, n)


def shap_dependence_export(ledger: RunLedger, feature_name: str) -> DependenceExport:
    """Scatter of a feature against its attribution for the predicted class."""
    if feature_name not in ledger.feature_names:
        raise KeyError(f"unknown feature {feature_name!r}")
    j = ledger.feature_names.index(feature_name)
    points = []
    for row in ledger.rows:
        if row.shap is None or row.features is None:
            continue
        k = row.predicted_class - 1
        points.append((float(row.features[j]), float(row.shap.phi[k][j]), row.predicted_class))
    fit = ols_fit([p[0] for p in points], [p[1] for p in points])
    return DependenceExport(feature_name, points, fit)
