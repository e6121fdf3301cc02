"""
Categorical verification of the wake-up classifier.

``ess`` is the Gerrity equitable skill score: the joint distribution of a
confusion matrix (rows = predicted class, columns = observed class) dotted
with the Gerrity scoring matrix built from the observed-class marginals. It
equals the mean of the Peirce skill scores of the K - 1 two-class collapses.

Reference: expert-aggregation-layer.md §Evaluation
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray


class ScoringError(ValueError):
    """Empty inputs or degenerate marginals."""


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: NDArray[np.int64]

    def __post_init__(self) -> None:
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
            raise ScoringError(f"confusion matrix must be K x K with K >= 2, got {c.shape}")
        if np.any(c < 0):
            raise ScoringError("confusion counts must be non-negative")

    @classmethod
    def from_counts(cls, counts: ArrayLike) -> ConfusionMatrix:
        return cls(np.asarray(counts, dtype=np.int64))

    @classmethod
    def from_labels(cls, predicted: Sequence[int], observed: Sequence[int], k: int = 3) -> ConfusionMatrix:
        """Classes are 1-based."""
        counts = np.zeros((k, k), dtype=np.int64)
        for p, o in zip(predicted, observed, strict=True):
            counts[p - 1, o - 1] += 1
        return cls(counts)

    @property
    def k(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def joint(self) -> NDArray[np.float64]:
        if self.total == 0:
            raise ScoringError("empty confusion matrix")
        return self.counts / self.total

    def observed_marginals(self) -> NDArray[np.float64]:
        return self.joint().sum(axis=0)

    def restrict(self, classes: Sequence[int]) -> ConfusionMatrix:
        """Sub-matrix over the given 0-based class indices."""
        idx = np.asarray(classes, dtype=np.int64)
        return ConfusionMatrix(self.counts[np.ix_(idx, idx)])

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.counts + other.counts)


def gerrity_scoring_matrix(climatology: ArrayLike) -> NDArray[np.float64]:
    p = np.asarray(climatology, dtype=np.float64)
    k = p.size
    if k < 2:
        raise ScoringError("need at least two classes")
    if np.any(p <= 0):
        raise ScoringError("every class needs a positive climatological probability")
    cum = np.cumsum(p)[:-1]
    a = (1.0 - cum) / cum
    s = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            value = float(np.sum(1.0 / a[:i])) - (j - i) + float(np.sum(a[j:]))
            s[i, j] = s[j, i] = value / (k - 1)
    return s


def ess(matrix: ConfusionMatrix) -> float:
    joint = matrix.joint()
    return float(np.sum(joint * gerrity_scoring_matrix(joint.sum(axis=0))))


def peirce_skill_score(matrix: ConfusionMatrix, threshold: int) -> float:
    """PSS of the collapse "class <= threshold" versus "class > threshold"."""
    if not 1 <= threshold < matrix.k:
        raise ScoringError(f"threshold must be in 1..{matrix.k - 1}")
    joint = matrix.joint()
    r = threshold
    a = joint[:r, :r].sum()
    b = joint[:r, r:].sum()
    c = joint[r:, :r].sum()
    d = joint[r:, r:].sum()
    denominator = (a + c) * (b + d)
    if denominator == 0:
        raise ScoringError(f"degenerate observed marginal at threshold {threshold}")
    return float((a * d - b * c) / denominator)


def mean_peirce_skill_score(matrix: ConfusionMatrix) -> float:
    return float(np.mean([peirce_skill_score(matrix, r) for r in range(1, matrix.k)]))


def hit_rates(matrix: ConfusionMatrix, classes: Sequence[int] = (1, 3)) -> dict[int, float | None]:
    """Probability of detection of each class: n(predicted = observed = c) / n(observed = c)."""
    out: dict[int, float | None] = {}
    for c in classes:
        observed = int(matrix.counts[:, c - 1].sum())
        out[c] = matrix.counts[c - 1, c - 1] / observed if observed else None
    return out


def ess_present_classes(matrix: ConfusionMatrix) -> tuple[float, bool]:
    """
    ESS on the observed classes only.

    Returns the score and whether the matrix had to be collapsed. With fewer
    than two observed classes the score is 0.
    """
    present = np.flatnonzero(matrix.counts.sum(axis=0) > 0)
    if present.size == matrix.k:
        return ess(matrix), False
    if present.size < 2:
        return 0.0, True
    return ess(matrix.restrict(present.tolist())), True
