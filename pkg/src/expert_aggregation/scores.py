"""
Continuous scores of aggregated forecasts and per-stream score reports.

Reference: expert-aggregation-layer.md §Evaluation
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.expert_aggregation.skill_scores import (
    ConfusionMatrix,
    ScoringError,
    ess_present_classes,
    hit_rates,
    peirce_skill_score,
)


def _errors(errors: ArrayLike) -> NDArray[np.float64]:
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if e.size == 0:
        raise ScoringError("no errors to score")
    return e


def rmse(errors: ArrayLike) -> float:
    e = _errors(errors)
    return float(np.sqrt(np.mean(e * e)))


def quantile_abs_error(errors: ArrayLike, q: float = 0.95) -> float:
    """Quantile of |e| with linear interpolation between order statistics."""
    if not 0.0 <= q <= 1.0:
        raise ScoringError(f"quantile level must be in [0, 1], got {q}")
    return float(np.quantile(np.abs(_errors(errors)), q, method="linear"))


@dataclass(frozen=True)
class ScoreReport:
    rmse: float
    q95_abs_error: float
    n: int
    ess: float | None = None
    ess_collapsed: bool = False
    pss_per_threshold: tuple[float | None, ...] = ()
    hit_rates: dict[int, float | None] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rmse": self.rmse,
            "q95_abs_error": self.q95_abs_error,
            "n": self.n,
            "ess": self.ess,
            "ess_collapsed": self.ess_collapsed,
            "pss_per_threshold": list(self.pss_per_threshold),
            "hit_rates": {str(k): v for k, v in self.hit_rates.items()},
        }


def classifier_scores(
    matrix: ConfusionMatrix,
) -> tuple[float | None, bool, tuple[float | None, ...], dict[int, float | None]]:
    """ESS, collapse flag, PSS per threshold and hit rates; undefined parts are None."""
    if matrix.total == 0:
        return None, False, (), {}
    score, collapsed = ess_present_classes(matrix)
    pss: list[float | None] = []
    for r in range(1, matrix.k):
        try:
            pss.append(peirce_skill_score(matrix, r))
        except ScoringError:
            pss.append(None)
    return score, collapsed, tuple(pss), hit_rates(matrix)


def score_report(errors: ArrayLike, matrix: ConfusionMatrix | None = None) -> ScoreReport:
    e = _errors(errors)
    if matrix is None:
        return ScoreReport(rmse(e), quantile_abs_error(e), int(e.size))
    score, collapsed, pss, hits = classifier_scores(matrix)
    return ScoreReport(rmse(e), quantile_abs_error(e), int(e.size), score, collapsed, pss, hits)
