"""
Hyperparameter grid search for the wake-up forest.

Every combination is scored by k-fold cross-validation on contiguous time
blocks of each stream's training samples. Confusion counts are pooled over
all folds and streams before the equitable skill score is computed. A pooled
matrix in which some observed class never occurs is scored on the classes
that do occur, and flagged.

Reference: expert-aggregation-layer.md §Grid search
"""
from __future__ import annotations

import csv
import itertools
import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from src.config import ForestParams, RunConfig
from src.expert_aggregation.features import feature_names
from src.expert_aggregation.gbrt import TrainingSample, predict_class, train_forest
from src.expert_aggregation.ingest import build_run_contexts
from src.expert_aggregation.pipeline import training_samples
from src.expert_aggregation.skill_scores import ConfusionMatrix, ess_present_classes
from src.models.forecast import ForecastStream, StreamKey
from src.observability.logging import get_logger
from src.observability.metrics import timer

logger = get_logger(__name__)

GRID_KEYS: tuple[str, ...] = (
    "n_rounds",
    "max_depth",
    "learning_rate",
    "min_child_weight",
    "colsample_per_node",
)

# 7 * 7 * 9 * 7 * 6 = 18522 combinations
FULL_GRID: dict[str, tuple[float, ...]] = {
    "n_rounds": (1, 2, 3, 4, 5, 6, 7),
    "max_depth": (4, 5, 6, 7, 8, 9, 10),
    "learning_rate": (0.2, 0.3, 0.5, 0.7, 0.9, 0.95, 0.98, 0.99, 1.0),
    "min_child_weight": (5, 10, 15, 20, 25, 30, 35),
    "colsample_per_node": (0.65, 0.7, 0.75, 0.8, 0.85, 0.9),
}


@dataclass(frozen=True)
class GridRow:
    params: ForestParams
    ess: float
    collapsed: bool
    """Pooled matrix was scored on a subset of classes."""

    folds_missing_class: int
    n_predictions: int


@dataclass(frozen=True)
class GridSearchResult:
    best: ForestParams
    best_ess: float
    rows: tuple[GridRow, ...]
    """In grid order."""

    def ranked(self) -> list[GridRow]:
        """Rows by ESS descending; the sort is stable so ties keep grid order."""
        return sorted(self.rows, key=lambda r: -r.ess)

    def write_csv(self, path: str | Path) -> None:
        out = Path(path)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([*GRID_KEYS, "ess", "collapsed", "folds_missing_class", "n_predictions"])
            for row in self.ranked():
                p = asdict(row.params)
                writer.writerow(
                    [
                        *(p[k] for k in GRID_KEYS),
                        repr(row.ess),
                        int(row.collapsed),
                        row.folds_missing_class,
                        row.n_predictions,
                    ]
                )


def grid_size(grid: Mapping[str, Sequence[Any]]) -> int:
    return math.prod(len(v) for v in grid.values())


def expand_grid(grid: Mapping[str, Sequence[Any]], base: ForestParams | None = None) -> list[ForestParams]:
    """Cartesian product in lexicographic grid order (last key varies fastest)."""
    base = base or ForestParams()
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    keys = [k for k in GRID_KEYS if k in grid]
    combos = []
    for values in itertools.product(*(grid[k] for k in keys)):
        raw = asdict(base)
        for k, v in zip(keys, values, strict=True):
            raw[k] = int(v) if k in ("n_rounds", "max_depth") else float(v)
        params = ForestParams(**raw)
        params.validate()
        combos.append(params)
    return combos


def contiguous_folds(n: int, folds: int) -> list[tuple[int, int]]:
    """Half-open ``[start, stop)`` blocks covering ``range(n)``; empty blocks dropped."""
    bounds = np.linspace(0, n, folds + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in itertools.pairwise(bounds) if b > a]


def cross_validate(
    per_stream: Sequence[Sequence[TrainingSample]],
    params: ForestParams,
    folds: int = 5,
    seed: int = 0,
) -> GridRow:
    """Pooled k-fold score of one combination."""
    pooled = np.zeros((3, 3), dtype=np.int64)
    missing = 0
    for samples in per_stream:
        for start, stop in contiguous_folds(len(samples), folds):
            train = [*samples[:start], *samples[stop:]]
            test = samples[start:stop]
            if not train:
                continue
            forest = train_forest(train, params, seed)
            predicted = [predict_class(forest, s.features)[0] for s in test]
            fold = ConfusionMatrix.from_labels(predicted, [s.label for s in test])
            if np.any(fold.counts.sum(axis=0) == 0):
                missing += 1
            pooled += fold.counts
    matrix = ConfusionMatrix(pooled)
    if matrix.total == 0:
        return GridRow(params, 0.0, True, missing, 0)
    score, collapsed = ess_present_classes(matrix)
    return GridRow(params, score, collapsed, missing, matrix.total)


def _score_one(args: tuple[Sequence[Sequence[TrainingSample]], ForestParams, int, int]) -> GridRow:
    per_stream, params, folds, seed = args
    return cross_validate(per_stream, params, folds, seed)


def grid_search(
    training_streams: Mapping[StreamKey, ForecastStream] | Iterable[ForecastStream],
    grid: Mapping[str, Sequence[Any]] | None = None,
    folds: int = 5,
    config: RunConfig | None = None,
    n_jobs: int | None = None,
) -> GridSearchResult:
    """
    Cross-validated ESS of every grid combination, pooled over streams.

    Args:
        training_streams: Streams reserved for tuning.
        grid: Value lists per hyperparameter; defaults to :data:`FULL_GRID`.
        folds: Number of contiguous time blocks per stream.
        config: Supplies the label threshold, oversampling and seed.
        n_jobs: Worker processes; defaults to ``config.n_jobs``.

    Returns:
        The best combination (first in grid order on ties) and every row.
    """
    config = config or RunConfig()
    grid = grid if grid is not None else FULL_GRID
    if folds < 2:
        raise ValueError("folds must be >= 2")
    streams = (
        dict(training_streams)
        if isinstance(training_streams, Mapping)
        else {s.key: s for s in training_streams}
    )
    if not streams:
        raise ValueError("no training streams")
    combos = expand_grid(grid, config.forest)
    if not combos:
        raise ValueError("empty grid")

    contexts = build_run_contexts(streams)
    per_stream = [training_samples(config, streams[k], contexts) for k in sorted(streams)]
    logger.info(
        "grid_search_started",
        n_combinations=len(combos),
        n_streams=len(per_stream),
        folds=folds,
        features=len(feature_names(streams[min(streams)].roster)),
    )

    jobs = n_jobs if n_jobs is not None else config.n_jobs
    tasks = [(per_stream, params, folds, config.rng_seed) for params in combos]
    with timer("grid_search"):
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(_score_one, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
        else:
            rows = [_score_one(t) for t in tasks]

    best_row = rows[0]
    for row in rows[1:]:
        if row.ess > best_row.ess:
            best_row = row
    logger.info("grid_search_completed", best=asdict(best_row.params), best_ess=best_row.ess)
    return GridSearchResult(best=best_row.params, best_ess=best_row.ess, rows=tuple(rows))
