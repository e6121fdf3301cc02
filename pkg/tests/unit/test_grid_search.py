"""
Unit tests for the cross-validated forest grid search.

Reference: expert-aggregation-layer.md §Grid search
"""
import csv

import numpy as np
import pytest

from src.config import ConfigError, ForestParams
from src.expert_aggregation.gbrt import TrainingSample
from src.expert_aggregation.grid_search import (
    FULL_GRID,
    contiguous_folds,
    cross_validate,
    expand_grid,
    grid_search,
    grid_size,
)


def _shuffled_clusters(seed=0, per_class=100):
    rng = np.random.default_rng(seed)
    samples = [
        TrainingSample((float(rng.normal(center, 0.5)), float(rng.normal())), label)
        for label, center in ((1, -4.0), (2, 0.0), (3, 4.0))
        for _ in range(per_class)
    ]
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]


class TestGridExpansion:

    def test_full_grid_size(self):
        assert grid_size(FULL_GRID) == 18522

    def test_last_key_varies_fastest(self):
        combos = expand_grid({"max_depth": (2, 3), "n_rounds": (1, 2)})
        assert [(p.n_rounds, p.max_depth) for p in combos] == [(1, 2), (1, 3), (2, 2), (2, 3)]
        assert all(isinstance(p.max_depth, int) for p in combos)

    def test_base_params_fill_missing_keys(self):
        base = ForestParams(reg_lambda=3.0, min_child_weight=7.0)
        combos = expand_grid({"learning_rate": (0.5,)}, base)
        assert combos == [ForestParams(reg_lambda=3.0, min_child_weight=7.0, learning_rate=0.5)]

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            expand_grid({"depth": (1,)})

    def test_invalid_value(self):
        with pytest.raises(ConfigError):
            expand_grid({"colsample_per_node": (0.0,)})


class TestFolds:

    def test_even_blocks(self):
        assert contiguous_folds(10, 5) == [(0, 2), (2, 4), (4, 6), (6, 8), (8, 10)]

    def test_more_folds_than_rows(self):
        assert contiguous_folds(3, 5) == [(0, 1), (1, 2), (2, 3)]

    def test_blocks_cover_range(self):
        blocks = contiguous_folds(97, 5)
        assert blocks[0][0] == 0 and blocks[-1][1] == 97
        assert all(a[1] == b[0] for a, b in zip(blocks, blocks[1:]))


class TestCrossValidate:

    def test_separable_samples_score_high(self):
        samples = _shuffled_clusters()
        row = cross_validate([samples], ForestParams(min_child_weight=2.0), folds=5)
        assert row.ess > 0.9
        assert not row.collapsed
        assert row.n_predictions == len(samples)

    def test_pools_over_streams(self):
        row = cross_validate(
            [_shuffled_clusters(1, 30), _shuffled_clusters(2, 20)], ForestParams(min_child_weight=2.0)
        )
        assert row.n_predictions == 150

    def test_no_samples(self):
        row = cross_validate([], ForestParams())
        assert (row.ess, row.collapsed, row.n_predictions) == (0.0, True, 0)


class TestGridSearch:

    def test_small_grid(self, random_stream, fast_config, tmp_path):
        grid = {"n_rounds": (1, 2), "max_depth": (2,)}
        result = grid_search([random_stream], grid, folds=3, config=fast_config, n_jobs=1)
        assert [r.params.n_rounds for r in result.rows] == [1, 2]
        assert result.best_ess == max(r.ess for r in result.rows)
        first_best = next(r for r in result.rows if r.ess == result.best_ess)
        assert result.best == first_best.params

        out = tmp_path / "grid.csv"
        result.write_csv(out)
        with out.open(encoding="utf-8") as fh:
            lines = list(csv.reader(fh))
        assert lines[0][:2] == ["n_rounds", "max_depth"]
        assert len(lines) == 3

    def test_rejects_bad_arguments(self, random_stream, fast_config):
        with pytest.raises(ValueError):
            grid_search([random_stream], {"n_rounds": (1,)}, folds=1, config=fast_config)
        with pytest.raises(ValueError):
            grid_search([], {"n_rounds": (1,)}, config=fast_config)
