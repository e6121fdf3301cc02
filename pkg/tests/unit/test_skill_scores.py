"""
Unit tests for categorical verification of the wake-up classifier.

Reference: expert-aggregation-layer.md §Evaluation
"""
import numpy as np
import pytest

from src.expert_aggregation.scores import quantile_abs_error, rmse, score_report
from src.expert_aggregation.skill_scores import (
    ConfusionMatrix,
    ScoringError,
    ess,
    ess_present_classes,
    gerrity_scoring_matrix,
    hit_rates,
    mean_peirce_skill_score,
    peirce_skill_score,
)


# ===========================================================================
# Gerrity / Peirce
# ===========================================================================


class TestEquitableSkillScore:

    def test_equals_mean_peirce_score(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = int(rng.integers(2, 6))
            counts = rng.integers(0, 20, size=(k, k))
            counts[rng.integers(0, k, size=k), np.arange(k)] += 1
            matrix = ConfusionMatrix.from_counts(counts)
            assert ess(matrix) == pytest.approx(mean_peirce_skill_score(matrix), abs=1e-10)

    def test_perfect_forecast_scores_one(self):
        assert ess(ConfusionMatrix.from_counts(np.diag([5, 2, 9]))) == pytest.approx(1.0)

    def test_independent_forecast_scores_zero(self):
        counts = np.outer([2, 3, 5], [1, 4, 5])
        assert ess(ConfusionMatrix.from_counts(counts)) == pytest.approx(0.0, abs=1e-12)

    def test_constant_forecast_scores_zero(self):
        counts = np.array([[0, 0, 0], [7, 20, 3], [0, 0, 0]])
        assert ess(ConfusionMatrix.from_counts(counts)) == pytest.approx(0.0, abs=1e-12)

    def test_scoring_matrix_two_classes(self):
        assert gerrity_scoring_matrix([0.5, 0.5]).tolist() == [[1.0, -1.0], [-1.0, 1.0]]

    def test_scoring_matrix_is_equitable(self):
        p = np.array([0.2, 0.5, 0.3])
        s = gerrity_scoring_matrix(p)
        assert np.allclose(s, s.T)
        assert np.allclose(s @ p, 0.0)

    def test_peirce_two_by_two(self):
        matrix = ConfusionMatrix.from_counts([[2, 1], [0, 3]])
        assert peirce_skill_score(matrix, 1) == pytest.approx(0.75)

    def test_from_labels(self):
        matrix = ConfusionMatrix.from_labels([1, 2, 2, 3], [1, 3, 2, 3])
        assert matrix.counts.tolist() == [[1, 0, 0], [0, 1, 1], [0, 0, 1]]


class TestPresentClasses:

    def test_all_present_not_collapsed(self):
        matrix = ConfusionMatrix.from_counts(np.diag([1, 1, 1]))
        assert ess_present_classes(matrix) == (pytest.approx(1.0), False)

    def test_missing_class_collapses(self):
        matrix = ConfusionMatrix.from_counts([[0, 1, 0], [0, 2, 1], [0, 0, 3]])
        score, collapsed = ess_present_classes(matrix)
        assert collapsed
        assert score == pytest.approx(0.75)

    def test_single_observed_class(self):
        matrix = ConfusionMatrix.from_counts([[0, 4, 0], [0, 2, 0], [0, 1, 0]])
        assert ess_present_classes(matrix) == (0.0, True)


class TestHitRates:

    def test_unobserved_class_is_none(self):
        matrix = ConfusionMatrix.from_counts([[3, 1, 0], [1, 4, 0], [0, 0, 0]])
        assert hit_rates(matrix) == {1: 0.75, 3: None}


class TestScoringErrors:

    @pytest.mark.parametrize("counts", [[[1]], [[1, 2, 3]], [[1, -1], [0, 2]]])
    def test_bad_matrices(self, counts):
        with pytest.raises(ScoringError):
            ConfusionMatrix.from_counts(counts)

    def test_empty_matrix(self):
        with pytest.raises(ScoringError):
            ess(ConfusionMatrix.from_counts(np.zeros((3, 3))))

    def test_threshold_range(self):
        matrix = ConfusionMatrix.from_counts(np.eye(3))
        with pytest.raises(ScoringError):
            peirce_skill_score(matrix, 3)

    def test_degenerate_marginal(self):
        with pytest.raises(ScoringError):
            peirce_skill_score(ConfusionMatrix.from_counts([[0, 1], [0, 2]]), 1)

    def test_climatology_must_be_positive(self):
        with pytest.raises(ScoringError):
            gerrity_scoring_matrix([0.0, 1.0])


# ===========================================================================
# Continuous scores
# ===========================================================================


class TestContinuousScores:

    def test_rmse(self):
        assert rmse([3.0, -4.0]) == pytest.approx(np.sqrt(12.5))

    def test_q95_linear_interpolation(self):
        errors = np.arange(1, 101) * np.where(np.arange(100) % 2, -1.0, 1.0)
        assert quantile_abs_error(errors) == pytest.approx(95.05)

    def test_empty_errors(self):
        with pytest.raises(ScoringError):
            rmse([])

    def test_quantile_level(self):
        with pytest.raises(ScoringError):
            quantile_abs_error([1.0], 1.5)

    def test_report_without_matrix(self):
        report = score_report([1.0, -1.0])
        assert report.rmse == 1.0
        assert report.ess is None
        assert report.to_dict()["n"] == 2

    def test_report_with_partial_matrix(self):
        matrix = ConfusionMatrix.from_counts([[0, 1, 0], [0, 2, 1], [0, 0, 3]])
        report = score_report([1.0, 2.0], matrix)
        assert report.ess_collapsed
        assert report.pss_per_threshold[0] is None
        assert report.pss_per_threshold[1] == pytest.approx(0.75)
        assert report.hit_rates == {1: None, 3: 0.75}
