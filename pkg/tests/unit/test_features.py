"""
Unit tests for classifier feature construction.

Reference: expert-aggregation-layer.md §Features
"""
import dataclasses
import math

import pytest

from src.config import ExpertSpec
from src.expert_aggregation.features import build_features, feature_names, kalman_expert_index
from src.expert_aggregation.kalman import KalmanFeatureState
from src.models.forecast import ExpertRoster, ForecastRecord


@pytest.fixture
def roster():
    return ExpertRoster.from_specs(
        [
            ExpertSpec("a"),
            ExpertSpec("b"),
            ExpertSpec("q1", biased=True, quantile=True, wake_group="low"),
            ExpertSpec("q2", quantile=True),
        ]
    )


@pytest.fixture
def record():
    return ForecastRecord(
        round_index=5,
        station_id="ST1",
        lead_time_hours=48,
        date="2021-01-05",
        observation=10.0,
        expert_predictions=(10.0, 12.0, 8.0, 11.0),
        first_leadtime_observation=9.0,
    )


KF = KalmanFeatureState(1.5, 1.0, 0.0, 1.0, started=True)


class TestFeatureNames:

    def test_layout(self, roster):
        names = feature_names(roster)
        assert names[0] == "first_lt_obs"
        assert names[1:5] == tuple(f"first_lt_obs_minus_{n}" for n in ("a", "b", "q1", "q2"))
        assert names[-2:] == ("kf_prediction", "kf_sd")
        assert len(names) == 4 + 13


class TestBuildFeatures:

    def test_hand_computed_values(self, roster, record):
        fv = build_features(record, roster, 11.0, KF, 0, {24: 1.0, 48: 3.0})
        assert fv["first_lt_obs"] == 9.0
        assert [fv[f"first_lt_obs_minus_{n}"] for n in ("a", "b", "q1", "q2")] == [-1.0, -3.0, 1.0, -2.0]
        assert fv["first_lt_obs_minus_agreg"] == -2.0
        assert fv["sd_all_experts"] == pytest.approx(math.sqrt(2.1875))
        assert fv["mean_minus_max"] == pytest.approx(-1.75)
        assert fv["mean_minus_min"] == pytest.approx(2.25)
        assert fv["sd_pearp_quantiles"] == pytest.approx(1.5)
        assert fv["agreg_minus_mean_pearp"] == pytest.approx(1.5)
        assert fv["run_mean_variance"] == pytest.approx(2.0)
        assert fv["run_variance_of_variance"] == pytest.approx(1.0)
        assert fv["diff_run_mean_var"] == pytest.approx(0.1875)
        assert fv["kf_prediction"] == pytest.approx(11.5)
        assert fv["kf_sd"] == pytest.approx(math.sqrt(2.0))
        assert not fv.degenerate_run_context
        assert len(fv.as_tuple()) == len(fv.names)

    def test_empty_run_context_is_flagged(self, roster, record):
        fv = build_features(record, roster, 11.0, KF, 0, {})
        assert fv.degenerate_run_context
        assert fv["run_mean_variance"] == 0.0
        assert fv["run_variance_of_variance"] == 0.0
        assert fv["diff_run_mean_var"] == 0.0

    def test_single_lead_time_context_is_flagged(self, roster, record):
        fv = build_features(record, roster, 11.0, KF, 0, {48: 3.0})
        assert fv.degenerate_run_context
        assert fv["run_mean_variance"] == 3.0
        assert fv["run_variance_of_variance"] == 0.0
        assert fv["diff_run_mean_var"] == 0.0

    def test_no_quantile_experts(self, record):
        roster = ExpertRoster.from_names(["a", "b", "c", "d"])
        fv = build_features(record, roster, 11.0, KF, 0, {48: 3.0})
        assert fv["sd_pearp_quantiles"] == 0.0
        assert fv["agreg_minus_mean_pearp"] == 0.0

    def test_observation_is_never_read(self, roster, record):
        other = dataclasses.replace(record, observation=-40.0)
        a = build_features(record, roster, 11.0, KF, 1, {48: 3.0})
        b = build_features(other, roster, 11.0, KF, 1, {48: 3.0})
        assert a.as_tuple() == b.as_tuple()


class TestKalmanExpertIndex:

    def test_first_preferred_present(self, roster):
        assert kalman_expert_index(roster, ("zz", "b", "a")) == 1

    def test_falls_back_to_first_unbiased(self):
        roster = ExpertRoster.from_names(["q", "a"], biased=["q"])
        assert kalman_expert_index(roster, ("missing",)) == 1
