"""
Unit tests for the scalar Kalman bias filter.

Reference: expert-aggregation-layer.md §Features
"""
import math

import pytest

from src.expert_aggregation.kalman import KalmanFeatureState, kalman_forecast, kalman_step
from src.models.errors import DomainError


class TestKalmanStep:

    def test_half_gain_moves_halfway(self):
        state = KalmanFeatureState(0.0, 1.0, 0.0, 1.0, started=True)
        new, prediction, sd = kalman_step(state, 0.0, 10.0)
        assert new.state_mean == 5.0
        assert new.state_variance == 0.5
        assert prediction == 0.0
        assert sd == pytest.approx(math.sqrt(2.0))

    def test_first_step_starts_at_observed_bias(self):
        state = KalmanFeatureState.initial(process_noise=0.01, observation_noise=2.0)
        new, prediction, sd = kalman_step(state, 12.0, 14.5)
        assert prediction == 12.0
        assert sd == pytest.approx(math.sqrt(2.0 + 0.01 + 2.0))
        assert new.started
        assert new.state_mean == 2.5
        assert new.state_variance == 2.0

    def test_constant_bias_is_tracked_exactly(self):
        state = KalmanFeatureState.initial()
        variances = []
        for x in (10.0, 11.0, 9.5, 12.0, 8.0):
            state, _, _ = kalman_step(state, x, x + 3.0)
            variances.append(state.state_variance)
        assert state.state_mean == 3.0
        assert all(b < a for a, b in zip(variances, variances[1:]))
        assert kalman_forecast(state, 20.0)[0] == 23.0

    def test_forecast_never_reads_observation(self):
        state = KalmanFeatureState(1.5, 0.4, 0.1, 1.0, started=True)
        assert kalman_forecast(state, 7.0) == (8.5, pytest.approx(math.sqrt(1.5)))


class TestKalmanValidation:

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"state_variance": 0.0},
            {"observation_noise": -1.0},
            {"process_noise": -0.1},
        ],
    )
    def test_invalid_variances(self, kwargs):
        with pytest.raises(DomainError):
            KalmanFeatureState(**kwargs)
