"""
Unit tests for Bernstein Online Aggregation.

Reference: expert-aggregation-layer.md §Aggregation
"""
import math

import numpy as np
import pytest

from src.expert_aggregation.boa import BoaState, boa_learning_rates, boa_predict, boa_update
from src.expert_aggregation.loss import squared_loss
from src.models.errors import DomainError
from src.models.weights import WeightVector


def _run(predictions, observations, eta_max=1.0):
    state = BoaState.initial(predictions.shape[1], eta_max=eta_max)
    trajectory = [state.current_weights.values]
    forecasts = []
    for x, y in zip(predictions, observations):
        forecasts.append(boa_predict(state, x))
        state = boa_update(state, x, float(y))
        trajectory.append(state.current_weights.values)
    return state, np.array(trajectory), np.array(forecasts)


def _noisy_stream(seed, n_rounds=200, n_experts=5):
    rng = np.random.default_rng(seed)
    y = rng.uniform(-5.0, 5.0, n_rounds)
    bias = np.linspace(-1.0, 2.0, n_experts)
    x = y[:, None] + bias[None, :] + rng.normal(0.0, 1.0, (n_rounds, n_experts))
    return x, y


# ===========================================================================
# Initial state
# ===========================================================================


class TestInitialState:

    def test_uniform_prior(self):
        state = BoaState.initial(4)
        assert state.current_weights == WeightVector.uniform(4)
        assert np.all(state.learning_rates == 1.0)
        assert state.rounds == 0

    def test_custom_prior(self):
        prior = WeightVector.from_values([0.5, 0.25, 0.25])
        state = BoaState.initial(3, prior=prior)
        assert state.current_weights == prior
        assert boa_predict(state, [4.0, 0.0, 0.0]) == 2.0

    def test_prior_size_mismatch(self):
        with pytest.raises(DomainError):
            BoaState.initial(2, prior=WeightVector.uniform(3))

    def test_eta_max_positive(self):
        with pytest.raises(DomainError):
            BoaState.initial(2, eta_max=0.0)


# ===========================================================================
# One update
# ===========================================================================


class TestSingleUpdate:

    def test_two_expert_golden_value(self):
        # y_hat = 1, g = 2, r = (-2, 2), tilted = (2, 6), eta = 1/(2E) = 0.25
        state = boa_update(BoaState.initial(2), [0.0, 2.0], 0.0)
        assert state.cumulative_tilted_loss.tolist() == [2.0, 6.0]
        assert state.cumulative_squared_regret.tolist() == [4.0, 4.0]
        assert state.regret_range.tolist() == [2.0, 2.0]
        assert state.learning_rates.tolist() == [0.25, 0.25]
        w = state.current_weights.values
        assert w[0] == pytest.approx(0.7310585786300049, rel=1e-12)
        assert w[0] > w[1]
        assert state.rounds == 1

    def test_issued_prediction_is_used(self):
        base = BoaState.initial(2)
        implicit = boa_update(base, [0.0, 2.0], 0.0)
        explicit = boa_update(base, [0.0, 2.0], 0.0, prediction=1.0)
        assert implicit.current_weights == explicit.current_weights

    def test_prediction_count_checked(self):
        with pytest.raises(DomainError):
            boa_update(BoaState.initial(3), [1.0, 2.0], 0.0)

    def test_huge_values_never_nan(self):
        state = boa_update(BoaState.initial(2), [0.0, 1e8], 0.0)
        state = boa_update(state, [1e8, -1e8], 5.0)
        assert np.all(np.isfinite(state.current_weights.values))
        assert state.current_weights.values.sum() == pytest.approx(1.0, abs=1e-12)


class TestLearningRates:

    def test_unseen_experts_keep_eta_max(self):
        eta = boa_learning_rates(np.array([0.0, 4.0]), np.array([0.0, 2.0]), 0.7)
        assert eta[0] == 0.7
        assert eta[1] == 0.25

    def test_single_expert_keeps_eta_max(self):
        eta = boa_learning_rates(np.array([9.0]), np.array([3.0]), 1.0)
        assert eta.tolist() == [1.0]

    def test_variance_term(self):
        v = np.array([100.0])
        eta = boa_learning_rates(np.concatenate([v, v]), np.array([0.01, 0.01]), 1.0)
        assert eta[0] == pytest.approx(math.sqrt(math.log(2) / 100.0))


# ===========================================================================
# Trajectories
# ===========================================================================


class TestTrajectory:

    def test_single_expert_weight_is_one(self):
        x, y = _noisy_stream(1, n_experts=1)
        _, trajectory, _ = _run(x, y)
        assert np.all(trajectory == 1.0)

    def test_identical_experts_keep_equal_weights(self):
        x, y = _noisy_stream(2, n_experts=1)
        _, trajectory, _ = _run(np.hstack([x, x]), y)
        assert np.all(trajectory[:, 0] == trajectory[:, 1])

    def test_simplex_after_every_round(self):
        x, y = _noisy_stream(3)
        _, trajectory, _ = _run(x, y)
        assert np.all(trajectory >= 0.0)
        assert np.all(np.abs(trajectory.sum(axis=1) - 1.0) <= 1e-12)

    def test_deterministic(self):
        x, y = _noisy_stream(4)
        a, traj_a, fc_a = _run(x, y)
        b, traj_b, fc_b = _run(x, y)
        assert np.array_equal(traj_a, traj_b)
        assert np.array_equal(fc_a, fc_b)
        assert np.array_equal(a.cumulative_tilted_loss, b.cumulative_tilted_loss)

    def test_learning_rates_non_increasing_once_seen(self):
        x, y = _noisy_stream(5)
        state = BoaState.initial(x.shape[1])
        previous = None
        for xt, yt in zip(x, y):
            state = boa_update(state, xt, float(yt))
            seen = (state.cumulative_squared_regret > 0) & (state.regret_range > 0)
            if previous is not None:
                assert np.all(state.learning_rates[seen] <= previous[seen])
            previous = state.learning_rates

    def test_exact_expert_takes_over(self):
        n = 2000
        y = 10.0 * np.sin(np.arange(n) / 7.0)
        x = np.column_stack([y, y + 1.0])
        _, trajectory, _ = _run(x, y)
        w_exact = trajectory[1:, 0]
        assert np.all(np.diff(w_exact) >= -1e-15)
        assert w_exact[-1] > 1.0 - 1e-3

    def test_regret_against_best_expert_is_sublinear(self):
        n, k = 2000, 5
        x, y = _noisy_stream(6, n_rounds=n, n_experts=k)
        _, _, forecasts = _run(x, y)
        boa_loss = sum(squared_loss(f, float(o)) for f, o in zip(forecasts, y))
        best = min(float(np.sum((x[:, i] - y) ** 2)) for i in range(k))
        assert boa_loss - best <= 10.0 * math.sqrt(n * math.log(k))
