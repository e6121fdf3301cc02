"""
Scalar Kalman filter on the bias ``z = y - x`` of one reference expert.

The filtered bias gives a smoothed, bias-corrected forecast of that expert
and an uncertainty, both used as classifier features.

Reference: expert-aggregation-layer.md §Features
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from src.models.errors import DomainError


@dataclass(frozen=True)
class KalmanFeatureState:
    state_mean: float = 0.0
    state_variance: float = 1.0
    process_noise: float = 0.01
    observation_noise: float = 1.0
    started: bool = False

    def __post_init__(self) -> None:
        if self.state_variance <= 0 or self.observation_noise <= 0 or self.process_noise < 0:
            raise DomainError("kalman variances must be positive")

    @classmethod
    def initial(cls, process_noise: float = 0.01, observation_noise: float = 1.0) -> KalmanFeatureState:
        return cls(0.0, observation_noise, process_noise, observation_noise, started=False)


def kalman_forecast(state: KalmanFeatureState, expert_prediction: float) -> tuple[float, float]:
    """Predictive mean and standard deviation of the observation before it is seen."""
    sd = math.sqrt(state.state_variance + state.process_noise + state.observation_noise)
    return expert_prediction + state.state_mean, sd


def kalman_step(
    state: KalmanFeatureState, expert_prediction: float, observation: float
) -> tuple[KalmanFeatureState, float, float]:
    """
    Emit this round's forecast, then fold in the observed bias.

    The first step starts the filter at the observed bias with variance equal
    to the observation noise.
    """
    kf_prediction, kf_sd = kalman_forecast(state, expert_prediction)
    bias = observation - expert_prediction
    if not state.started:
        new = KalmanFeatureState(
            bias, state.observation_noise, state.process_noise, state.observation_noise, True
        )
        return new, kf_prediction, kf_sd

    prior_variance = state.state_variance + state.process_noise
    gain = prior_variance / (prior_variance + state.observation_noise)
    new = KalmanFeatureState(
        state_mean=state.state_mean + gain * (bias - state.state_mean),
        state_variance=(1.0 - gain) * prior_variance,
        process_noise=state.process_noise,
        observation_noise=state.observation_noise,
        started=True,
    )
    return new, kf_prediction, kf_sd
