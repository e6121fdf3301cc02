"""
Fixed Share: exponential weights on gradient-trick linearised losses followed
by uniform mixing ``w <- (1 - alpha) w + alpha / N``.

Reference: expert-aggregation-layer.md §Aggregation
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import softmax

from src.expert_aggregation.loss import convex_combine, loss_gradient
from src.models.errors import DomainError
from src.models.weights import WeightVector


@dataclass(frozen=True)
class FixedShareState:
    weights: WeightVector
    learning_rate: float = 0.1
    share_rate: float = 0.01

    @classmethod
    def initial(
        cls, n_experts: int, learning_rate: float = 0.1, share_rate: float = 0.01
    ) -> FixedShareState:
        _check_share_rate(share_rate)
        if learning_rate <= 0:
            raise DomainError("learning_rate must be > 0")
        return cls(WeightVector.uniform(n_experts), float(learning_rate), float(share_rate))


def _check_share_rate(share_rate: float) -> None:
    if not 0.0 <= share_rate <= 1.0:
        raise DomainError(f"share_rate must be in [0, 1], got {share_rate!r}")


def fixed_share_predict(state: FixedShareState, predictions: ArrayLike) -> float:
    return convex_combine(state.weights, predictions)


def exponential_weights_update(
    state: FixedShareState, predictions: ArrayLike, observation: float
) -> WeightVector:
    """Exponentially weighted update on the linearised losses, without mixing."""
    x = np.asarray(predictions, dtype=np.float64)
    y_hat = fixed_share_predict(state, x)
    linear = loss_gradient(y_hat, observation) * (x - y_hat)
    with np.errstate(divide="ignore"):
        log_w = np.log(state.weights.values) - state.learning_rate * linear
    return WeightVector.from_values(softmax(log_w))


def fixed_share_update(
    state: FixedShareState,
    predictions: ArrayLike,
    observation: float,
    share_rate: float | None = None,
) -> FixedShareState:
    alpha = state.share_rate if share_rate is None else float(share_rate)
    _check_share_rate(alpha)
    updated = exponential_weights_update(state, predictions, observation)
    if alpha > 0.0:
        v = updated.values
        updated = WeightVector.from_values((1.0 - alpha) * v + alpha / v.size)
    return FixedShareState(updated, state.learning_rate, alpha)
