"""
Squared loss, its derivative and the convex combination of expert predictions.

Reference: expert-aggregation-layer.md §Core operations
"""
from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike

from src.models.errors import DomainError
from src.models.weights import WeightVector


def _check_finite(prediction: float, observation: float) -> None:
    if not (math.isfinite(prediction) and math.isfinite(observation)):
        raise DomainError(f"non-finite loss input ({prediction!r}, {observation!r})")


def squared_loss(prediction: float, observation: float) -> float:
    """Return ``(prediction - observation) ** 2``."""
    _check_finite(prediction, observation)
    d = prediction - observation
    return d * d


def loss_gradient(prediction: float, observation: float) -> float:
    """Derivative of :func:`squared_loss` in its first argument."""
    _check_finite(prediction, observation)
    return 2.0 * (prediction - observation)


def convex_combine(weights: WeightVector, predictions: ArrayLike) -> float:
    """
    Weighted mean of *predictions*.

    The result is clipped to the hull of the predictions so rounding never
    leaves ``[min, max]``.
    """
    x = np.asarray(predictions, dtype=np.float64)
    if x.shape != weights.values.shape:
        raise DomainError(f"{x.size} predictions for {weights.size} weights")
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite expert prediction")
    value = float(np.dot(weights.values, x))
    return min(max(value, float(x.min())), float(x.max()))
