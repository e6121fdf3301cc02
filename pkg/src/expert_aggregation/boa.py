"""
Bernstein Online Aggregation with the gradient trick.

Per expert *i* the state carries the cumulative tilted loss, the cumulative
squared instantaneous regret ``V_i``, the regret range ``E_i`` and an adaptive
learning rate ``eta_i``. After each round::

    g      = 2 (y_hat - y)
    r_i    = g (x_i - y_hat)
    L_i   += r_i + eta_i r_i**2
    eta_i  = min(eta_max, 1 / (2 E_i), sqrt(ln N / V_i))
    w_i   ∝ pi_i eta_i exp(-eta_i L_i)

The weights are normalised in the log domain.

Reference: expert-aggregation-layer.md §Aggregation
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax

from src.expert_aggregation.loss import convex_combine, loss_gradient
from src.models.errors import DomainError
from src.models.weights import WeightVector


@dataclass(frozen=True)
class BoaState:
    prior: WeightVector
    cumulative_tilted_loss: NDArray[np.float64]
    cumulative_squared_regret: NDArray[np.float64]
    regret_range: NDArray[np.float64]
    learning_rates: NDArray[np.float64]
    current_weights: WeightVector
    eta_max: float = 1.0
    rounds: int = 0

    @classmethod
    def initial(
        cls, n_experts: int, eta_max: float = 1.0, prior: WeightVector | None = None
    ) -> BoaState:
        if eta_max <= 0:
            raise DomainError("eta_max must be > 0")
        pi = prior or WeightVector.uniform(n_experts)
        if pi.size != n_experts:
            raise DomainError(f"prior has {pi.size} entries for {n_experts} experts")
        zeros = np.zeros(n_experts)
        return cls(
            prior=pi,
            cumulative_tilted_loss=zeros,
            cumulative_squared_regret=zeros,
            regret_range=zeros,
            learning_rates=np.full(n_experts, float(eta_max)),
            current_weights=pi,
            eta_max=float(eta_max),
        )

    @property
    def n_experts(self) -> int:
        return self.prior.size


def boa_predict(state: BoaState, predictions: ArrayLike) -> float:
    return convex_combine(state.current_weights, predictions)


def boa_learning_rates(
    squared_regret: NDArray[np.float64], regret_range: NDArray[np.float64], eta_max: float
) -> NDArray[np.float64]:
    """Adaptive rates, equal to ``eta_max`` while an expert has no regret yet or N = 1."""
    n = squared_regret.size
    log_n = math.log(n)
    eta = np.full(n, eta_max)
    seen = (squared_regret > 0) & (regret_range > 0)
    if log_n > 0 and np.any(seen):
        eta[seen] = np.minimum.reduce(
            [
                eta[seen],
                1.0 / (2.0 * regret_range[seen]),
                np.sqrt(log_n / squared_regret[seen]),
            ]
        )
    return eta


def boa_weights(
    prior: WeightVector, learning_rates: NDArray[np.float64], tilted_loss: NDArray[np.float64]
) -> WeightVector:
    with np.errstate(divide="ignore"):
        log_w = np.log(prior.values) + np.log(learning_rates) - learning_rates * tilted_loss
    return WeightVector.from_values(softmax(log_w))


def boa_update(
    state: BoaState,
    predictions: ArrayLike,
    observation: float,
    prediction: float | None = None,
) -> BoaState:
    """
    One BOA round after the observation is revealed.

    *prediction* is the aggregation's forecast already issued for this round;
    it defaults to :func:`boa_predict` on the same inputs.
    """
    x = np.asarray(predictions, dtype=np.float64)
    if x.size != state.n_experts:
        raise DomainError(f"{x.size} predictions for {state.n_experts} experts")
    y_hat = boa_predict(state, x) if prediction is None else float(prediction)

    g = loss_gradient(y_hat, observation)
    regret = g * (x - y_hat)
    squared = regret * regret
    tilted = regret + state.learning_rates * squared

    cumulative = state.cumulative_tilted_loss + tilted
    v = state.cumulative_squared_regret + squared
    e = np.maximum(state.regret_range, np.abs(regret))
    eta = boa_learning_rates(v, e, state.eta_max)

    return BoaState(
        prior=state.prior,
        cumulative_tilted_loss=cumulative,
        cumulative_squared_regret=v,
        regret_range=e,
        learning_rates=eta,
        current_weights=boa_weights(state.prior, eta, cumulative),
        eta_max=state.eta_max,
        rounds=state.rounds + 1,
    )
