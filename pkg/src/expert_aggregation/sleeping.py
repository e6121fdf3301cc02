"""
Sleeping-expert wrapper around BOA.

Only the awake experts of a round influence its prediction. Sleeping experts
are handled with the abstention trick: they are credited with the
aggregation's own prediction, so they incur the aggregation's loss and their
instantaneous regret is exactly zero. The wrapped BOA is fed these substituted
predictions, which makes its gradient-trick regret of a sleeper zero as well.

Reference: expert-aggregation-layer.md §Sleeping experts
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from src.expert_aggregation.boa import BoaState, boa_update
from src.expert_aggregation.labels import wake_from_class
from src.expert_aggregation.loss import convex_combine, squared_loss
from src.models.awake import AwakeSet, AwakeSource
from src.models.errors import DomainError
from src.models.forecast import ExpertRoster
from src.models.ledger import LedgerRow, RunLedger
from src.models.weights import WeightVector
from src.observability.logging import get_logger
from src.observability.metrics import record_degenerate

logger = get_logger(__name__)

ORACLE_SOURCES = {"oracle_class": AwakeSource.ORACLE_CLASS, "oracle_expert": AwakeSource.ORACLE_EXPERT}


class OracleModeError(ValueError):
    """Raised when an oracle awake set is requested outside an oracle run."""


@dataclass(frozen=True)
class SefRound:
    """Bookkeeping of one sleeping-expert round."""

    weights_before: WeightVector
    awake_set: AwakeSet
    sef_prediction: float
    sef_inputs: tuple[float, ...]
    """Predictions fed to the wrapped aggregation: sleepers carry ``sef_prediction``."""

    observation: float
    per_expert_sef_loss: tuple[float, ...]
    aggregation_loss: float


# ---------------------------------------------------------------------------
# Prediction and loss assignment
# ---------------------------------------------------------------------------


def awake_mass_degenerate(weights: WeightVector, awake: AwakeSet) -> bool:
    """True when at least two experts are awake and they carry no weight at all."""
    idx = awake.indices()
    return not awake.covers_all and len(idx) > 1 and float(weights.values[idx].sum()) <= 0.0


def sef_predict(weights: WeightVector, predictions: ArrayLike, awake: AwakeSet) -> float:
    """
    Weighted mean over the awake experts only.

    Sleeping experts' predictions are never read. An awake set carrying zero
    weight falls back to the plain mean of the awake predictions.
    """
    x = np.asarray(predictions, dtype=np.float64)
    if x.size != weights.size or len(awake.mask) != weights.size:
        raise DomainError(
            f"{x.size} predictions, {len(awake.mask)} awake flags for {weights.size} weights"
        )
    if awake.covers_all:
        return convex_combine(weights, x)

    idx = awake.indices()
    if len(idx) == 1:
        return float(x[idx[0]])
    xa = x[idx]
    wa = weights.values[idx]
    if awake_mass_degenerate(weights, awake):
        logger.warning("degenerate_awake_mass", awake=awake.bitmask())
        record_degenerate("awake_mass")
        return float(xa.mean())
    mass = float(wa.sum())
    value = float(np.dot(wa, xa)) / mass
    return min(max(value, float(xa.min())), float(xa.max()))


def sef_inputs(predictions: ArrayLike, awake: AwakeSet, sef_prediction: float) -> NDArray[np.float64]:
    """Awake experts keep their prediction, sleepers take the aggregation's."""
    x = np.asarray(predictions, dtype=np.float64)
    return np.where(awake.array, x, sef_prediction)


def sef_assign_losses(
    weights_before: WeightVector,
    awake: AwakeSet,
    sef_prediction: float,
    predictions: ArrayLike,
    observation: float,
) -> SefRound:
    """Awake experts get their own loss, sleepers the aggregation's loss exactly."""
    xs = sef_inputs(predictions, awake, sef_prediction)
    aggregation_loss = 0.0 if awake.suppress_loss else squared_loss(sef_prediction, observation)
    losses = tuple(
        squared_loss(float(xs[i]), observation) if a else aggregation_loss
        for i, a in enumerate(awake.mask)
    )
    return SefRound(
        weights_before=weights_before,
        awake_set=awake,
        sef_prediction=sef_prediction,
        sef_inputs=tuple(float(v) for v in xs),
        observation=float(observation),
        per_expert_sef_loss=losses,
        aggregation_loss=aggregation_loss,
    )


# ---------------------------------------------------------------------------
# BOA in the sleeping-expert framework
# ---------------------------------------------------------------------------


def sef_boa_predict(state: BoaState, predictions: ArrayLike, awake: AwakeSet) -> float:
    return sef_predict(state.current_weights, predictions, awake)


def sef_boa_update(
    state: BoaState,
    predictions: ArrayLike,
    awake: AwakeSet,
    observation: float,
    prediction: float | None = None,
) -> tuple[BoaState, SefRound]:
    """Assign SEF losses and update the wrapped BOA on the substituted predictions."""
    y_hat = sef_boa_predict(state, predictions, awake) if prediction is None else prediction
    rnd = sef_assign_losses(state.current_weights, awake, y_hat, predictions, observation)
    new_state = boa_update(state, rnd.sef_inputs, observation, prediction=y_hat)
    return new_state, rnd


def run_sleeping_boa(
    predictions: NDArray[np.float64],
    observations: Sequence[float],
    awake_sets: Sequence[AwakeSet],
    eta_max: float = 1.0,
) -> tuple[BoaState, list[SefRound]]:
    """Run BOA in the sleeping-expert framework over a whole prediction matrix."""
    state = BoaState.initial(predictions.shape[1], eta_max=eta_max)
    rounds: list[SefRound] = []
    for t, awake in enumerate(awake_sets):
        state, rnd = sef_boa_update(state, predictions[t], awake, float(observations[t]))
        rounds.append(rnd)
    return state, rounds


# ---------------------------------------------------------------------------
# Oracle awake sets
# ---------------------------------------------------------------------------


def oracle_awake_set(
    mode: str,
    roster: ExpertRoster,
    true_class: int,
    round_index: int,
    activation_round: int = 100,
) -> AwakeSet:
    """
    Awake set chosen from the true error class of the round.

    ``oracle_expert`` additionally books the round's aggregation loss as zero
    whenever a biased expert is awake.
    """
    source = ORACLE_SOURCES.get(mode)
    if source is None:
        raise OracleModeError(f"oracle awake set requested in mode {mode!r}")
    base = wake_from_class(true_class, round_index, roster, activation_round)
    biased_awake = bool(np.any(base.array & ~roster.always_awake_mask))
    return AwakeSet(
        mask=base.mask,
        predicted_class=true_class,
        source=source,
        suppress_loss=source is AwakeSource.ORACLE_EXPERT and biased_awake,
    )


# ---------------------------------------------------------------------------
# Regret accounting
# ---------------------------------------------------------------------------


def sef_rounds_from_ledger(ledger: RunLedger) -> list[SefRound]:
    """Rebuild the sleeping-expert rounds recorded in a ledger."""
    rounds = []
    for row in ledger.rows:
        rounds.append(_round_from_row(row))
    return rounds


def _round_from_row(row: LedgerRow) -> SefRound:
    return SefRound(
        weights_before=WeightVector.from_values(row.weights["boa_sleeping"])
        if "boa_sleeping" in row.weights
        else WeightVector.uniform(len(row.awake_mask)),
        awake_set=AwakeSet(
            mask=row.awake_mask,
            predicted_class=row.predicted_class,
            source=AwakeSource(row.awake_source),
            suppress_loss=False,
        ),
        sef_prediction=row.sef_prediction,
        sef_inputs=row.sef_predictions,
        observation=row.observation,
        per_expert_sef_loss=row.sef_expert_losses,
        aggregation_loss=row.sef_aggregation_loss,
    )


def _as_rounds(source: RunLedger | Sequence[SefRound]) -> Sequence[SefRound]:
    if isinstance(source, RunLedger):
        return sef_rounds_from_ledger(source)
    return source


def sef_regret_vs_expert(source: RunLedger | Sequence[SefRound], expert: int) -> float:
    """Cumulative regret against *expert* over the rounds where it was awake."""
    total = 0.0
    for rnd in _as_rounds(source):
        if not rnd.awake_set.mask[expert]:
            continue
        total += (rnd.aggregation_loss - rnd.per_expert_sef_loss[expert]) * 1.0
    return total


def sef_regret_vs_convex(source: RunLedger | Sequence[SefRound], q: WeightVector) -> float:
    """
    Cumulative regret against the fixed convex combination *q*.

    Each round compares with *q* restricted to the awake experts and
    renormalised, weighted by the mass ``q(E_t)`` of the awake set. Rounds with
    ``q(E_t) = 0`` contribute nothing.
    """
    total = 0.0
    for rnd in _as_rounds(source):
        mask = rnd.awake_set.array
        q_mass = float(q.values[mask].sum())
        if q_mass == 0.0:
            continue
        q_restricted = np.where(mask, q.values, 0.0) / q_mass
        comparator = float(np.dot(q_restricted, np.asarray(rnd.sef_inputs)))
        total += (rnd.aggregation_loss - squared_loss(comparator, rnd.observation)) * q_mass
    return total
