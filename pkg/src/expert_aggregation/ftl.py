"""
Follow-the-leader meta-selection between plain BOA (candidate A) and its
sleeping-expert version (candidate B), optionally penalising B by
``coefficient * round``.

Reference: expert-aggregation-layer.md §Aggregation
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from src.models.errors import DomainError


class FtlChoice(str, Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class FtlState:
    cumulative_loss_a: float = 0.0
    cumulative_loss_b: float = 0.0
    regularizer_coefficient: float = 0.0
    round: int = 1
    """Round about to be predicted; losses cover rounds ``1 .. round - 1``."""

    switches: int = 0
    last_choice: FtlChoice | None = None


def ftl_select(state: FtlState) -> FtlChoice:
    """B iff ``L_b + c * round <= L_a``; ties go to B."""
    if state.round < 1:
        raise DomainError("ftl round must be >= 1")
    penalty = state.regularizer_coefficient * state.round
    if state.cumulative_loss_b + penalty <= state.cumulative_loss_a:
        return FtlChoice.B
    return FtlChoice.A


def ftl_update(state: FtlState, loss_a: float, loss_b: float) -> FtlState:
    """Book this round's candidate losses and count selector switches."""
    if loss_a < 0 or loss_b < 0:
        raise DomainError("losses must be non-negative")
    choice = ftl_select(state)
    switched = state.last_choice is not None and choice is not state.last_choice
    return FtlState(
        cumulative_loss_a=state.cumulative_loss_a + loss_a,
        cumulative_loss_b=state.cumulative_loss_b + loss_b,
        regularizer_coefficient=state.regularizer_coefficient,
        round=state.round + 1,
        switches=state.switches + int(switched),
        last_choice=choice,
    )
