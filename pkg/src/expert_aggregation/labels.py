"""
Error classes of the unbiased aggregation and the rule that maps a class to
the set of awake experts.

Class 1: the aggregation is too cold (error <= -threshold), woken group "high".
Class 2: |error| < threshold, biased experts stay asleep.
Class 3: the aggregation is too warm (error >= threshold), woken group "low".

Reference: expert-aggregation-layer.md §Wake-up rule
"""
from __future__ import annotations

import numpy as np

from src.models.awake import CLASSES, AwakeSet, AwakeSource
from src.models.errors import DomainError
from src.models.forecast import ExpertRoster

WAKE_GROUP_BY_CLASS: dict[int, str | None] = {1: "high", 2: None, 3: "low"}


def make_label(prediction: float, observation: float, threshold: float = 2.5) -> int:
    error = prediction - observation
    if error <= -threshold:
        return 1
    if error >= threshold:
        return 3
    return 2


def replication_for(prediction: float, observation: float, threshold: float = 2.5, factor: int = 5) -> int:
    """Oversampling multiplicity of a training row: *factor* for both extreme classes."""
    return factor if abs(prediction - observation) >= threshold else 1


def is_active_round(round_index: int, activation_round: int) -> bool:
    """Wake-ups start once *activation_round* rounds have completed (rounds are 1-based)."""
    return round_index - 1 >= activation_round


def wake_from_class(
    predicted_class: int,
    round_index: int,
    roster: ExpertRoster,
    activation_round: int = 100,
    source: AwakeSource = AwakeSource.CLASSIFIER,
) -> AwakeSet:
    """Unbiased experts always; the class's wake group only on active rounds."""
    if predicted_class not in CLASSES:
        raise DomainError(f"class must be in {CLASSES}, got {predicted_class}")
    awake = roster.always_awake_mask.copy()
    group = WAKE_GROUP_BY_CLASS[predicted_class]
    if group is not None and is_active_round(round_index, activation_round):
        awake |= roster.wake_group_mask(group)
    return AwakeSet.build(roster, np.asarray(awake), predicted_class, source)
