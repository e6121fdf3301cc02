"""
Awake sets of the sleeping-expert framework.

Reference: expert-aggregation-layer.md §Sleeping experts
"""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from src.models.errors import DomainError
from src.models.forecast import ExpertRoster

CLASSES: tuple[int, int, int] = (1, 2, 3)
"""1: aggregation too cold, 2: within the threshold, 3: aggregation too warm."""


class AwakeSource(str, Enum):
    CLASSIFIER = "classifier"
    ORACLE_CLASS = "oracle_class"
    ORACLE_EXPERT = "oracle_expert"
    ALL_AWAKE = "all_awake"


@dataclass(frozen=True)
class AwakeSet:
    """
    The experts allowed to influence one round's prediction.

    ``suppress_loss`` is set only by the expert oracle on rounds where biased
    experts are awake; the aggregation loss of such rounds is booked as zero.
    """

    mask: tuple[bool, ...]
    predicted_class: int = 2
    source: AwakeSource = AwakeSource.CLASSIFIER
    suppress_loss: bool = False

    def __post_init__(self) -> None:
        if not any(self.mask):
            raise DomainError("awake set must not be empty")
        if self.predicted_class not in CLASSES:
            raise DomainError(f"predicted class must be in {CLASSES}, got {self.predicted_class}")

    @classmethod
    def build(
        cls,
        roster: ExpertRoster,
        awake: NDArray[np.bool_] | Iterable[bool],
        predicted_class: int = 2,
        source: AwakeSource = AwakeSource.CLASSIFIER,
        suppress_loss: bool = False,
    ) -> AwakeSet:
        """Validate *awake* against *roster*: every unbiased expert must be awake."""
        arr = np.asarray(tuple(awake), dtype=bool)
        if arr.size != len(roster):
            raise DomainError(f"awake mask has {arr.size} entries for {len(roster)} experts")
        missing = np.flatnonzero(roster.always_awake_mask & ~arr)
        if missing.size:
            names = [roster.names[i] for i in missing]
            raise DomainError(f"always-awake experts missing from awake set: {names}")
        return cls(tuple(bool(v) for v in arr), predicted_class, source, suppress_loss)

    @classmethod
    def everyone(cls, n: int) -> AwakeSet:
        return cls((True,) * n, 2, AwakeSource.ALL_AWAKE)

    @property
    def array(self) -> NDArray[np.bool_]:
        return np.array(self.mask, dtype=bool)

    @property
    def covers_all(self) -> bool:
        return all(self.mask)

    def indices(self) -> list[int]:
        return [i for i, a in enumerate(self.mask) if a]

    def __contains__(self, index: object) -> bool:
        return isinstance(index, int) and 0 <= index < len(self.mask) and self.mask[index]

    def bitmask(self) -> str:
        return "".join("1" if a else "0" for a in self.mask)
