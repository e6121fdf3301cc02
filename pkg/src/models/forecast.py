"""
Forecast records, expert identities and per-(station, lead time) streams.

Reference: expert-aggregation-layer.md §Core types
"""
from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from src.config import ExpertSpec
from src.models.errors import DomainError

StreamKey = tuple[str, int]
"""(station_id, lead_time_hours)."""


@dataclass(frozen=True)
class ExpertId:
    """Position and flags of one expert inside a roster."""

    index: int
    name: str
    biased: bool = False
    quantile: bool = False
    wake_group: str | None = None


@dataclass(frozen=True)
class ExpertRoster:
    """Ordered, uniquely named experts of one stream."""

    experts: tuple[ExpertId, ...]

    def __post_init__(self) -> None:
        names = [e.name for e in self.experts]
        if not names:
            raise DomainError("roster must not be empty")
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate expert names in roster: {names}")
        if any(e.index != i for i, e in enumerate(self.experts)):
            raise DomainError("expert indices must be 0..N-1 in roster order")

    @classmethod
    def from_specs(cls, specs: Iterable[ExpertSpec]) -> ExpertRoster:
        return cls(
            tuple(
                ExpertId(i, s.name, s.biased, s.quantile, s.wake_group)
                for i, s in enumerate(specs)
            )
        )

    @classmethod
    def from_names(cls, names: Sequence[str], biased: Iterable[str] = ()) -> ExpertRoster:
        biased_set = set(biased)
        return cls(tuple(ExpertId(i, n, n in biased_set) for i, n in enumerate(names)))

    def __len__(self) -> int:
        return len(self.experts)

    def __iter__(self) -> Iterator[ExpertId]:
        return iter(self.experts)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.experts)

    def index_of(self, name: str) -> int:
        for e in self.experts:
            if e.name == name:
                return e.index
        raise KeyError(name)

    def mask(self, predicate: Callable[[ExpertId], bool]) -> NDArray[np.bool_]:
        return np.array([bool(predicate(e)) for e in self.experts], dtype=bool)

    @property
    def always_awake_mask(self) -> NDArray[np.bool_]:
        return self.mask(lambda e: not e.biased)

    @property
    def quantile_mask(self) -> NDArray[np.bool_]:
        return self.mask(lambda e: e.quantile)

    def wake_group_mask(self, group: str) -> NDArray[np.bool_]:
        return self.mask(lambda e: e.biased and e.wake_group == group)

    def to_specs(self) -> list[dict[str, Any]]:
        return [
            {"name": e.name, "biased": e.biased, "quantile": e.quantile, "wake_group": e.wake_group}
            for e in self.experts
        ]

    @classmethod
    def from_spec_dicts(cls, raw: Iterable[dict[str, Any]]) -> ExpertRoster:
        return cls.from_specs(ExpertSpec.from_dict(r) for r in raw)


@dataclass(frozen=True)
class ForecastRecord:
    """One (station, lead time, round) row of the online protocol."""

    round_index: int
    station_id: str
    lead_time_hours: int
    date: str
    observation: float
    expert_predictions: tuple[float, ...]
    first_leadtime_observation: float

    def __post_init__(self) -> None:
        if self.round_index < 1:
            raise DomainError(f"round_index must be >= 1, got {self.round_index}")
        if not self.expert_predictions:
            raise DomainError("a record needs at least one expert prediction")
        if not all(math.isfinite(v) for v in self.expert_predictions):
            raise DomainError(f"round {self.round_index}: non-finite expert prediction")
        if not math.isfinite(self.observation):
            raise DomainError(f"round {self.round_index}: non-finite observation")
        if not math.isfinite(self.first_leadtime_observation):
            raise DomainError(f"round {self.round_index}: non-finite first lead-time observation")

    @property
    def predictions(self) -> NDArray[np.float64]:
        return np.asarray(self.expert_predictions, dtype=np.float64)


@dataclass
class ForecastStream:
    """The ordered records of one (station, lead time) pair and its expert roster."""

    station_id: str
    lead_time_hours: int
    roster: ExpertRoster
    records: list[ForecastRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        n = len(self.roster)
        for expected, rec in enumerate(self.records, start=1):
            if rec.round_index != expected:
                raise DomainError(
                    f"stream {self.key}: round {rec.round_index} found where {expected} expected"
                )
            if len(rec.expert_predictions) != n:
                raise DomainError(
                    f"stream {self.key}: round {rec.round_index} has "
                    f"{len(rec.expert_predictions)} predictions for {n} experts"
                )

    @property
    def key(self) -> StreamKey:
        return (self.station_id, self.lead_time_hours)

    def __len__(self) -> int:
        return len(self.records)

    def prediction_matrix(self) -> NDArray[np.float64]:
        return np.array([r.expert_predictions for r in self.records], dtype=np.float64)

    def observations(self) -> NDArray[np.float64]:
        return np.array([r.observation for r in self.records], dtype=np.float64)

    def with_observations(self, observations: Sequence[float]) -> ForecastStream:
        """Copy of the stream with the observations replaced."""
        records = [
            ForecastRecord(
                round_index=r.round_index,
                station_id=r.station_id,
                lead_time_hours=r.lead_time_hours,
                date=r.date,
                observation=float(observations[t]),
                expert_predictions=r.expert_predictions,
                first_leadtime_observation=r.first_leadtime_observation,
            )
            for t, r in enumerate(self.records)
        ]
        return ForecastStream(self.station_id, self.lead_time_hours, self.roster, records)
