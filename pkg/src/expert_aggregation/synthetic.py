"""
Synthetic station streams with planted cold spells and heat waves.

Outside the planted spells every unbiased expert is the truth plus a small
fixed bias and noise; the "low" wake group sits below the ensemble median and
the "high" group above it. During a cold spell the observation drops by
``shift`` while every expert keeps forecasting the previous regime, except the
most extreme "low" expert, which is exact. Heat waves mirror this with the
"high" group.

Reference: expert-aggregation-layer.md §Synthetic data
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd

from src.config import ExpertSpec, default_roster
from src.models.forecast import ExpertRoster, ForecastRecord, ForecastStream


@dataclass(frozen=True)
class SyntheticRun:
    stream: ForecastStream
    cold_rounds: tuple[int, ...]
    warm_rounds: tuple[int, ...]

    @property
    def planted_rounds(self) -> tuple[int, ...]:
        return tuple(sorted(self.cold_rounds + self.warm_rounds))


def planted_spells(
    rng: np.random.Generator,
    n_rounds: int,
    n_spells: int,
    spell_length: int,
    first_round: int,
) -> list[int]:
    """Non-overlapping spell start rounds, one per equal segment of ``[first_round, n_rounds]``."""
    if n_spells == 0:
        return []
    span = n_rounds - first_round + 1
    segment = span // n_spells
    if segment < spell_length:
        raise ValueError(
            f"{n_spells} spells of {spell_length} rounds do not fit in rounds {first_round}..{n_rounds}"
        )
    return [
        first_round + s * segment + int(rng.integers(0, segment - spell_length + 1))
        for s in range(n_spells)
    ]


def generate_stream(
    seed: int,
    n_rounds: int = 500,
    roster: Sequence[ExpertSpec] | None = None,
    n_cold_spells: int = 3,
    n_heat_waves: int = 2,
    spell_length: int = 10,
    first_spell_round: int = 101,
    shift: float = 5.0,
    bias_step: float = 1.0,
    noise: float = 0.7,
    station_id: str = "SYN",
    lead_time: int = 24,
    start_date: str = "2020-01-01",
) -> SyntheticRun:
    """
    One stream of *n_rounds* daily rounds, fully determined by *seed*.

    Cold spells and heat waves are shuffled over the planted slots; both need
    at least one expert of the matching wake group in *roster*.
    """
    specs = list(roster) if roster is not None else default_roster()
    ids = ExpertRoster.from_specs(specs)
    low = [i for i, e in enumerate(ids) if e.biased and e.wake_group == "low"]
    high = [i for i, e in enumerate(ids) if e.biased and e.wake_group == "high"]
    if n_cold_spells and not low:
        raise ValueError("cold spells need a biased expert in the 'low' wake group")
    if n_heat_waves and not high:
        raise ValueError("heat waves need a biased expert in the 'high' wake group")

    rng = np.random.default_rng(seed)
    kinds = np.array(["cold"] * n_cold_spells + ["warm"] * n_heat_waves)
    rng.shuffle(kinds)
    starts = planted_spells(rng, n_rounds, kinds.size, spell_length, first_spell_round)
    regime = np.zeros(n_rounds + 1)
    cold: list[int] = []
    warm: list[int] = []
    for kind, start in zip(kinds, starts, strict=True):
        rounds = range(start, start + spell_length)
        (cold if kind == "cold" else warm).extend(rounds)
        regime[start : start + spell_length] = -1.0 if kind == "cold" else 1.0

    n = len(ids)
    expert_bias = rng.uniform(-0.5, 0.5, size=n)
    t_axis = np.arange(1, n_rounds + 1)
    climate = 10.0 + 8.0 * np.sin(2.0 * np.pi * t_axis / 365.0) + rng.normal(0.0, 2.0, n_rounds)
    dates = pd.date_range(start_date, periods=n_rounds, freq="D")

    grouped = set(low) | set(high)
    records = []
    for t in t_axis:
        forecast_regime = climate[t - 1]
        y = forecast_regime + shift * regime[t]
        x = np.empty(n)
        for i in range(n):
            if i in grouped:
                continue
            x[i] = forecast_regime + expert_bias[i] + rng.normal(0.0, noise)
        for members, direction in ((low, -1.0), (high[::-1], 1.0)):
            # rank 0 is the most extreme member of the group
            for rank, i in enumerate(members):
                offset = bias_step * (len(members) - rank)
                if regime[t] == direction:
                    x[i] = y - direction * bias_step * rank
                else:
                    x[i] = forecast_regime + direction * offset + rng.normal(0.0, noise)
        first_lt = y + rng.normal(0.0, 0.5)
        records.append(
            ForecastRecord(
                round_index=int(t),
                station_id=station_id,
                lead_time_hours=lead_time,
                date=dates[t - 1].strftime("%Y-%m-%d"),
                observation=float(y),
                expert_predictions=tuple(float(v) for v in x),
                first_leadtime_observation=float(first_lt),
            )
        )
    stream = ForecastStream(station_id, lead_time, ids, records)
    return SyntheticRun(stream, tuple(sorted(cold)), tuple(sorted(warm)))


def generate_run(seed: int, lead_times: Sequence[int] = (24, 48), **kwargs: Any) -> list[SyntheticRun]:
    """One stream per lead time of the same station and dates; lead time *k* uses seed ``seed + k``."""
    if not lead_times or len(set(lead_times)) != len(lead_times):
        raise ValueError(f"lead times must be distinct and non-empty, got {list(lead_times)}")
    return [
        generate_stream(seed + k, lead_time=int(lead_time), **kwargs)
        for k, lead_time in enumerate(lead_times)
    ]


def stream_frame(streams: Sequence[ForecastStream]) -> pd.DataFrame:
    """Long table in the ingestion CSV layout."""
    rows = []
    for stream in streams:
        names = stream.roster.names
        for rec in stream.records:
            rows.append(
                {
                    "date": rec.date,
                    "station_id": rec.station_id,
                    "lead_time": rec.lead_time_hours,
                    "obs": repr(rec.observation),
                    "first_lt_obs": repr(rec.first_leadtime_observation),
                    **{name: repr(v) for name, v in zip(names, rec.expert_predictions, strict=True)},
                }
            )
    return pd.DataFrame(rows)
