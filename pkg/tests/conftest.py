"""
Pytest fixtures shared across all test modules.
"""
from collections.abc import Callable, Sequence

import numpy as np
import pytest

from src.config import ExpertSpec, ForestParams, RunConfig, default_roster
from src.models.forecast import ExpertRoster, ForecastRecord, ForecastStream


# ---------------------------------------------------------------------------
# Rosters
# ---------------------------------------------------------------------------

SMALL_SPECS = [
    ExpertSpec("raw.aro"),
    ExpertSpec("mos.arp"),
    ExpertSpec("raw.cep"),
    ExpertSpec("Q10", biased=True, quantile=True, wake_group="low"),
    ExpertSpec("Q50", quantile=True),
    ExpertSpec("Q90", biased=True, quantile=True, wake_group="high"),
]


@pytest.fixture
def small_specs():
    """Three deterministic models and three quantiles, the outer two biased."""
    return list(SMALL_SPECS)


@pytest.fixture
def small_roster(small_specs):
    return ExpertRoster.from_specs(small_specs)


@pytest.fixture
def full_roster():
    """The eleven-expert roster of the default configuration."""
    return ExpertRoster.from_specs(default_roster())


# ---------------------------------------------------------------------------
# Streams
# ---------------------------------------------------------------------------


def make_stream(
    predictions: Sequence[Sequence[float]],
    observations: Sequence[float],
    roster: ExpertRoster,
    station_id: str = "ST1",
    lead_time: int = 24,
    first_lt_obs: Sequence[float] | None = None,
    start_date: str = "2021-01-01",
) -> ForecastStream:
    dates = np.datetime64(start_date) + np.arange(len(observations))
    first = first_lt_obs if first_lt_obs is not None else observations
    records = [
        ForecastRecord(
            round_index=t + 1,
            station_id=station_id,
            lead_time_hours=lead_time,
            date=str(dates[t]),
            observation=float(observations[t]),
            expert_predictions=tuple(float(v) for v in predictions[t]),
            first_leadtime_observation=float(first[t]),
        )
        for t in range(len(observations))
    ]
    return ForecastStream(station_id, lead_time, roster, records)


@pytest.fixture
def stream_factory() -> Callable[..., ForecastStream]:
    """Build a stream from a prediction matrix and observations (daily dates)."""
    return make_stream


@pytest.fixture
def random_stream(small_roster):
    """120 rounds of noisy forecasts around a seasonal signal."""
    rng = np.random.default_rng(11)
    n = 120
    truth = 10.0 + 5.0 * np.sin(np.arange(n) / 9.0)
    offsets = np.array([0.3, -0.2, 0.5, -2.0, 0.0, 2.0])
    predictions = truth[:, None] + offsets[None, :] + rng.normal(0.0, 0.8, (n, offsets.size))
    observations = truth + rng.normal(0.0, 0.5, n)
    return make_stream(predictions, observations, small_roster)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@pytest.fixture
def fast_config(small_specs):
    """Small roster, early activation and a shallow forest so pipeline runs stay quick."""
    return RunConfig(
        roster=small_specs,
        activation_round=30,
        retrain_stride=5,
        forest=ForestParams(n_rounds=2, max_depth=3, min_child_weight=2.0),
        rng_seed=7,
    )
