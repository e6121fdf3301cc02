"""
Classifier features of one round.

Every feature is available before the round's observation: the observation
at the models' first lead time, the expert predictions, the unbiased
aggregation's forecast, run-level spread statistics and the Kalman-filtered
reference expert.

Reference: expert-aggregation-layer.md §Features
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from src.expert_aggregation.kalman import KalmanFeatureState, kalman_forecast
from src.models.forecast import ExpertRoster, ForecastRecord
from src.observability.metrics import record_degenerate

RunContext = Mapping[int, float]
"""Variance across experts at each lead time of one (station, run date)."""


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: NDArray[np.float64]
    degenerate_run_context: bool = False

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.values)


def feature_names(roster: ExpertRoster) -> tuple[str, ...]:
    return (
        "first_lt_obs",
        *(f"first_lt_obs_minus_{name}" for name in roster.names),
        "first_lt_obs_minus_agreg",
        "sd_all_experts",
        "mean_minus_max",
        "mean_minus_min",
        "sd_pearp_quantiles",
        "agreg_minus_mean_pearp",
        "run_mean_variance",
        "run_variance_of_variance",
        "diff_run_mean_var",
        "kf_prediction",
        "kf_sd",
    )


def expert_variance(predictions: NDArray[np.float64]) -> float:
    """Population variance across experts."""
    return float(np.var(predictions))


def kalman_expert_index(roster: ExpertRoster, preference: tuple[str, ...] | list[str]) -> int:
    """First preferred expert present in the roster, else the first unbiased one."""
    for name in preference:
        if name in roster.names:
            return roster.index_of(name)
    return int(np.flatnonzero(roster.always_awake_mask)[0])


def build_features(
    record: ForecastRecord,
    roster: ExpertRoster,
    unbiased_agg_prediction: float,
    kf: KalmanFeatureState,
    kf_expert: int,
    run_context: RunContext,
) -> FeatureVector:
    x = record.predictions
    first = record.first_leadtime_observation
    mean = float(x.mean())

    quantiles = x[roster.quantile_mask]
    if quantiles.size:
        sd_q = float(np.std(quantiles))
        agreg_minus_q = unbiased_agg_prediction - float(quantiles.mean())
    else:
        sd_q, agreg_minus_q = 0.0, 0.0

    variances = np.array([run_context[k] for k in sorted(run_context)], dtype=np.float64)
    # spread across lead times needs at least two of them
    degenerate = variances.size < 2
    if degenerate:
        record_degenerate("run_context")
        run_mean = float(variances.mean()) if variances.size else 0.0
        run_var = diff = 0.0
    else:
        run_mean = float(variances.mean())
        run_var = float(np.var(variances))
        diff = expert_variance(x) - run_mean

    kf_prediction, kf_sd = kalman_forecast(kf, float(x[kf_expert]))

    values = np.array(
        [
            first,
            *(first - x),
            first - unbiased_agg_prediction,
            float(np.std(x)),
            mean - float(x.max()),
            mean - float(x.min()),
            sd_q,
            agreg_minus_q,
            run_mean,
            run_var,
            diff,
            kf_prediction,
            kf_sd,
        ],
        dtype=np.float64,
    )
    return FeatureVector(feature_names(roster), values, degenerate)
