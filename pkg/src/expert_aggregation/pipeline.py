"""
Online run of every aggregation strategy over forecast streams.

Per round of a (station, lead time) stream, in order:
  Step a. Features from past state and the unbiased aggregation's forecast
  Step b. From the activation round on: retrain the forest (per stride), predict the class
  Step c. Awake set from the class (or from the true class in oracle modes)
  Step d. Every strategy predicts
  Step e. The observation is revealed
  Step f. Losses are booked (sleeping-expert losses for BOA^s), all states updated,
          the follow-the-leader selectors fed with BOA vs BOA^s losses
  Step g. A ledger row is appended

The oracle modes are the only place where the round's observation is read
before Step e.

Streams are independent and may run in parallel worker processes; results
are merged in (station, lead time) order. :func:`run_all` always returns a
:class:`~src.models.output_schema.RunOutput`; a failing stream is recorded,
never raised.

Reference: expert-aggregation-layer.md §Run loop
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from src.config import LAYER_VERSION, RunConfig
from src.expert_aggregation.boa import BoaState, boa_predict, boa_update
from src.expert_aggregation.features import (
    FeatureVector,
    build_features,
    feature_names,
    kalman_expert_index,
)
from src.expert_aggregation.fixed_share import (
    FixedShareState,
    fixed_share_predict,
    fixed_share_update,
)
from src.expert_aggregation.ftl import FtlChoice, FtlState, ftl_select, ftl_update
from src.expert_aggregation.gbrt import BoostedForest, TrainingSample, predict_class, train_forest
from src.expert_aggregation.ingest import RunContexts, build_run_contexts
from src.expert_aggregation.kalman import KalmanFeatureState, kalman_step
from src.expert_aggregation.labels import (
    is_active_round,
    make_label,
    replication_for,
    wake_from_class,
)
from src.expert_aggregation.loss import squared_loss
from src.expert_aggregation.sleeping import (
    awake_mass_degenerate,
    oracle_awake_set,
    sef_boa_predict,
    sef_boa_update,
)
from src.expert_aggregation.treeshap import tree_shap
from src.models.awake import AwakeSet
from src.models.forecast import ExpertRoster, ForecastRecord, ForecastStream, StreamKey
from src.models.ledger import LedgerRow, RunLedger, ShapRecord
from src.models.output_schema import RunOutput
from src.observability.logging import StreamLogger, get_logger
from src.observability.metrics import RETRAINS_TOTAL, ROUNDS_TOTAL, STREAM_RUNS, timer

logger = get_logger(__name__)


class StreamAbortedError(RuntimeError):
    """A stream failed at some round; carries where."""

    def __init__(self, station_id: str, lead_time: int, round_index: int, cause: Exception) -> None:
        self.station_id = station_id
        self.lead_time = lead_time
        self.round_index = round_index
        self.cause = cause
        super().__init__(
            f"stream ({station_id}, {lead_time}) aborted at round {round_index}: "
            f"{type(cause).__name__}: {cause}"
        )


# ---------------------------------------------------------------------------
# Per-stream state
# ---------------------------------------------------------------------------


@dataclass
class _StreamState:
    unbiased: BoaState
    boa: BoaState
    sleeping: BoaState
    fixed_share: FixedShareState
    ftl: FtlState
    ftl_regularized: FtlState
    kalman: KalmanFeatureState
    forest: BoostedForest | None = None
    samples: list[TrainingSample] = field(default_factory=list)

    @classmethod
    def initial(cls, config: RunConfig, roster: ExpertRoster) -> _StreamState:
        n = len(roster)
        n_unbiased = int(roster.always_awake_mask.sum())
        return cls(
            unbiased=BoaState.initial(n_unbiased, config.eta_max),
            boa=BoaState.initial(n, config.eta_max),
            sleeping=BoaState.initial(n, config.eta_max),
            fixed_share=FixedShareState.initial(
                n, config.fixed_share_learning_rate, config.fixed_share_alpha
            ),
            ftl=FtlState(regularizer_coefficient=0.0),
            ftl_regularized=FtlState(regularizer_coefficient=config.ftl_regularizer),
            kalman=KalmanFeatureState.initial(
                config.kalman_process_noise, config.kalman_observation_noise
            ),
        )


def _expand(weights: NDArray[np.float64], mask: NDArray[np.bool_]) -> tuple[float, ...]:
    full = np.zeros(mask.size)
    full[mask] = weights
    return tuple(float(v) for v in full)


def _run_context(contexts: RunContexts, record: ForecastRecord) -> dict[int, float]:
    return contexts.get((record.station_id, record.date), {})


# ---------------------------------------------------------------------------
# Training data of the wake-up classifier
# ---------------------------------------------------------------------------


def training_samples(
    config: RunConfig, stream: ForecastStream, contexts: RunContexts | None = None
) -> list[TrainingSample]:
    """Features and labels of every round, from the unbiased aggregation alone."""
    contexts = contexts if contexts is not None else build_run_contexts({stream.key: stream})
    roster = stream.roster
    mask = roster.always_awake_mask
    kf_idx = kalman_expert_index(roster, config.kalman_expert_preference)
    unbiased = BoaState.initial(int(mask.sum()), config.eta_max)
    kalman = KalmanFeatureState.initial(config.kalman_process_noise, config.kalman_observation_noise)
    samples = []
    for record in stream.records:
        x = record.predictions
        y_u = boa_predict(unbiased, x[mask])
        features = build_features(record, roster, y_u, kalman, kf_idx, _run_context(contexts, record))
        y = record.observation
        samples.append(
            TrainingSample(
                features.as_tuple(),
                make_label(y_u, y, config.wake_threshold),
                replication_for(y_u, y, config.wake_threshold, config.oversample_factor),
            )
        )
        unbiased = boa_update(unbiased, x[mask], y, prediction=y_u)
        kalman = kalman_step(kalman, float(x[kf_idx]), y)[0]
    return samples


# ---------------------------------------------------------------------------
# One stream
# ---------------------------------------------------------------------------


def run_stream(
    config: RunConfig, stream: ForecastStream, contexts: RunContexts | None = None
) -> RunLedger:
    """
    Run every strategy over *stream* in lockstep and return its ledger.

    *contexts* should cover every lead time of the run (see
    :func:`build_run_contexts`); without it only this stream's lead time is
    known and every round is booked as a degenerate run context.
    """
    if not stream.records:
        raise ValueError(f"stream {stream.key} is empty")
    contexts = contexts if contexts is not None else build_run_contexts({stream.key: stream})
    roster = stream.roster
    names = feature_names(roster)
    log = StreamLogger(stream.station_id, stream.lead_time_hours)
    log.info("stream_started", n_rounds=len(stream), n_experts=len(roster))

    ledger = RunLedger(
        station_id=stream.station_id,
        lead_time_hours=stream.lead_time_hours,
        roster=roster,
        strategies=tuple(s for s in config.strategies),
        feature_names=names,
    )
    state = _StreamState.initial(config, roster)
    cumulative: dict[str, float] = dict.fromkeys(ledger.strategies, 0.0)

    for record in stream.records:
        try:
            row = _step(config, roster, state, record, contexts, ledger, log)
        except Exception as exc:
            raise StreamAbortedError(
                stream.station_id, stream.lead_time_hours, record.round_index, exc
            ) from exc
        ledger.append(row)
        for s in ledger.strategies:
            cumulative[s] += row.losses[s]
            ROUNDS_TOTAL.labels(strategy=s).inc()

    for key, count in sorted(ledger.fallbacks.items()):
        component, reason = key.split(":", 1)
        log.log_fallback(component, reason, rounds=count)
    log.log_round_summary(len(ledger), cumulative)
    return ledger


def _classify(
    config: RunConfig,
    state: _StreamState,
    record: ForecastRecord,
    features: FeatureVector,
    names: tuple[str, ...],
    ledger: RunLedger,
    log: StreamLogger,
) -> tuple[bool, int, tuple[float, ...] | None, ShapRecord | None]:
    active = is_active_round(record.round_index, config.activation_round)
    if config.oracle_mode != "none" or not active:
        return False, 2, None, None
    completed = record.round_index - 1
    if state.forest is None or (completed - config.activation_round) % config.retrain_stride == 0:
        with timer("forest_training"):
            state.forest = train_forest(
                state.samples, config.forest, config.rng_seed + record.round_index, names
            )
        RETRAINS_TOTAL.inc()
        if state.forest.constant_class is not None:
            ledger.record_fallback("forest", "single_class_training")
        log.debug("forest_retrained", round_index=record.round_index, n_samples=len(state.samples))
    predicted, margins = predict_class(state.forest, features.values)
    shap = None
    if config.log_shap:
        attribution = tree_shap(state.forest, features.values)
        shap = ShapRecord(
            tuple(float(v) for v in attribution.base_values),
            tuple(tuple(float(v) for v in row) for row in attribution.phi),
        )
    return True, predicted, tuple(float(m) for m in margins), shap


def _step(
    config: RunConfig,
    roster: ExpertRoster,
    state: _StreamState,
    record: ForecastRecord,
    contexts: RunContexts,
    ledger: RunLedger,
    log: StreamLogger,
) -> LedgerRow:
    t = record.round_index
    x = record.predictions
    mask = roster.always_awake_mask
    kf_idx = kalman_expert_index(roster, config.kalman_expert_preference)

    # Step a: features
    y_unbiased = boa_predict(state.unbiased, x[mask])
    features = build_features(
        record, roster, y_unbiased, state.kalman, kf_idx, _run_context(contexts, record)
    )
    if features.degenerate_run_context:
        ledger.record_fallback("features", "degenerate_run_context")

    # Step b: classifier
    active, predicted, margins, shap = _classify(
        config, state, record, features, feature_names(roster), ledger, log
    )

    # Step c: awake set
    true_class: int | None = None
    awake: AwakeSet
    if config.oracle_mode == "none":
        awake = wake_from_class(predicted, t, roster, config.activation_round)
    else:
        true_class = make_label(y_unbiased, record.observation, config.wake_threshold)
        awake = oracle_awake_set(config.oracle_mode, roster, true_class, t, config.activation_round)
        active = is_active_round(t, config.activation_round)
        predicted = awake.predicted_class if active else 2

    if awake_mass_degenerate(state.sleeping.current_weights, awake):
        ledger.record_fallback("sleeping", "degenerate_awake_mass")

    # Step d: predictions
    y_boa = boa_predict(state.boa, x)
    y_sleeping = sef_boa_predict(state.sleeping, x, awake)
    choice = ftl_select(state.ftl)
    choice_regularized = ftl_select(state.ftl_regularized)
    y_fixed_share = fixed_share_predict(state.fixed_share, x)
    weights_before = {
        "boa_unbiased": _expand(state.unbiased.current_weights.values, mask),
        "boa": tuple(state.boa.current_weights.to_list()),
        "boa_sleeping": tuple(state.sleeping.current_weights.to_list()),
        "fixed_share": tuple(state.fixed_share.weights.to_list()),
    }

    # Step e: observation revealed
    y = record.observation

    # Step f: losses and updates
    loss_boa = squared_loss(y_boa, y)
    state.sleeping, sef_round = sef_boa_update(state.sleeping, x, awake, y, prediction=y_sleeping)
    loss_sleeping = sef_round.aggregation_loss
    booked_sleeping = y if awake.suppress_loss else y_sleeping

    def _pick(c: FtlChoice) -> tuple[float, float, tuple[float, ...]]:
        if c is FtlChoice.B:
            return booked_sleeping, loss_sleeping, weights_before["boa_sleeping"]
        return y_boa, loss_boa, weights_before["boa"]

    y_ftl, loss_ftl, w_ftl = _pick(choice)
    y_ftl_reg, loss_ftl_reg, w_ftl_reg = _pick(choice_regularized)
    state.ftl = ftl_update(state.ftl, loss_boa, loss_sleeping)
    state.ftl_regularized = ftl_update(state.ftl_regularized, loss_boa, loss_sleeping)

    predictions = {
        "boa_unbiased": y_unbiased,
        "boa": y_boa,
        "boa_sleeping": booked_sleeping,
        "ftl_boa": y_ftl,
        "ftl_boa_regularized": y_ftl_reg,
        "fixed_share": y_fixed_share,
    }
    losses = {
        "boa_unbiased": squared_loss(y_unbiased, y),
        "boa": loss_boa,
        "boa_sleeping": loss_sleeping,
        "ftl_boa": loss_ftl,
        "ftl_boa_regularized": loss_ftl_reg,
        "fixed_share": squared_loss(y_fixed_share, y),
    }
    weights_before["ftl_boa"] = w_ftl
    weights_before["ftl_boa_regularized"] = w_ftl_reg

    state.unbiased = boa_update(state.unbiased, x[mask], y, prediction=y_unbiased)
    state.boa = boa_update(state.boa, x, y, prediction=y_boa)
    state.fixed_share = fixed_share_update(state.fixed_share, x, y)
    if true_class is None:
        true_class = make_label(y_unbiased, y, config.wake_threshold)
    state.samples.append(
        TrainingSample(
            features.as_tuple(),
            true_class,
            replication_for(y_unbiased, y, config.wake_threshold, config.oversample_factor),
        )
    )
    state.kalman = kalman_step(state.kalman, float(x[kf_idx]), y)[0]

    # Step g: ledger row
    enabled = config.strategies
    return LedgerRow(
        round_index=t,
        date=record.date,
        observation=y,
        expert_predictions=record.expert_predictions,
        predictions={s: predictions[s] for s in enabled},
        losses={s: losses[s] for s in enabled},
        weights={s: weights_before[s] for s in enabled},
        awake_mask=awake.mask,
        awake_source=awake.source.value,
        classifier_active=active,
        predicted_class=predicted,
        true_class=true_class,
        sef_prediction=y_sleeping,
        sef_aggregation_loss=loss_sleeping,
        sef_expert_losses=sef_round.per_expert_sef_loss,
        sef_predictions=sef_round.sef_inputs,
        expert_losses=tuple(squared_loss(float(v), y) for v in x),
        ftl_choice={"ftl_boa": choice.value, "ftl_boa_regularized": choice_regularized.value},
        class_scores=margins,
        features=features.as_tuple(),
        shap=shap,
    )


# ---------------------------------------------------------------------------
# All streams
# ---------------------------------------------------------------------------


def _run_one(
    config: RunConfig, stream: ForecastStream, contexts: RunContexts
) -> tuple[StreamKey, RunLedger | None, str | None]:
    try:
        return stream.key, run_stream(config, stream, contexts), None
    except (StreamAbortedError, ValueError) as exc:
        return stream.key, None, str(exc)


def run_all(
    config: RunConfig, streams: dict[StreamKey, ForecastStream]
) -> tuple[dict[StreamKey, RunLedger], RunOutput]:
    """
    Run every stream and collect the ledgers.

    Returns:
        The ledgers of the successful streams keyed by (station, lead time),
        and a :class:`RunOutput` whose status is ``"failed"`` if any stream failed.
    """
    output = RunOutput(
        layer_version=LAYER_VERSION,
        config_summary={
            "oracle_mode": config.oracle_mode,
            "strategies": list(config.strategies),
            "activation_round": config.activation_round,
            "rng_seed": config.rng_seed,
            "n_jobs": config.n_jobs,
        },
    )
    contexts = build_run_contexts(streams)
    keys = sorted(streams)
    with timer("run_all") as t_all:
        if config.n_jobs > 1 and len(keys) > 1:
            with ProcessPoolExecutor(max_workers=config.n_jobs) as pool:
                futures = [pool.submit(_run_one, config, streams[k], contexts) for k in keys]
                results = [f.result() for f in futures]
        else:
            results = [_run_one(config, streams[k], contexts) for k in keys]
    output.record_timing("run_all", t_all.elapsed_ms)

    ledgers: dict[StreamKey, RunLedger] = {}
    for key, ledger, error in sorted(results, key=lambda r: r[0]):
        if ledger is not None:
            ledgers[key] = ledger
            output.add_stream(key[0], key[1], len(ledger), "ok")
            for reason, count in sorted(ledger.fallbacks.items()):
                output.add_fallback(f"{key[0]}/{key[1]}: {reason} ({count} rounds)")
            STREAM_RUNS.labels(outcome="ok").inc()
        else:
            output.add_stream(key[0], key[1], 0, "failed")
            output.add_error("run_stream", error or "unknown error", station_id=key[0], lead_time=key[1])
            STREAM_RUNS.labels(outcome="failed").inc()
            logger.error("stream_failed", station_id=key[0], lead_time=key[1], error=error)
    return ledgers, output
