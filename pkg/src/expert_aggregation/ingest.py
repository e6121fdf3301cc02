"""
CSV ingestion into per-(station, lead time) forecast streams.

The header declares ``date, station_id, lead_time, obs, first_lt_obs`` and one
column per expert. An expert whose column is blank on every row of a
(station, lead time) pair is unavailable at that lead time and dropped from
that stream's roster; a column blank on only some rows is an error.

Every problem found is collected and raised together as an
:class:`IngestionError` carrying ``{line, field, message}`` dicts.

Reference: expert-aggregation-layer.md §Input contract
"""
from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.config import RunConfig
from src.expert_aggregation.features import expert_variance
from src.models.forecast import ExpertRoster, ForecastRecord, ForecastStream, StreamKey
from src.models.input_schema import REQUIRED_COLUMNS, ForecastRow
from src.observability.logging import get_logger

logger = get_logger(__name__)

RunContexts = dict[tuple[str, str], dict[int, float]]


class IngestionError(ValueError):
    """Raised when the input table cannot be turned into valid streams."""

    def __init__(self, errors: list[dict[str, Any]]) -> None:
        self.ingestion_errors = errors
        messages = "; ".join(f"line {e['line']} {e['field']}: {e['message']}" for e in errors[:20])
        more = f" (+{len(errors) - 20} more)" if len(errors) > 20 else ""
        super().__init__(f"Input ingestion failed: {messages}{more}")


def _error(line: int, field: str, message: str) -> dict[str, Any]:
    return {"line": line, "field": field, "message": message}


def _normalise_date(ts: pd.Timestamp) -> str:
    return ts.strftime("%Y-%m-%d") if ts == ts.normalize() else ts.isoformat()


def _read_table(path: str | Path) -> pd.DataFrame:
    p = Path(path)
    if not p.is_file():
        raise IngestionError([_error(0, "path", f"no such file: {p}")])
    try:
        df = pd.read_csv(p, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise IngestionError([_error(0, "file", "empty file")]) from exc
    except pd.errors.ParserError as exc:
        raise IngestionError([_error(0, "file", f"unparseable CSV: {exc}")]) from exc
    missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
    if missing:
        raise IngestionError([_error(1, c, "missing required column") for c in missing])
    if df.empty:
        raise IngestionError([_error(1, "file", "no data rows")])
    return df


def ingest_csv(path: str | Path, config: RunConfig | None = None) -> dict[StreamKey, ForecastStream]:
    """Read *path* into streams keyed by (station_id, lead_time), sorted by key."""
    config = config or RunConfig()
    df = _read_table(path)
    expert_cols = [c for c in df.columns if c not in REQUIRED_COLUMNS]
    if not expert_cols:
        raise IngestionError([_error(1, "header", "no expert columns")])

    errors: list[dict[str, Any]] = []
    groups: dict[StreamKey, list[tuple[int, pd.Timestamp, ForecastRow, dict[str, float | None]]]]
    groups = defaultdict(list)

    for pos, raw in enumerate(df.to_dict("records")):
        line = pos + 2
        try:
            row = ForecastRow.model_validate(raw)
        except ValidationError as exc:
            for err in exc.errors():
                field = ".".join(str(loc) for loc in err["loc"])
                errors.append(_error(line, field, err["msg"]))
            continue
        experts: dict[str, float | None] = {}
        for col in expert_cols:
            text = str(raw[col]).strip()
            if text == "":
                experts[col] = None
                continue
            try:
                value = float(text)
            except ValueError:
                errors.append(_error(line, col, f"not a number: {text!r}"))
                continue
            if not math.isfinite(value):
                errors.append(_error(line, col, "prediction must be finite"))
                continue
            experts[col] = value
        groups[(row.station_id, row.lead_time)].append((line, pd.Timestamp(row.date), row, experts))

    streams: dict[StreamKey, ForecastStream] = {}
    step = pd.Timedelta(config.run_step)
    for key in sorted(groups):
        stream = _build_stream(key, groups[key], expert_cols, step, config, errors)
        if stream is not None:
            streams[key] = stream

    if errors:
        errors.sort(key=lambda e: (e["line"], e["field"]))
        raise IngestionError(errors)
    logger.info("input_ingested", path=str(path), n_streams=len(streams), n_rows=int(len(df)))
    return streams


def _build_stream(
    key: StreamKey,
    rows: list[tuple[int, pd.Timestamp, ForecastRow, dict[str, float | None]]],
    expert_cols: list[str],
    step: pd.Timedelta,
    config: RunConfig,
    errors: list[dict[str, Any]],
) -> ForecastStream | None:
    rows = sorted(rows, key=lambda r: (r[1], r[0]))

    for (line_a, ts_a, _, _), (line_b, ts_b, _, _) in zip(rows, rows[1:]):
        if ts_a == ts_b:
            errors.append(
                _error(line_b, "date", f"duplicate (station, lead_time, date) {key} {ts_b.date()} (first at line {line_a})")
            )
        elif ts_b - ts_a != step:
            errors.append(_error(line_b, "date", f"gap in stream {key} between {ts_a} and {ts_b}"))

    kept = []
    for col in expert_cols:
        blank = [line for line, _, _, experts in rows if experts.get(col, 0.0) is None]
        if len(blank) == len(rows):
            continue
        if blank:
            errors.extend(_error(line, col, f"missing prediction for expert at lead time {key[1]}") for line in blank)
        kept.append(col)

    if not kept:
        errors.append(_error(rows[0][0], "experts", f"no expert available for stream {key}"))
    roster = ExpertRoster.from_specs(config.expert_spec(c) for c in kept) if kept else None
    if roster is not None and not roster.always_awake_mask.any():
        errors.append(_error(rows[0][0], "experts", f"stream {key} has no unbiased expert"))
    if errors or roster is None:
        return None

    records = [
        ForecastRecord(
            round_index=t,
            station_id=key[0],
            lead_time_hours=key[1],
            date=_normalise_date(ts),
            observation=row.obs,
            expert_predictions=tuple(float(experts[c]) for c in kept),  # type: ignore[arg-type]
            first_leadtime_observation=row.first_lt_obs,
        )
        for t, (_, ts, row, experts) in enumerate(rows, start=1)
    ]
    return ForecastStream(key[0], key[1], roster, records)


def build_run_contexts(streams: dict[StreamKey, ForecastStream]) -> RunContexts:
    """Variance across experts of every lead time, grouped by (station, run date)."""
    contexts: RunContexts = defaultdict(dict)
    for (station, lead_time), stream in sorted(streams.items()):
        for rec in stream.records:
            contexts[(station, rec.date)][lead_time] = expert_variance(np.asarray(rec.expert_predictions))
    return dict(contexts)
