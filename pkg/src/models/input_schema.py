"""
Input schema for one CSV row of the forecast table.

Validates the mandatory columns of a row; expert columns are checked by the
ingestion step because their availability depends on the lead time.

Reference: expert-aggregation-layer.md §Input contract
"""
from __future__ import annotations

import math

import pandas as pd
from pydantic import BaseModel, Field, field_validator

REQUIRED_COLUMNS: tuple[str, ...] = ("date", "station_id", "lead_time", "obs", "first_lt_obs")


class ForecastRow(BaseModel):
    """Validated mandatory part of one input row."""

    model_config = {"frozen": True, "extra": "ignore"}

    date: str = Field(..., min_length=1, description="Run date (ISO-8601)")
    station_id: str = Field(..., min_length=1, description="Opaque station identifier")
    lead_time: int = Field(..., ge=0, description="Lead time in hours")
    obs: float = Field(..., description="Observed 2 m temperature (°C)")
    first_lt_obs: float = Field(
        ..., description="Observation at the models' first lead time (°C)"
    )

    @field_validator("date")
    @classmethod
    def _validate_date(cls, v: str) -> str:
        try:
            pd.Timestamp(v)
        except (ValueError, TypeError) as exc:
            raise ValueError(f"unparseable date {v!r}") from exc
        return v.strip()

    @field_validator("station_id")
    @classmethod
    def _validate_station(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("station_id must not be blank")
        return v.strip()

    @field_validator("obs", "first_lt_obs")
    @classmethod
    def _validate_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("temperature must be finite")
        return v
