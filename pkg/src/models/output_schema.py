"""
Run output envelope.

Summarises a multi-stream run: overall status, per-stream outcome, errors and
component timings. The envelope is **always valid JSON**, even when every
stream failed (``status`` is then ``"failed"``).

Reference: expert-aggregation-layer.md §Output contract
"""
from __future__ import annotations

import json
import time
from typing import Any


class RunOutput:
    """
    Mutable envelope built incrementally by the run orchestrator.

    Serialised via :meth:`to_dict` / :meth:`to_json` once processing is complete.
    """

    def __init__(self, layer_version: str, config_summary: dict[str, Any] | None = None) -> None:
        self._layer_version = layer_version
        self._config_summary: dict[str, Any] = config_summary or {}

        self._streams: list[dict[str, Any]] = []
        self._errors: list[dict[str, Any]] = []
        self._fallbacks: list[str] = []
        self._status: str = "ok"
        self._outputs: list[str] = []

        # Component-level timings (ms)
        self._timings: dict[str, float] = {}
        self._start_ts: float = time.perf_counter()

    # ------------------------------------------------------------------
    # Builder methods
    # ------------------------------------------------------------------

    def add_stream(self, station_id: str, lead_time: int, n_rounds: int, status: str) -> None:
        self._streams.append(
            {"station_id": station_id, "lead_time": lead_time, "n_rounds": n_rounds, "status": status}
        )
        if status != "ok":
            self._status = "failed"

    def add_error(self, component: str, message: str, **context: Any) -> None:
        """Record an error; the run is marked failed."""
        self._errors.append({"component": component, "message": message, **context})
        self._status = "failed"

    def add_fallback(self, description: str) -> None:
        """Register a fallback activation (e.g. degenerate awake mass)."""
        self._fallbacks.append(description)

    def add_output(self, path: str) -> None:
        self._outputs.append(path)

    def set_failed(self, reason: str) -> None:
        """Mark the whole run as hard-failed."""
        self._status = "failed"
        self._errors.append({"component": "pipeline", "message": reason})

    def record_timing(self, component: str, elapsed_ms: float) -> None:
        """Record elapsed milliseconds for a named component."""
        self._timings[component] = round(elapsed_ms, 3)

    @property
    def ok(self) -> bool:
        return self._status == "ok"

    @property
    def errors(self) -> list[dict[str, Any]]:
        return list(self._errors)

    # ------------------------------------------------------------------
    # Serialisation
    # ------------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        """Return a plain dict representing the full output contract."""
        total_ms = round((time.perf_counter() - self._start_ts) * 1000, 3)
        return {
            "streams": self._streams,
            "meta": {
                "status": self._status,
                "layer_version": self._layer_version,
                "processing_time_ms": total_ms,
                "component_timings_ms": self._timings,
                "config": self._config_summary,
                "fallbacks": self._fallbacks,
                "stream_count": len(self._streams),
                "outputs": self._outputs,
            },
            "errors": self._errors,
        }

    def to_json(self, indent: int | None = None) -> str:
        """Serialise to a JSON string. Always succeeds (safe fallback on error)."""
        try:
            return json.dumps(self.to_dict(), ensure_ascii=False, indent=indent, default=str)
        except (TypeError, ValueError) as exc:
            return json.dumps(
                {
                    "streams": [],
                    "meta": {"status": "failed", "layer_version": self._layer_version},
                    "errors": [{"component": "serialiser", "message": str(exc)}],
                },
                ensure_ascii=False,
            )

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"RunOutput(status={self._status!r},"
            f" streams={len(self._streams)},"
            f" errors={len(self._errors)})"
        )
