"""
Structured logging for the expert-aggregation layer.

Events are emitted as single-line JSON through ``structlog`` so they are
consumable by any structured-log aggregator without fragile text parsing.

Reference: expert-aggregation-layer.md §Logging
"""
from __future__ import annotations

import logging
import sys
from typing import Any

import structlog
from structlog._config import BoundLoggerLazyProxy

_CONFIGURED = False


def configure_logging(level: int | str = logging.INFO) -> None:
    """
    Configure structlog with a JSON renderer on stderr.

    Idempotent: only the first call changes the configuration.
    """
    global _CONFIGURED
    if _CONFIGURED:
        return
    if isinstance(level, str):
        level = int(logging.getLevelName(level.upper()))
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            structlog.processors.format_exc_info,
            structlog.processors.JSONRenderer(sort_keys=True),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        # sys.stderr is resolved per logger, not at configure time
        logger_factory=lambda *_: structlog.PrintLogger(sys.stderr),
        cache_logger_on_first_use=False,
    )
    _CONFIGURED = True


def get_logger(name: str = "expert_aggregation") -> Any:
    """Return a structlog logger bound to *name*."""
    # ``get_logger(logger=...)`` collides with wrap_logger's own ``logger``
    # parameter, so build the lazy proxy directly with the initial values.
    return BoundLoggerLazyProxy(None, initial_values={"logger": name})


# ---------------------------------------------------------------------------
# Context-enriched log helper
# ---------------------------------------------------------------------------


class StreamLogger:
    """
    Logger that attaches the (station, lead time) of a stream to every event.

    Usage::

        log = StreamLogger("74056001", 30)
        log.info("forest_retrained", round_index=140, n_samples=139)
    """

    def __init__(self, station_id: str, lead_time: int, logger: Any | None = None) -> None:
        self._logger = (logger or get_logger()).bind(
            station_id=station_id, lead_time=lead_time
        )

    def debug(self, event: str, **kw: Any) -> None:
        self._logger.debug(event, **kw)

    def info(self, event: str, **kw: Any) -> None:
        self._logger.info(event, **kw)

    def warning(self, event: str, **kw: Any) -> None:
        self._logger.warning(event, **kw)

    def log_round_summary(self, n_rounds: int, cumulative_losses: dict[str, float]) -> None:
        """Log the per-strategy cumulative losses at the end of a stream."""
        self.info(
            "stream_completed",
            n_rounds=n_rounds,
            cumulative_losses={k: round(v, 6) for k, v in sorted(cumulative_losses.items())},
        )

    def log_fallback(self, component: str, reason: str, **kw: Any) -> None:
        """Log a fallback activation in a structured way."""
        self.warning("fallback_activated", component=component, reason=reason, **kw)
