"""
Prometheus metrics for the expert-aggregation layer.

All metrics are **optional**: if ``prometheus_client`` is not installed the
module configures itself with no-op stubs so the rest of the codebase never
needs to conditional-import.

Exported metrics
----------------
``boas_rounds_total``              counter   online rounds processed, by strategy
``boas_retrains_total``            counter   boosted-forest retrainings
``boas_degenerate_rounds_total``   counter   degenerate rounds by kind
``boas_stream_runs_total``         counter   stream runs by outcome (ok/failed)
``boas_step_latency_seconds``      histogram latency per pipeline component (seconds)

Reference: expert-aggregation-layer.md §Metrics
"""
from __future__ import annotations

import time
from typing import Any

try:
    from prometheus_client import Counter, Histogram

    _PROMETHEUS_AVAILABLE = True
except ImportError:
    _PROMETHEUS_AVAILABLE = False

    class _NoOpLabels:
        """No-op labels object returned by no-op metric stubs."""

        def inc(self, amount: float = 1) -> None:
            pass

        def observe(self, amount: float) -> None:
            pass

    class _NoOpMetric:
        """No-op metric stub (Counter / Histogram)."""

        def labels(self, **_kwargs: Any) -> _NoOpLabels:
            return _NoOpLabels()

        def inc(self, amount: float = 1) -> None:
            pass

        def observe(self, amount: float) -> None:
            pass

    def Counter(  # type: ignore[no-redef]  # noqa: N802
        name: str, documentation: str, labelnames: tuple[str, ...] = ()
    ) -> Any:
        return _NoOpMetric()

    def Histogram(  # type: ignore[no-redef]  # noqa: N802
        name: str,
        documentation: str,
        labelnames: tuple[str, ...] = (),
        buckets: Any = None,
    ) -> Any:
        return _NoOpMetric()


# ---------------------------------------------------------------------------
# Metric definitions
# ---------------------------------------------------------------------------

ROUNDS_TOTAL: Any = Counter(
    "boas_rounds_total",
    "Online rounds processed, by aggregation strategy",
    labelnames=("strategy",),
)

RETRAINS_TOTAL: Any = Counter(
    "boas_retrains_total",
    "Number of boosted-forest retrainings",
)

DEGENERATE_ROUNDS: Any = Counter(
    "boas_degenerate_rounds_total",
    "Degenerate rounds (zero awake mass, single-class training, empty run context)",
    labelnames=("kind",),
)

STREAM_RUNS: Any = Counter(
    "boas_stream_runs_total",
    "Stream runs by outcome (ok/failed)",
    labelnames=("outcome",),
)

STEP_LATENCY: Any = Histogram(
    "boas_step_latency_seconds",
    "Per-component latency in seconds",
    labelnames=("component",),
    buckets=(0.001, 0.01, 0.1, 0.5, 1.0, 5.0, 30.0, 120.0),
)


# ---------------------------------------------------------------------------
# Helper: context manager for timing a block
# ---------------------------------------------------------------------------


class _Timer:
    """Context manager that records elapsed time and emits the latency histogram."""

    def __init__(self, component: str) -> None:
        self._component = component
        self._start: float = 0.0
        self.elapsed_ms: float = 0.0

    def __enter__(self) -> _Timer:
        self._start = time.perf_counter()
        return self

    def __exit__(self, *_: Any) -> None:
        self.elapsed_ms = (time.perf_counter() - self._start) * 1000
        STEP_LATENCY.labels(component=self._component).observe(self.elapsed_ms / 1000)


def timer(component: str) -> _Timer:
    """Return a context manager that times a pipeline component and records latency."""
    return _Timer(component)


def record_degenerate(kind: str) -> None:
    DEGENERATE_ROUNDS.labels(kind=kind).inc()
