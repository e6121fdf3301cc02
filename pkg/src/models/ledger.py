"""
Per-round run ledger of one (station, lead time) stream.

The ledger is append-only and serializes to JSON losslessly (floats are
written with ``repr`` precision), so audits and reports can be recomputed from
disk.

Reference: expert-aggregation-layer.md §Run ledger
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from src.models.errors import DomainError
from src.models.forecast import ExpertRoster

LEDGER_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ShapRecord:
    """Per-class TreeSHAP attribution of one round's class margins."""

    base_values: tuple[float, ...]
    phi: tuple[tuple[float, ...], ...]
    """One row per class, one column per feature."""


@dataclass(frozen=True)
class LedgerRow:
    round_index: int
    date: str
    observation: float
    expert_predictions: tuple[float, ...]
    predictions: dict[str, float]
    losses: dict[str, float]
    weights: dict[str, tuple[float, ...]]
    """Weights each strategy used to predict this round (before the update)."""

    awake_mask: tuple[bool, ...]
    awake_source: str
    classifier_active: bool
    predicted_class: int
    true_class: int
    sef_prediction: float
    sef_aggregation_loss: float
    sef_expert_losses: tuple[float, ...]
    sef_predictions: tuple[float, ...]
    expert_losses: tuple[float, ...]
    ftl_choice: dict[str, str] = field(default_factory=dict)
    class_scores: tuple[float, ...] | None = None
    features: tuple[float, ...] | None = None
    shap: ShapRecord | None = None

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> LedgerRow:
        shap = raw.get("shap")
        return cls(
            round_index=int(raw["round_index"]),
            date=str(raw["date"]),
            observation=float(raw["observation"]),
            expert_predictions=tuple(raw["expert_predictions"]),
            predictions=dict(raw["predictions"]),
            losses=dict(raw["losses"]),
            weights={k: tuple(v) for k, v in raw["weights"].items()},
            awake_mask=tuple(bool(a) for a in raw["awake_mask"]),
            awake_source=str(raw["awake_source"]),
            classifier_active=bool(raw["classifier_active"]),
            predicted_class=int(raw["predicted_class"]),
            true_class=int(raw["true_class"]),
            sef_prediction=float(raw["sef_prediction"]),
            sef_aggregation_loss=float(raw["sef_aggregation_loss"]),
            sef_expert_losses=tuple(raw["sef_expert_losses"]),
            sef_predictions=tuple(raw["sef_predictions"]),
            expert_losses=tuple(raw["expert_losses"]),
            ftl_choice=dict(raw.get("ftl_choice", {})),
            class_scores=tuple(raw["class_scores"]) if raw.get("class_scores") else None,
            features=tuple(raw["features"]) if raw.get("features") else None,
            shap=(
                ShapRecord(tuple(shap["base_values"]), tuple(tuple(p) for p in shap["phi"]))
                if shap
                else None
            ),
        )


@dataclass
class RunLedger:
    """Exactly one :class:`LedgerRow` per round of one stream."""

    station_id: str
    lead_time_hours: int
    roster: ExpertRoster
    strategies: tuple[str, ...]
    feature_names: tuple[str, ...] = ()
    rows: list[LedgerRow] = field(default_factory=list)
    fallbacks: dict[str, int] = field(default_factory=dict)
    """Rounds per `component:reason` fallback taken while the stream ran."""

    def record_fallback(self, component: str, reason: str) -> None:
        key = f"{component}:{reason}"
        self.fallbacks[key] = self.fallbacks.get(key, 0) + 1

    def append(self, row: LedgerRow) -> None:
        expected = len(self.rows) + 1
        if row.round_index != expected:
            raise DomainError(
                f"ledger {self.key}: round {row.round_index} appended where {expected} expected"
            )
        self.rows.append(row)

    @property
    def key(self) -> tuple[str, int]:
        return (self.station_id, self.lead_time_hours)

    def __len__(self) -> int:
        return len(self.rows)

    # ------------------------------------------------------------------
    # Column accessors
    # ------------------------------------------------------------------

    def observations(self) -> NDArray[np.float64]:
        return np.array([r.observation for r in self.rows], dtype=np.float64)

    def strategy_predictions(self, strategy: str) -> NDArray[np.float64]:
        return np.array([r.predictions[strategy] for r in self.rows], dtype=np.float64)

    def strategy_losses(self, strategy: str) -> NDArray[np.float64]:
        return np.array([r.losses[strategy] for r in self.rows], dtype=np.float64)

    def strategy_errors(self, strategy: str) -> NDArray[np.float64]:
        return self.strategy_predictions(strategy) - self.observations()

    def active_rows(self) -> list[LedgerRow]:
        return [r for r in self.rows if r.classifier_active]

    # ------------------------------------------------------------------
    # Serialisation
    # ------------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": LEDGER_FORMAT_VERSION,
            "station_id": self.station_id,
            "lead_time_hours": self.lead_time_hours,
            "roster": self.roster.to_specs(),
            "strategies": list(self.strategies),
            "feature_names": list(self.feature_names),
            "rows": [asdict(r) for r in self.rows],
            "fallbacks": dict(sorted(self.fallbacks.items())),
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> RunLedger:
        version = raw.get("format_version")
        if version != LEDGER_FORMAT_VERSION:
            raise DomainError(f"unsupported ledger format_version {version!r}")
        return cls(
            station_id=str(raw["station_id"]),
            lead_time_hours=int(raw["lead_time_hours"]),
            roster=ExpertRoster.from_spec_dicts(raw["roster"]),
            strategies=tuple(raw["strategies"]),
            feature_names=tuple(raw.get("feature_names", ())),
            rows=[LedgerRow.from_dict(r) for r in raw["rows"]],
            fallbacks={str(k): int(v) for k, v in raw.get("fallbacks", {}).items()},
        )

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> RunLedger:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
