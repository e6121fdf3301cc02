"""Domain models: public API."""
from src.models.awake import CLASSES, AwakeSet, AwakeSource
from src.models.errors import DomainError
from src.models.forecast import ExpertId, ExpertRoster, ForecastRecord, ForecastStream, StreamKey
from src.models.input_schema import ForecastRow
from src.models.ledger import LedgerRow, RunLedger, ShapRecord
from src.models.output_schema import RunOutput
from src.models.weights import WeightVector

__all__ = [
    "CLASSES",
    "AwakeSet",
    "AwakeSource",
    "DomainError",
    "ExpertId",
    "ExpertRoster",
    "ForecastRecord",
    "ForecastRow",
    "ForecastStream",
    "LedgerRow",
    "RunLedger",
    "RunOutput",
    "ShapRecord",
    "StreamKey",
    "WeightVector",
]
