"""Expert aggregation sub-package: public API."""
from src.expert_aggregation.grid_search import FULL_GRID, grid_search
from src.expert_aggregation.ingest import IngestionError, build_run_contexts, ingest_csv
from src.expert_aggregation.pipeline import StreamAbortedError, run_all, run_stream
from src.expert_aggregation.regret_audit import audit_compound_bound
from src.expert_aggregation.reports import emit_reports, load_ledgers
from src.expert_aggregation.treeshap import shap_dependence_export, tree_shap

__all__ = [
    "FULL_GRID",
    "IngestionError",
    "StreamAbortedError",
    "audit_compound_bound",
    "build_run_contexts",
    "emit_reports",
    "grid_search",
    "ingest_csv",
    "load_ledgers",
    "run_all",
    "run_stream",
    "shap_dependence_export",
    "tree_shap",
]
