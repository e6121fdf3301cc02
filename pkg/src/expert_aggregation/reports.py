"""
Report emission from completed run ledgers.

Files written under the output directory (all CSV with a header row, JSON
with sorted keys; nothing time-dependent, so a rerun is byte-identical):

  ledgers/<station>_<lead>.json        full per-round ledger
  scores_by_stream.csv                 one row per (stream, strategy)
  scores_pooled.csv                    one row per strategy, errors pooled over streams
  scores.json                          both of the above
  diff_q95.csv                         Q95|e| of BOA minus each SEF-based strategy, per stream
  diff_q95_by_lead_time.csv            count, mean and quartiles of the differences
  diff_q95_by_station.csv
  weights/<station>_<lead>.csv         weight trajectories with the excess loss of each expert
  awake_weight_summary.csv             weight distribution of each expert on its awake rounds
  shap/<station>_<lead>.csv            one row per (round, class, feature)
  shap_summary.csv                     mean |phi| per predicted class and feature
  regret_audit.json                    compound-bound audit per stream

Reference: expert-aggregation-layer.md §Reports
"""
from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.config import RunConfig
from src.expert_aggregation.regret_audit import AuditError, audit_compound_bound
from src.expert_aggregation.scores import ScoreReport, score_report
from src.expert_aggregation.skill_scores import ConfusionMatrix
from src.models.forecast import StreamKey
from src.models.ledger import RunLedger
from src.observability.logging import get_logger

logger = get_logger(__name__)

REFERENCE_STRATEGY = "boa"
DIFF_Q95_AGAINST: tuple[str, ...] = ("boa_sleeping", "ftl_boa", "ftl_boa_regularized")
_FTL_STRATEGIES = ("ftl_boa", "ftl_boa_regularized")
_SUMMARY_QUANTILES = {"q25": 0.25, "median": 0.5, "q75": 0.75}


class ReportError(ValueError):
    """The output directory cannot be written."""


def stream_tag(key: StreamKey) -> str:
    station, lead = key
    safe = "".join(c if c.isalnum() or c in "-." else "_" for c in station)
    return f"{safe}_{lead:03d}"


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


def classifier_matrix(ledgers: Iterable[RunLedger]) -> ConfusionMatrix:
    """Predicted vs true class over the rounds where the classifier was active."""
    counts = np.zeros((3, 3), dtype=np.int64)
    for ledger in ledgers:
        for row in ledger.active_rows():
            counts[row.predicted_class - 1, row.true_class - 1] += 1
    return ConfusionMatrix(counts)


def ftl_switches(ledger: RunLedger, strategy: str) -> int:
    choices = [r.ftl_choice.get(strategy) for r in ledger.rows]
    return sum(1 for a, b in zip(choices, choices[1:]) if a != b)


def _report_columns(report: ScoreReport) -> dict[str, Any]:
    pss = list(report.pss_per_threshold) + [None] * (2 - len(report.pss_per_threshold))
    return {
        "n": report.n,
        "rmse": report.rmse,
        "q95_abs_error": report.q95_abs_error,
        "ess": report.ess,
        "ess_collapsed": int(report.ess_collapsed),
        "pss_1": pss[0],
        "pss_2": pss[1],
        "hit_rate_1": report.hit_rates.get(1),
        "hit_rate_3": report.hit_rates.get(3),
    }


def stream_scores(ledger: RunLedger) -> pd.DataFrame:
    """One row per strategy of the stream; classifier columns describe the stream's wake-up run."""
    matrix = classifier_matrix([ledger])
    rows = []
    for strategy in ledger.strategies:
        report = score_report(ledger.strategy_errors(strategy), matrix)
        rows.append(
            {
                "station_id": ledger.station_id,
                "lead_time": ledger.lead_time_hours,
                "strategy": strategy,
                **_report_columns(report),
                "ftl_switches": ftl_switches(ledger, strategy) if strategy in _FTL_STRATEGIES else None,
            }
        )
    return pd.DataFrame(rows)


def pooled_scores(ledgers: Mapping[StreamKey, RunLedger]) -> pd.DataFrame:
    ordered = [ledgers[k] for k in sorted(ledgers)]
    matrix = classifier_matrix(ordered)
    strategies = [s for s in ordered[0].strategies if all(s in lg.strategies for lg in ordered)]
    rows = []
    for strategy in strategies:
        errors = np.concatenate([lg.strategy_errors(strategy) for lg in ordered])
        rows.append({"strategy": strategy, **_report_columns(score_report(errors, matrix))})
    return pd.DataFrame(rows)


def diff_q95_table(ledgers: Mapping[StreamKey, RunLedger]) -> pd.DataFrame:
    """``Q95|e|`` of BOA minus that of each SEF-based strategy; positive favours the latter."""
    rows = []
    for key in sorted(ledgers):
        ledger = ledgers[key]
        if REFERENCE_STRATEGY not in ledger.strategies:
            continue
        reference = score_report(ledger.strategy_errors(REFERENCE_STRATEGY)).q95_abs_error
        for other in DIFF_Q95_AGAINST:
            if other not in ledger.strategies:
                continue
            q95 = score_report(ledger.strategy_errors(other)).q95_abs_error
            rows.append(
                {
                    "station_id": key[0],
                    "lead_time": key[1],
                    "comparison": f"{REFERENCE_STRATEGY}-{other}",
                    "q95_reference": reference,
                    "q95_other": q95,
                    "diff_q95": reference - q95,
                }
            )
    return pd.DataFrame(
        rows,
        columns=["station_id", "lead_time", "comparison", "q95_reference", "q95_other", "diff_q95"],
    )


def summarize(values: pd.Series) -> dict[str, Any]:
    arr = values.to_numpy(dtype=np.float64)
    out: dict[str, Any] = {"count": int(arr.size), "mean": float(arr.mean())}
    for name, q in _SUMMARY_QUANTILES.items():
        out[name] = float(np.quantile(arr, q, method="linear"))
    return out


def diff_q95_grouped(diffs: pd.DataFrame, by: str) -> pd.DataFrame:
    rows = [
        {"comparison": comparison, by: group, **summarize(frame["diff_q95"])}
        for (comparison, group), frame in diffs.groupby(["comparison", by], sort=True)
    ]
    return pd.DataFrame(rows, columns=["comparison", by, "count", "mean", *_SUMMARY_QUANTILES])


def weight_trajectory(ledger: RunLedger) -> pd.DataFrame:
    """
    Long table of every strategy's pre-update weights.

    ``excess_loss`` is the expert's loss minus the weighted mean loss of all
    experts under that strategy's weights; persistently positive values keep
    an expert's weight low.
    """
    names = ledger.roster.names
    rows = []
    for row in ledger.rows:
        losses = np.asarray(row.expert_losses, dtype=np.float64)
        for strategy in ledger.strategies:
            w = np.asarray(row.weights[strategy], dtype=np.float64)
            mixture = float(w @ losses)
            for i, name in enumerate(names):
                rows.append(
                    {
                        "round_index": row.round_index,
                        "date": row.date,
                        "strategy": strategy,
                        "expert": name,
                        "weight": float(w[i]),
                        "awake": int(row.awake_mask[i]),
                        "excess_loss": float(losses[i]) - mixture,
                    }
                )
    return pd.DataFrame(rows)


def awake_weight_summary(ledgers: Mapping[StreamKey, RunLedger]) -> pd.DataFrame:
    collected: dict[tuple[str, str], list[float]] = {}
    for key in sorted(ledgers):
        ledger = ledgers[key]
        names = ledger.roster.names
        for row in ledger.rows:
            for strategy in ledger.strategies:
                weights = row.weights[strategy]
                for i, name in enumerate(names):
                    if row.awake_mask[i]:
                        collected.setdefault((strategy, name), []).append(float(weights[i]))
    out = []
    for (strategy, name), values in sorted(collected.items()):
        arr = np.asarray(values)
        out.append(
            {
                "strategy": strategy,
                "expert": name,
                "n": int(arr.size),
                "min": float(arr.min()),
                **{k: float(np.quantile(arr, q, method="linear")) for k, q in _SUMMARY_QUANTILES.items()},
                "max": float(arr.max()),
            }
        )
    return pd.DataFrame(
        out, columns=["strategy", "expert", "n", "min", *_SUMMARY_QUANTILES, "max"]
    )


def shap_table(ledger: RunLedger) -> pd.DataFrame:
    rows = []
    for row in ledger.rows:
        if row.shap is None or row.features is None:
            continue
        for k, phi in enumerate(row.shap.phi):
            for j, name in enumerate(ledger.feature_names):
                rows.append(
                    {
                        "round_index": row.round_index,
                        "class": k + 1,
                        "predicted_class": row.predicted_class,
                        "feature": name,
                        "feature_value": float(row.features[j]),
                        "phi": float(phi[j]),
                        "base_value": float(row.shap.base_values[k]),
                    }
                )
    return pd.DataFrame(
        rows,
        columns=["round_index", "class", "predicted_class", "feature", "feature_value", "phi", "base_value"],
    )


def shap_summary(ledgers: Mapping[StreamKey, RunLedger]) -> pd.DataFrame:
    """Mean |phi| of the predicted class's margin, by predicted class and feature."""
    sums: dict[tuple[int, str], list[float]] = {}
    for key in sorted(ledgers):
        ledger = ledgers[key]
        for row in ledger.rows:
            if row.shap is None:
                continue
            phi = row.shap.phi[row.predicted_class - 1]
            for j, name in enumerate(ledger.feature_names):
                sums.setdefault((row.predicted_class, name), []).append(abs(float(phi[j])))
    rows = [
        {"predicted_class": c, "feature": name, "n": len(v), "mean_abs_phi": float(np.mean(v))}
        for (c, name), v in sorted(sums.items())
    ]
    return pd.DataFrame(rows, columns=["predicted_class", "feature", "n", "mean_abs_phi"])


def regret_audits(ledgers: Mapping[StreamKey, RunLedger]) -> list[dict[str, Any]]:
    out = []
    for key in sorted(ledgers):
        ledger = ledgers[key]
        entry: dict[str, Any] = {"station_id": key[0], "lead_time": key[1]}
        try:
            audit = audit_compound_bound(ledger)
        except AuditError as exc:
            entry["error"] = str(exc)
        else:
            entry.update(audit.to_dict())
            entry["experts"] = list(ledger.roster.names)
        out.append(entry)
    return out


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def _write_csv(frame: pd.DataFrame, path: Path) -> str:
    frame.to_csv(path, index=False, lineterminator="\n")
    return str(path)


def _write_json(payload: Any, path: Path) -> str:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")
    return str(path)


def _records(frame: pd.DataFrame) -> list[dict[str, Any]]:
    return [
        {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in rec.items()}
        for rec in frame.astype(object).to_dict("records")
    ]


def emit_reports(
    ledgers: Mapping[StreamKey, RunLedger],
    config: RunConfig | None = None,
    output_dir: str | Path | None = None,
) -> list[str]:
    """
    Write every report of a run.

    Returns:
        The written paths, in writing order.

    Raises:
        ReportError: the directory cannot be created or written.
    """
    if not ledgers:
        raise ReportError("no ledgers to report")
    config = config or RunConfig()
    root = Path(output_dir if output_dir is not None else config.output_dir)
    written: list[str] = []
    try:
        for sub in ("ledgers", "weights", "shap"):
            (root / sub).mkdir(parents=True, exist_ok=True)

        per_stream = []
        for key in sorted(ledgers):
            ledger = ledgers[key]
            tag = stream_tag(key)
            ledger.write(root / "ledgers" / f"{tag}.json")
            written.append(str(root / "ledgers" / f"{tag}.json"))
            written.append(_write_csv(weight_trajectory(ledger), root / "weights" / f"{tag}.csv"))
            if config.log_shap and any(r.shap is not None for r in ledger.rows):
                written.append(_write_csv(shap_table(ledger), root / "shap" / f"{tag}.csv"))
            per_stream.append(stream_scores(ledger))

        by_stream = pd.concat(per_stream, ignore_index=True)
        pooled = pooled_scores(ledgers)
        written.append(_write_csv(by_stream, root / "scores_by_stream.csv"))
        written.append(_write_csv(pooled, root / "scores_pooled.csv"))
        written.append(
            _write_json({"by_stream": _records(by_stream), "pooled": _records(pooled)}, root / "scores.json")
        )

        diffs = diff_q95_table(ledgers)
        written.append(_write_csv(diffs, root / "diff_q95.csv"))
        written.append(_write_csv(diff_q95_grouped(diffs, "lead_time"), root / "diff_q95_by_lead_time.csv"))
        written.append(_write_csv(diff_q95_grouped(diffs, "station_id"), root / "diff_q95_by_station.csv"))

        written.append(_write_csv(awake_weight_summary(ledgers), root / "awake_weight_summary.csv"))
        written.append(_write_csv(shap_summary(ledgers), root / "shap_summary.csv"))
        written.append(_write_json(regret_audits(ledgers), root / "regret_audit.json"))
    except OSError as exc:
        logger.error("reports_failed", output_dir=str(root), error=str(exc))
        raise ReportError(f"cannot write reports to {root}: {exc}") from exc

    logger.info("reports_written", output_dir=str(root), n_files=len(written))
    return written


def load_ledgers(directory: str | Path) -> dict[StreamKey, RunLedger]:
    """Read every ``*.json`` ledger of a directory."""
    path = Path(directory)
    if not path.is_dir():
        raise ReportError(f"no such ledger directory: {path}")
    ledgers = {}
    for file in sorted(path.glob("*.json")):
        ledger = RunLedger.read(file)
        ledgers[ledger.key] = ledger
    return ledgers
