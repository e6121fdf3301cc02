"""
Command-line entry point.

  boas run          --config cfg.json [--input data.csv | --synthetic SEED] [--output-dir out]
  boas grid-search  --input train.csv [--grid grid.json] [--folds 5] [--output grid.csv]
  boas audit        --ledger out/ledgers/X_024.json
  boas explain      --ledger out/ledgers/X_024.json --feature kf_prediction [--output dep.csv]
  boas scores       --ledger-dir out/ledgers [--output-dir out]

Exit code 0 only on full success, 1 otherwise.

Reference: expert-aggregation-layer.md §Command line
"""
from __future__ import annotations

import argparse
import json
import sys
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path

import pandas as pd

from src.config import ORACLE_MODES, RunConfig
from src.expert_aggregation.grid_search import FULL_GRID, grid_search, grid_size
from src.expert_aggregation.ingest import ingest_csv
from src.expert_aggregation.pipeline import run_all
from src.expert_aggregation.regret_audit import audit_compound_bound
from src.expert_aggregation.reports import emit_reports, load_ledgers
from src.expert_aggregation.synthetic import generate_run
from src.expert_aggregation.treeshap import shap_dependence_export
from src.models.ledger import RunLedger
from src.observability.logging import configure_logging, get_logger

logger = get_logger(__name__)


def _load_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.from_env(args.config)
    if getattr(args, "input", None):
        config.input_path = str(args.input)
    if getattr(args, "output_dir", None):
        config.output_dir = str(args.output_dir)
    if getattr(args, "oracle_mode", None):
        config.oracle_mode = args.oracle_mode
    if getattr(args, "n_jobs", None):
        config.n_jobs = args.n_jobs
    config.validate()
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if args.synthetic is not None:
        runs = generate_run(
            args.synthetic,
            args.synthetic_lead_times,
            n_rounds=args.synthetic_rounds,
            roster=config.roster,
        )
        streams = {run.stream.key: run.stream for run in runs}
    else:
        if not config.input_path:
            raise ValueError("run needs --input, input_path in the config, or --synthetic")
        streams = ingest_csv(config.input_path, config)
    ledgers, output = run_all(config, streams)
    if ledgers:
        for path in emit_reports(ledgers, config, config.output_dir):
            output.add_output(path)
    else:
        output.set_failed("no stream completed")
    print(output.to_json(indent=2))
    return 0 if output.ok else 1


def _cmd_grid_search(args: argparse.Namespace) -> int:
    config = _load_config(args)
    if not config.input_path:
        raise ValueError("grid-search needs --input or input_path in the config")
    grid = json.loads(Path(args.grid).read_text(encoding="utf-8")) if args.grid else FULL_GRID
    logger.info("grid_loaded", n_combinations=grid_size(grid))
    streams = ingest_csv(config.input_path, config)
    result = grid_search(streams, grid, folds=args.folds, config=config)
    result.write_csv(args.output)
    print(json.dumps({"best": asdict(result.best), "best_ess": result.best_ess, "table": str(args.output)}, indent=2))
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    ledger = RunLedger.read(args.ledger)
    audit = audit_compound_bound(ledger)
    print(json.dumps({"station_id": ledger.station_id, "lead_time": ledger.lead_time_hours, **audit.to_dict()}, indent=2))
    holds = audit.bound_holds and audit.perfect_bound_holds is not False
    return 0 if holds else 1


def _cmd_explain(args: argparse.Namespace) -> int:
    ledger = RunLedger.read(args.ledger)
    export = shap_dependence_export(ledger, args.feature)
    frame = pd.DataFrame(export.points, columns=["feature_value", "phi", "predicted_class"])
    if args.output:
        Path(args.output).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.output, index=False, lineterminator="\n")
    summary = {
        "feature": export.feature_name,
        "n_points": len(export.points),
        "fit": asdict(export.fit) if export.fit is not None else None,
    }
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_scores(args: argparse.Namespace) -> int:
    ledgers = load_ledgers(args.ledger_dir)
    config = RunConfig.from_env(args.config)
    output_dir = args.output_dir or config.output_dir
    written = emit_reports(ledgers, config, output_dir)
    print(json.dumps({"outputs": written}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boas", description="Sleeping-expert BOA aggregation of station forecasts"
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every strategy over the input streams")
    run.add_argument("--config", type=Path, help="JSON config file")
    run.add_argument("--input", type=Path, help="input CSV (overrides the config)")
    run.add_argument("--output-dir", type=Path)
    run.add_argument("--oracle-mode", choices=ORACLE_MODES)
    run.add_argument("--n-jobs", type=int)
    run.add_argument("--synthetic", type=int, metavar="SEED", help="run on generated streams")
    run.add_argument("--synthetic-rounds", type=int, default=500)
    run.add_argument("--synthetic-lead-times", type=int, nargs="+", default=[24, 48], metavar="HOURS")
    run.set_defaults(handler=_cmd_run)

    grid = sub.add_parser("grid-search", help="cross-validate forest hyperparameters")
    grid.add_argument("--config", type=Path)
    grid.add_argument("--input", type=Path)
    grid.add_argument("--grid", type=Path, help="JSON object of value lists; default is the full grid")
    grid.add_argument("--folds", type=int, default=5)
    grid.add_argument("--n-jobs", type=int)
    grid.add_argument("--output", type=Path, default=Path("grid_search.csv"))
    grid.set_defaults(handler=_cmd_grid_search)

    audit = sub.add_parser("audit", help="compound-expert regret bounds of a ledger")
    audit.add_argument("--ledger", type=Path, required=True)
    audit.set_defaults(handler=_cmd_audit)

    explain = sub.add_parser("explain", help="SHAP dependence export of one feature")
    explain.add_argument("--ledger", type=Path, required=True)
    explain.add_argument("--feature", required=True)
    explain.add_argument("--output", type=Path)
    explain.set_defaults(handler=_cmd_explain)

    scores = sub.add_parser("scores", help="recompute reports from saved ledgers")
    scores.add_argument("--ledger-dir", type=Path, required=True)
    scores.add_argument("--config", type=Path)
    scores.add_argument("--output-dir", type=Path)
    scores.set_defaults(handler=_cmd_scores)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return int(args.handler(args))
    except (ValueError, KeyError, OSError) as exc:
        logger.error("command_failed", command=args.command, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
