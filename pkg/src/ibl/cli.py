"""Command-line front end: run a suite, validate one model, compute AUC."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .codemodel import code_model_from_response, validate
from .dataset import load_csv
from .evaluation import auc
from .experiment import ExperimentConfig, run_suite
from .guest import GuestRunner


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    if args.backend:
        cfg.backend.kind = args.backend
    if args.record:
        cfg.backend.record_dir = args.record
    if args.output_dir:
        cfg.output_dir = args.output_dir
    results_path = Path(cfg.output_dir) / "results.csv"
    if results_path.exists() and not args.resume:
        print(f"{results_path} already exists; pass --resume to continue it",
              file=sys.stderr)
        return 2
    records = run_suite(cfg)
    done = sum(1 for r in records if r.error is None)
    print(f"{len(records)} cells in {results_path} ({done} clean)")
    return 0


def _cmd_validate_model(args: argparse.Namespace) -> int:
    raw = Path(args.source).read_text(encoding="utf-8")
    probe = load_csv(args.probe, default_label=0)
    cm = code_model_from_response(raw, args.dialect)
    runner = None
    if args.dialect == "guest":
        runner = GuestRunner(args.runner_cmd.split() if args.runner_cmd else None)
    try:
        report = validate(cm, probe, runner)
    finally:
        if runner is not None:
            runner.close()
    line = report.status if not report.detail else f"{report.status}: {report.detail}"
    print(line)
    if report.offending_rows:
        print(f"offending rows: {list(report.offending_rows)}")
    return 0 if report.ok else 1


def _read_column(path: str) -> np.ndarray:
    """One numeric column, with or without a header line."""
    df = pd.read_csv(path, header=None)
    first = df.iloc[0, 0]
    try:
        float(first)
    except (TypeError, ValueError):
        df = df.iloc[1:]
    if df.shape[1] != 1:
        raise SystemExit(f"{path}: expected a single column, got {df.shape[1]}")
    return df.iloc[:, 0].to_numpy(dtype=float)


def _cmd_auc(args: argparse.Namespace) -> int:
    scores = _read_column(args.scores)
    labels = _read_column(args.labels).astype(int)
    print(repr(auc(scores, labels)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibl",
        description="Generate, validate, and benchmark code models on tabular data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment suite from a config file")
    p_run.add_argument("--config", required=True, help="JSON config path")
    p_run.add_argument("--backend", choices=["live", "replay", "scripted"],
                       help="override the configured backend kind")
    p_run.add_argument("--record", metavar="DIR",
                       help="record live responses as fixtures into DIR")
    p_run.add_argument("--output-dir", help="override the configured output dir")
    p_run.add_argument("--resume", action="store_true",
                       help="continue into an output dir that already has results")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate-model", help="classify one model source file")
    p_val.add_argument("--source", required=True, help="file with the model code")
    p_val.add_argument("--probe", required=True,
                       help="CSV of probe rows (target column optional)")
    p_val.add_argument("--dialect", choices=["expression", "guest"],
                       default="expression")
    p_val.add_argument("--runner-cmd", help="guest runner command override")
    p_val.set_defaults(func=_cmd_validate_model)

    p_auc = sub.add_parser("auc", help="AUC of a score column against a label column")
    p_auc.add_argument("--scores", required=True)
    p_auc.add_argument("--labels", required=True)
    p_auc.set_defaults(func=_cmd_auc)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
