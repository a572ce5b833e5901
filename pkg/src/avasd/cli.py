"""Command-line interface over the pipeline stages.

Stages write into a run directory (``--run-dir``, or $AVASD_RUN_DIR) and
read datasets from ``--data``. Configuration comes from an optional YAML
file plus repeatable ``--set key=value`` overrides. Exit codes: 0 on
success, 1 on runtime or configuration failures, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from avasd.config import ConfigError, load_config, parse_override
from avasd import pipeline
from avasd.data.annotations import AnnotationError
from avasd.data.dataset import DatasetLayoutError
from avasd.data.synthetic import SyntheticError
from avasd.evaluation import EvaluationError, write_metrics_csv
from avasd.pipeline import DependencyError

logger = logging.getLogger("avasd")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        dest="overrides", help="override one config key")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--run-dir",
                        default=os.environ.get("AVASD_RUN_DIR", "run"),
                        help="artifact directory (default: $AVASD_RUN_DIR or ./run)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avasd",
        description="audio-visual active speaker detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the synthetic dataset")
    p.add_argument("--out", required=True, help="dataset output directory")
    _add_common(p)

    p = sub.add_parser("train-encoder", help="train the audio-visual encoder")
    p.add_argument("--data", required=True, help="dataset root")
    _add_common(p)

    p = sub.add_parser("extract-features",
                       help="run the trained encoder over a split")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--split", default="train", choices=("train", "val"))
    _add_common(p)

    p = sub.add_parser("train-head",
                       help="train the context + temporal head on features")
    _add_common(p)

    p = sub.add_parser("predict", help="score a split with the trained head")
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.add_argument("--causal", action="store_true",
                   help="shorthand for --set temporal_causal=true")
    _add_common(p)

    p = sub.add_parser("evaluate", help="mAP tables for predictions")
    p.add_argument("--data", help="dataset root (run-dir mode)")
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.add_argument("--pred", help="predictions CSV (file mode)")
    p.add_argument("--gt", help="ground-truth CSV (file mode)")
    p.add_argument("--videos", help="videos.csv for face-size grouping")
    p.add_argument("--out", help="directory for metrics CSVs (file mode)")
    _add_common(p)

    p = sub.add_parser("ablate", help="train heads for feature combinations")
    p.add_argument("--rows", help="comma-separated row names (default: all)")
    _add_common(p)

    p = sub.add_parser("report", help="re-print metrics tables from a run")
    _add_common(p)

    return parser


def _resolve_config(args: argparse.Namespace) -> dict:
    overrides = {}
    for item in args.overrides:
        key, value = parse_override(item)
        overrides[key] = value
    if getattr(args, "causal", False):
        overrides["temporal_causal"] = True
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def _cmd_evaluate(args: argparse.Namespace, cfg: dict) -> int:
    if args.pred or args.gt:
        if not (args.pred and args.gt):
            print("error: file mode needs both --pred and --gt",
                  file=sys.stderr)
            return 1
        tables = pipeline.evaluate_predictions(
            args.gt, args.pred, args.videos,
            per_video=cfg["eval_per_video_ap"])
        sys.stdout.write(pipeline.render_tables(tables))
        if args.out:
            for name, rows in tables.items():
                write_metrics_csv(Path(args.out) / f"{name}.csv", rows)
        return 0
    if not args.data:
        print("error: run-dir mode needs --data", file=sys.stderr)
        return 1
    sys.stdout.write(
        pipeline.stage_evaluate(cfg, args.data, args.run_dir, args.split))
    return 0


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    try:
        cfg = _resolve_config(args)
        if args.command == "synth-data":
            summary = pipeline.stage_synth_data(cfg, args.out)
            for split in summary.splits.values():
                print(f"split={split.name} videos={split.videos} "
                      f"tracks={split.tracks} records={split.records} "
                      f"positives={split.positives}")
        elif args.command == "train-encoder":
            out = pipeline.stage_train_encoder(cfg, args.data, args.run_dir)
            print(f"encoder checkpoint: {out}")
        elif args.command == "extract-features":
            out = pipeline.stage_extract_features(cfg, args.data,
                                                  args.run_dir, args.split)
            print(f"feature store: {out}")
        elif args.command == "train-head":
            out = pipeline.stage_train_head(cfg, args.run_dir)
            print(f"head checkpoint: {out}")
        elif args.command == "predict":
            out = pipeline.stage_predict(cfg, args.run_dir, args.split)
            print(f"predictions: {out}")
        elif args.command == "evaluate":
            return _cmd_evaluate(args, cfg)
        elif args.command == "ablate":
            rows = args.rows.split(",") if args.rows else None
            results = pipeline.ablation_suite(cfg, args.run_dir, rows)
            sys.stdout.write(pipeline.format_ablation(results))
        elif args.command == "report":
            sys.stdout.write(pipeline.report(args.run_dir))
        return 0
    except (ConfigError, DependencyError, AnnotationError, SyntheticError,
            DatasetLayoutError, EvaluationError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
