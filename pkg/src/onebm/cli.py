"""Command line entry point: ``onebm --schema S --data D --out O [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from onebm.collector import SamplingPolicy
from onebm.errors import OneBMError
from onebm.path_enum import TraversalMode
from onebm.pipeline import PipelineConfig, run_pipeline
from onebm.transforms import TransformConfig


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="onebm", description="Automated feature engineering over a relational database.")
    p.add_argument("--schema", required=True, type=Path, help="schema JSON file")
    p.add_argument("--data", required=True, type=Path, help="directory holding the table CSVs")
    p.add_argument("--out", type=Path, help="output feature matrix CSV (required unless --explain)")
    p.add_argument("--max-depth", type=_positive, default=2)
    p.add_argument("--mode", choices=["forward-only", "full"], default="forward-only")
    p.add_argument("--max-joined-size", type=_positive, default=10_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--transform-config", type=Path)
    p.add_argument("--report", action="store_true", help="write <out>.report.csv with selection decisions")
    p.add_argument("--explain", action="store_true", help="print the path plan and join statistics; write nothing")
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.out is None and not args.explain:
        parser.error("--out is required unless --explain is given")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        tcfg = TransformConfig.from_json(args.transform_config) if args.transform_config else TransformConfig()
    except (OSError, ValueError, TypeError) as exc:
        parser.error(f"invalid --transform-config: {exc}")

    cfg = PipelineConfig(
        schema_path=args.schema,
        data_dir=args.data,
        output_path=args.out,
        max_depth=args.max_depth,
        mode=TraversalMode.parse(args.mode),
        policy=SamplingPolicy(args.max_joined_size, args.seed),
        transform_cfg=tcfg,
        emit_report=args.report,
        explain_only=args.explain,
        workers=args.workers,
    )
    try:
        result = run_pipeline(cfg)
    except (OneBMError, OSError, ValueError) as exc:
        print(f"onebm: error: {exc}", file=sys.stderr)
        return 1
    if args.explain:
        sys.stdout.write(result.explain)
    for path, exc in result.failures:
        print(f"onebm: warning: skipped {path}: {exc}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
