"""End-to-end run: load, enumerate, collect, transform, assemble, select, write."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from onebm.collector import SCALAR_TYPES, CollectedColumn, DepthFirstCollector, SamplingPolicy
from onebm.ingest import format_number, load_database, resolve_cutoff_column
from onebm.matrix import FeatureMatrix, FeatureVector, assemble_matrix
from onebm.path_enum import PathPlan, TraversalMode, enumerate_paths
from onebm.relational_model import ColumnRole, JoiningPath, PathKind, ValidatedDatabase
from onebm.selection import SelectionConfig, SelectionReport, select
from onebm.transforms import PluginRegistry, TargetColumn, TransformConfig, default_registry, transform

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    schema_path: Optional[Path] = None
    data_dir: Optional[Path] = None
    output_path: Optional[Path] = None
    max_depth: int = 2
    mode: TraversalMode = TraversalMode.FORWARD_ONLY
    policy: SamplingPolicy = field(default_factory=SamplingPolicy)
    transform_cfg: TransformConfig = field(default_factory=TransformConfig)
    selection_cfg: SelectionConfig = field(default_factory=SelectionConfig)
    emit_report: bool = False
    explain_only: bool = False
    select_features: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        self.mode = TraversalMode(self.mode)


@dataclass
class PipelineResult:
    plan: PathPlan
    matrix: Optional[FeatureMatrix] = None
    full_matrix: Optional[FeatureMatrix] = None
    report: Optional[SelectionReport] = None
    failures: list = field(default_factory=list)
    explain: str = ""
    timings: dict = field(default_factory=dict)


def main_attribute_columns(db: ValidatedDatabase) -> list[CollectedColumn]:
    """Main-table attributes as zero-hop one-to-one collections."""
    main = db.main
    spec = main.spec
    skip = {ColumnRole.PRIMARY_KEY, ColumnRole.TARGET, ColumnRole.CUTOFF_TIME}
    n = main.row_count
    rows = np.arange(n, dtype=np.int64)
    ids = db.entity_ids
    out = []
    for c in spec.columns:
        if c.roles & skip:
            continue
        out.append(CollectedColumn(
            path=JoiningPath((), c.name),
            ctype=SCALAR_TYPES[c.ctype],
            kind=PathKind.ONE_TO_ONE,
            entity_rows=rows,
            group_rows=np.zeros((0, n), dtype=np.int64),
            values=main.column(c.name),
            event_time=None,
            entity_ids=ids,
            estimated_size=n,
            n_joined=n,
        ))
    return out


def explain_text(plan: PathPlan, columns: list[CollectedColumn]) -> str:
    lines = [plan.to_text().rstrip("\n"), "", "path\ttuples\tjoined\testimated\tsampling_ratio"]
    for col in columns:
        lines.append(f"{col.path}\t{len(col)}\t{col.n_joined}\t{col.estimated_size}\t{col.sampling_ratio:.6g}")
    return "\n".join(lines) + "\n"


def _order_values(db: ValidatedDatabase) -> Optional[np.ndarray]:
    name = db.schema.main.role_column(ColumnRole.ORDER)
    return None if name is None else db.main.column(name).numeric()


def build_features(db: ValidatedDatabase, cfg: PipelineConfig, registry: PluginRegistry = default_registry,
                   result: Optional[PipelineResult] = None) -> PipelineResult:
    t0 = time.perf_counter()
    plan = enumerate_paths(db, cfg.max_depth, cfg.mode)
    result = result or PipelineResult(plan)
    result.plan = plan
    target = TargetColumn.from_database(db)
    main_name = db.schema.main_table
    collector = DepthFirstCollector(db, cfg.policy, cutoff_column=resolve_cutoff_column(db.schema.main))

    sources = main_attribute_columns(db)
    collected = list(collector.collect(plan))
    result.failures.extend(collector.stats.failures)
    result.timings["collect"] = time.perf_counter() - t0
    if cfg.explain_only:
        result.explain = explain_text(plan, collected)
        return result

    def run(col: CollectedColumn) -> Optional[FeatureVector]:
        try:
            return transform(col, target, cfg.transform_cfg, registry, main_table=main_name)
        except Exception as exc:  # per-path failures are logged and skipped
            logger.warning("transform failed for %s: %s", col.path, exc)
            result.failures.append((col.path, exc))
            return None

    t1 = time.perf_counter()
    work = sources + collected
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            vectors = list(pool.map(run, work))
    else:
        vectors = [run(c) for c in work]
    matrix = assemble_matrix([v for v in vectors if v is not None], db.entity_ids)
    matrix = FeatureMatrix(matrix.entity_ids, matrix.names, matrix.values, target.train_mask, matrix.provenance)
    result.full_matrix = matrix
    result.timings["transform"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    if cfg.select_features:
        result.matrix, result.report = select(matrix, target, _order_values(db), cfg.selection_cfg)
    else:
        result.matrix, result.report = matrix, SelectionReport(kept=list(matrix.names))
    result.timings["select"] = time.perf_counter() - t2
    return result


def write_matrix(matrix: FeatureMatrix, db: ValidatedDatabase, path) -> None:
    key = db.schema.main.primary_key
    id_strings = db.main.column(key).to_strings()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key] + list(matrix.names))
        for i, row in enumerate(matrix.values):
            w.writerow([id_strings[i]] + ["" if v != v else format_number(v) for v in row.tolist()])


def report_path(output_path) -> Path:
    p = Path(output_path)
    return p.with_name(p.stem + ".report.csv")


def run_pipeline(cfg: PipelineConfig, registry: PluginRegistry = default_registry,
                 db: Optional[ValidatedDatabase] = None) -> PipelineResult:
    t0 = time.perf_counter()
    if db is None:
        db = load_database(cfg.schema_path, cfg.data_dir)
    result = PipelineResult(PathPlan((), cfg.mode, cfg.max_depth))
    result.timings["load"] = time.perf_counter() - t0
    build_features(db, cfg, registry, result)
    if cfg.explain_only or cfg.output_path is None:
        return result
    out = Path(cfg.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_matrix(result.matrix, db, out)
    if cfg.emit_report:
        result.report.to_csv(report_path(out))
    result.timings["total"] = time.perf_counter() - t0
    return result
