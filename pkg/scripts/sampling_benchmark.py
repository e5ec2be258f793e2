"""Time the full pipeline on a large timestamped child table under a join-size cap.

    python3 scripts/sampling_benchmark.py --rows 1000000 --entities 10000 --cap 100000
"""
import argparse
import tempfile
import time
from pathlib import Path

import numpy as np

from onebm.collector import SamplingPolicy, dfs_collect
from onebm.ingest import load_database
from onebm.path_enum import enumerate_paths
from onebm.pipeline import PipelineConfig, run_pipeline
from onebm.synthetic import large_child_database, write_database


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=1_000_000)
    ap.add_argument("--entities", type=int, default=10_000)
    ap.add_argument("--cap", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workdir", type=Path)
    args = ap.parse_args()

    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="onebm-bench-"))
    t = time.perf_counter()
    schema_path = write_database(*large_child_database(args.rows, args.entities, args.seed), workdir / "data")
    print(f"generated {args.rows} child rows in {time.perf_counter() - t:.1f}s")

    policy = SamplingPolicy(args.cap, args.seed)
    res = run_pipeline(PipelineConfig(schema_path, schema_path.parent, workdir / "features.csv", policy=policy))
    for stage, secs in res.timings.items():
        print(f"{stage:>10}: {secs:6.2f}s")
    print(f"features emitted: {res.matrix.width} of {res.full_matrix.width}")

    db = load_database(schema_path, schema_path.parent)
    for col in dfs_collect(enumerate_paths(db, 1), db, policy):
        kept = np.bincount(col.entity_rows, minlength=db.n_entities)
        print(f"{col.path}: kept {len(col)} of {col.n_joined} tuples "
              f"(ratio {col.sampling_ratio:.4f}, per-entity min {kept.min()} max {kept.max()})")


if __name__ == "__main__":
    main()
