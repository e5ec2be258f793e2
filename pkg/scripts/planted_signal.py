"""Recover a planted aggregate signal and compare with a main-table-only run.

    python3 scripts/planted_signal.py --entities 5000 --seed 11
"""
import argparse

import numpy as np

from onebm.pipeline import PipelineConfig, run_pipeline
from onebm.synthetic import materialize, planted_signal_database


def correlations(matrix, y):
    out = {}
    for j, name in enumerate(matrix.names):
        x = matrix.values[:, j]
        ok = ~np.isnan(x)
        out[name] = float(np.corrcoef(x[ok], y[ok])[0, 1]) if ok.sum() > 1 and np.ptp(x[ok]) > 0 else float("nan")
    return out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--entities", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()
    for with_child in (True, False):
        db = materialize(*planted_signal_database(args.entities, seed=args.seed, with_child=with_child))
        y = db.main.column("y").numeric()
        res = run_pipeline(PipelineConfig(max_depth=2), db=db)
        print(f"\n== {'with' if with_child else 'without'} child table ==")
        kept = set(res.matrix.names)
        for name, r in sorted(correlations(res.full_matrix, y).items(), key=lambda kv: -abs(np.nan_to_num(kv[1]))):
            print(f"{r:+.4f}  {'kept   ' if name in kept else 'removed'}  {name}")


if __name__ == "__main__":
    main()
