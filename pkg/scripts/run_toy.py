"""Write the train-delay toy database to a directory and run the CLI on it.

    python3 scripts/run_toy.py [workdir]
"""
import sys
import tempfile
from pathlib import Path

from onebm.cli import main
from onebm.synthetic import toy_train_database, write_database


def run(workdir: Path) -> int:
    schema_path = write_database(*toy_train_database(), workdir / "toy")
    common = ["--schema", str(schema_path), "--data", str(schema_path.parent), "--mode", "full"]
    print("# plan")
    main(common + ["--explain"])
    out = workdir / "toy_features.csv"
    code = main(common + ["--out", str(out), "--report"])
    print(f"# matrix written to {out}")
    print(out.read_text())
    # with four labelled entities the independence test keeps little; the report shows why
    report = out.with_name(out.stem + ".report.csv")
    print(f"# selection report ({report})")
    print("".join(report.read_text().splitlines(keepends=True)[:25]))
    return code


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="onebm-toy-"))
    sys.exit(run(target))
