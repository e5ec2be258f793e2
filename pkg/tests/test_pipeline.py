import csv
import subprocess
import sys

import pytest

from onebm.cli import main
from onebm.naming import parse_feature_name
from onebm.path_enum import TraversalMode
from onebm.pipeline import PipelineConfig, report_path, run_pipeline
from onebm.relational_model import JoiningPath
from onebm.synthetic import materialize, random_database, toy_train_database
from onebm.transforms import CALENDAR_TAGS, MULTISET_TAGS, TransformConfig, time_series_tags


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_toy_depth_one(toy_dir, tmp_path):
    out = tmp_path / "m.csv"
    res = run_pipeline(PipelineConfig(toy_dir, toy_dir.parent, out, max_depth=1))
    rows = _read(out)
    assert rows[0][0] == "MessageID"
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "4", "5", "6"]
    tables = {res.full_matrix.provenance[n][0].terminal_table for n in res.full_matrix.names
              if res.full_matrix.provenance[n][0].hops}
    assert tables == {"delay", "info", "event"}


def test_provenance_parses_back():
    db = materialize(*toy_train_database())
    res = run_pipeline(PipelineConfig(max_depth=2, mode=TraversalMode.FULL,
                                      transform_cfg=TransformConfig(nested_depths=frozenset({0, 1}))), db=db)
    paths = list(res.plan.paths) + [JoiningPath((), c.name) for c in db.schema.main.columns]
    known = set(MULTISET_TAGS + CALENDAR_TAGS + time_series_tags(TransformConfig()) + ["", "count", "distinct", "TE", "freq"])
    for name in res.full_matrix.names:
        parsed = parse_feature_name(name, paths, "main")
        assert parsed is not None, name
        tag = parsed[1]
        assert tag in known or tag.startswith(("COR-", "d1.")) or tag.removesuffix(".norm").endswith("T"), name


def test_explain_writes_nothing(toy_dir, tmp_path, capsys):
    out = tmp_path / "m.csv"
    assert main(["--schema", str(toy_dir), "--data", str(toy_dir.parent), "--out", str(out), "--explain"]) == 0
    assert not out.exists()
    text = capsys.readouterr().out
    assert "main-[TrainID]->delay :: Delay :: multiple" in text
    assert "sampling_ratio" in text


def test_cli_report_and_determinism(toy_dir, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}" / "m.csv"
        code = main(["--schema", str(toy_dir), "--data", str(toy_dir.parent), "--out", str(out),
                     "--mode", "full", "--report", "--seed", "5"])
        assert code == 0
        outs.append((out.read_bytes(), report_path(out).read_bytes()))
    assert outs[0] == outs[1]


def test_cli_invalid_args(toy_dir, tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["--schema", str(toy_dir), "--data", str(toy_dir.parent), "--out", "x.csv", "--max-depth", "0"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["--schema", str(toy_dir), "--data", str(toy_dir.parent), "--mode", "sideways", "--out", "x"])
    assert err.value.code == 2
    bad = tmp_path / "cfg.json"
    bad.write_text('{"recent_k": -1}')
    with pytest.raises(SystemExit) as err:
        main(["--schema", str(toy_dir), "--data", str(toy_dir.parent), "--out", "x", "--transform-config", str(bad)])
    assert err.value.code == 2


def test_cli_fatal_error(tmp_path, capsys):
    assert main(["--schema", str(tmp_path / "missing.json"), "--data", str(tmp_path), "--out", str(tmp_path / "o.csv")]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_parse_error(toy_dir, tmp_path, capsys):
    delay = toy_dir.parent / "delay.csv"
    delay.write_text(delay.read_text().replace(",240,", ",abc,", 1))
    assert main(["--schema", str(toy_dir), "--data", str(toy_dir.parent), "--out", str(tmp_path / "o.csv")]) == 1
    assert "abc" in capsys.readouterr().err


def test_module_entry_point(toy_dir, tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "onebm", "--schema", str(toy_dir), "--data", str(toy_dir.parent),
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()


def test_row_alignment_random():
    for seed in range(5):
        db = materialize(*random_database(seed))
        res = run_pipeline(PipelineConfig(max_depth=2), db=db)
        assert res.matrix.entity_ids == db.entity_ids
        assert res.matrix.values.shape[0] == db.n_entities


def test_selection_fit_on_training_rows_only():
    db = materialize(*toy_train_database())
    res = run_pipeline(PipelineConfig(max_depth=2, select_features=False), db=db)
    assert res.full_matrix.train_mask.tolist() == [True] * 4 + [False] * 2


def test_null_cells_empty(toy_dir, tmp_path):
    out = tmp_path / "m.csv"
    run_pipeline(PipelineConfig(toy_dir, toy_dir.parent, out, max_depth=1, select_features=False))
    rows = _read(out)
    assert all("nan" not in cell for row in rows[1:] for cell in row)
