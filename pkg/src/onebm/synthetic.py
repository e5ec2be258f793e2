"""Fixture databases: the train-delay toy example and seeded random generators.

Every builder returns ``(schema, raw)`` where ``raw`` maps table name to a
dict of column name -> list of CSV cell strings. :func:`materialize` turns
that into a validated in-memory database; :func:`write_database` writes CSV
files plus ``schema.json`` for the CLI.
"""
from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from onebm.ingest import build_database, table_from_strings
from onebm.relational_model import (
    ColumnRole,
    ColumnSpec,
    ColumnType,
    DatabaseSchema,
    Relation,
    TableSpec,
)

N, C, X, T = ColumnType.NUMERICAL, ColumnType.CATEGORICAL, ColumnType.TEXT, ColumnType.TIMESTAMP
EPOCH_2017 = datetime(2017, 1, 1, tzinfo=timezone.utc)


def col(name, ctype, *roles):
    return ColumnSpec(name, ctype, frozenset(ColumnRole(r) for r in roles))


def table(name, columns, primary_key=None):
    if primary_key is not None:
        columns = [
            ColumnSpec(c.name, c.ctype, c.roles | {ColumnRole.PRIMARY_KEY}) if c.name == primary_key else c
            for c in columns
        ]
    return TableSpec(name, f"{name}.csv", tuple(columns), primary_key)


def materialize(schema: DatabaseSchema, raw: dict):
    tables = [table_from_strings(t, raw[t.name]) for t in schema.tables]
    return build_database(schema, tables)


def write_database(schema: DatabaseSchema, raw: dict, directory) -> Path:
    """Write one CSV per table and ``schema.json``; returns the schema path."""
    import csv

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t in schema.tables:
        cols = raw[t.name]
        names = list(cols)
        with open(directory / t.source_file, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            writer.writerows(zip(*(cols[n] for n in names)))
    path = directory / "schema.json"
    path.write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def _ts(seconds) -> str:
    return (EPOCH_2017 + timedelta(seconds=int(seconds))).strftime("%Y-%m-%d %H:%M:%S")


def toy_train_database():
    """Four-table train-arrival database (main, delay, info, event).

    Message 1 is train IRE01 arriving in Dublin at 2017-01-01 10:02:00. Its
    pre-cutoff delay history is 240, 240, 180, 60, 60, and the
    delay -> event tree below it has four delay rows with events.
    """
    schema = DatabaseSchema(
        "main",
        (
            table("main", [
                col("MessageID", N), col("TrainID", C, "foreign_key"), col("StationID", C, "foreign_key"),
                col("ArrivalTime", T, "cutoff_time"), col("Late", N, "target"),
            ], primary_key="MessageID"),
            table("delay", [
                col("TrainID", C, "foreign_key"), col("StationID", C, "foreign_key"),
                col("Delay", N), col("Time", T, "event_time"),
            ]),
            table("info", [col("TrainID", C), col("Class", C)], primary_key="TrainID"),
            table("event", [
                col("StationID", C, "foreign_key"), col("Event", C), col("Time", T, "event_time"),
            ]),
        ),
        (
            Relation("main", "TrainID", "delay", "TrainID"),
            Relation("main", "TrainID", "info", "TrainID"),
            Relation("main", "StationID", "event", "StationID"),
            Relation("delay", "StationID", "event", "StationID"),
        ),
    )
    main = [
        ("1", "IRE01", "Dublin", "2017-01-01 10:02:00", "60"),
        ("2", "IRE02", "Cork", "2017-01-01 11:00:00", "0"),
        ("3", "IRE01", "Cork", "2017-01-02 09:00:00", "120"),
        ("4", "IRE03", "Galway", "2017-01-02 12:00:00", "30"),
        ("5", "IRE02", "Dublin", "2017-01-03 08:00:00", ""),
        ("6", "IRE03", "Limerick", "2017-01-03 09:30:00", ""),
    ]
    delay = [
        ("IRE01", "Dublin", "240", "2016-12-25 10:00:00"),
        ("IRE01", "Cork", "240", "2016-12-26 10:00:00"),
        ("IRE01", "Dublin", "180", "2016-12-27 10:00:00"),
        ("IRE01", "Cork", "60", "2016-12-28 10:00:00"),
        ("IRE01", "Galway", "60", "2016-12-29 10:00:00"),
        ("IRE01", "Limerick", "120", "2017-01-01 10:02:00"),
        ("IRE02", "Cork", "30", "2016-12-30 08:00:00"),
        ("IRE02", "Dublin", "0", "2016-12-31 08:00:00"),
        ("IRE02", "Cork", "90", "2017-01-02 10:00:00"),
        ("IRE03", "Galway", "10", "2016-12-29 12:00:00"),
    ]
    info = [("IRE01", "Intercity"), ("IRE02", "Regional"), ("IRE03", "Intercity")]
    event = [
        ("Dublin", "roadwork", "2016-12-20 08:00:00"),
        ("Dublin", "roadwork", "2016-12-21 08:00:00"),
        ("Dublin", "strike", "2016-12-22 08:00:00"),
        ("Cork", "roadwork", "2016-12-23 08:00:00"),
        ("Cork", "strike", "2016-12-24 08:00:00"),
        ("Galway", "strike", "2017-01-02 13:00:00"),
        ("Limerick", "roadwork", "2017-01-01 12:00:00"),
    ]

    def cols(rows, names):
        return {n: [r[i] for r in rows] for i, n in enumerate(names)}

    raw = {
        "main": cols(main, ["MessageID", "TrainID", "StationID", "ArrivalTime", "Late"]),
        "delay": cols(delay, ["TrainID", "StationID", "Delay", "Time"]),
        "info": cols(info, ["TrainID", "Class"]),
        "event": cols(event, ["StationID", "Event", "Time"]),
    }
    return schema, raw


def chain_database():
    """A, B, C all keyed by ``a``; the path A -a-> B -a-> C is redundant with A -a-> C."""
    n = 12
    rng = np.random.default_rng(7)
    schema = DatabaseSchema(
        "A",
        (
            table("A", [col("a", N), col("y", N, "target")], primary_key="a"),
            table("B", [col("a", N), col("b", N)], primary_key="a"),
            table("C", [col("a", N), col("c", N), col("kind", C)], primary_key="a"),
        ),
        (Relation("A", "a", "B", "a"), Relation("B", "a", "C", "a"), Relation("A", "a", "C", "a")),
    )
    ids = [str(i) for i in range(n)]
    raw = {
        "A": {"a": ids, "y": [f"{v:.3f}" for v in rng.normal(size=n)]},
        "B": {"a": ids, "b": [f"{v:.3f}" for v in rng.normal(size=n)]},
        "C": {"a": ids, "c": [f"{v:.3f}" for v in rng.normal(size=n)],
              "kind": [str(rng.choice(["p", "q", "r"])) for _ in range(n)]},
    }
    return schema, raw


def random_database(seed: int, max_tables: int = 5, max_rows: int = 200, extra_edges: int = 1):
    """Random connected relational database with mixed key types, nulls and event times."""
    rng = np.random.default_rng(seed)
    n_tables = int(rng.integers(2, max_tables + 1))
    names = ["main"] + [f"t{i}" for i in range(1, n_tables)]
    nrows = {n: int(rng.integers(1, max_rows + 1)) for n in names}
    nrows["main"] = int(rng.integers(5, max_rows + 1))
    has_pk = {n: (n == "main" or bool(rng.random() < 0.5)) for n in names}
    pk_type = {n: (N if rng.random() < 0.6 else C) for n in names}

    columns = {n: [] for n in names}
    raw = {n: {} for n in names}
    relations = []

    def fmt(values, ctype, prefix):
        return [f"{prefix}{v}" if ctype is C else str(v) for v in values]

    for n in names:
        if has_pk[n]:
            vals = rng.permutation(nrows[n])
            columns[n].append(col("id", pk_type[n]))
            raw[n]["id"] = fmt(vals, pk_type[n], "k")

    def key_column(tname, ctype, domain):
        k = len([c for c in columns[tname] if c.name.startswith("fk")])
        cname = f"fk{k}"
        vals = rng.integers(0, domain, size=nrows[tname])
        cells = fmt(vals, ctype, "k")
        for i in np.flatnonzero(rng.random(nrows[tname]) < 0.05):
            cells[i] = ""
        columns[tname].append(col(cname, ctype, "foreign_key"))
        raw[tname][cname] = cells
        return cname

    def link(a, b):
        # use a primary key on one side when available, else two foreign-key columns
        if has_pk[a] and rng.random() < 0.6:
            ctype = pk_type[a]
            ca, cb = "id", key_column(b, ctype, max(2, int(nrows[a] * 1.2)))
        elif has_pk[b] and rng.random() < 0.6:
            ctype = pk_type[b]
            ca, cb = key_column(a, ctype, max(2, int(nrows[b] * 1.2))), "id"
        else:
            ctype = N if rng.random() < 0.5 else C
            domain = int(rng.integers(2, 12))
            ca, cb = key_column(a, ctype, domain), key_column(b, ctype, domain)
        relations.append(Relation(a, ca, b, cb))

    for i in range(1, n_tables):
        link(names[int(rng.integers(0, i))], names[i])
    for _ in range(extra_edges):
        a, b = rng.choice(n_tables, size=2, replace=False)
        link(names[int(a)], names[int(b)])

    for n in names:
        m = nrows[n]
        values = np.round(rng.normal(50, 20, size=m), 2)
        cells = [str(v) for v in values]
        for i in np.flatnonzero(rng.random(m) < 0.05):
            cells[i] = ""
        columns[n].append(col("value", N))
        raw[n]["value"] = cells
        columns[n].append(col("cat", C))
        raw[n]["cat"] = [str(rng.choice(["red", "green", "blue", "teal"])) for _ in range(m)]
        if n == "main":
            columns[n].append(col("cutoff", T, "cutoff_time"))
            raw[n]["cutoff"] = [_ts(s) for s in rng.integers(0, 86400 * 30, size=m)]
            columns[n].append(col("y", N, "target"))
            raw[n]["y"] = [f"{v:.3f}" if rng.random() > 0.2 else "" for v in rng.normal(size=m)]
        elif rng.random() < 0.6:
            columns[n].append(col("time", T, "event_time"))
            cells = [_ts(s) for s in rng.integers(0, 86400 * 30, size=m)]
            for i in np.flatnonzero(rng.random(m) < 0.05):
                cells[i] = ""
            raw[n]["time"] = cells

    specs = tuple(table(n, columns[n], "id" if has_pk[n] else None) for n in names)
    return DatabaseSchema("main", specs, tuple(relations)), raw


def planted_signal_database(n_entities: int = 5000, rows_per_entity: int = 8, seed: int = 0,
                            with_child: bool = True):
    """Main table whose target is the mean of a child column plus 10% noise."""
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, 2 * rows_per_entity, size=n_entities)
    owner = np.repeat(np.arange(n_entities), counts)
    amount = rng.normal(0.0, 1.0, size=len(owner)) + np.repeat(rng.normal(0, 1, size=n_entities), counts)
    means = np.bincount(owner, weights=amount) / counts
    target = means + rng.normal(0.0, 0.1 * means.std(), size=n_entities)

    main_cols = [col("id", N), col("noise_a", N), col("noise_b", N), col("y", N, "target")]
    main_raw = {
        "id": [str(i) for i in range(n_entities)],
        "noise_a": [f"{v:.6f}" for v in rng.normal(size=n_entities)],
        "noise_b": [f"{v:.6f}" for v in rng.uniform(size=n_entities)],
        "y": [f"{v:.6f}" for v in target],
    }
    tables = [table("main", main_cols, primary_key="id")]
    raw = {"main": main_raw}
    relations = ()
    if with_child:
        tables.append(table("child", [col("id", N, "foreign_key"), col("amount", N)]))
        raw["child"] = {"id": [str(i) for i in owner], "amount": [f"{v:.6f}" for v in amount]}
        relations = (Relation("main", "id", "child", "id"),)
    return DatabaseSchema("main", tuple(tables), relations), raw


def leakage_database(n_entities: int = 40, seed: int = 0):
    """Child rows before each entity's cutoff hold values in [0, 50]; later rows hold 1e6."""
    rng = np.random.default_rng(seed)
    cutoffs = rng.integers(86400 * 10, 86400 * 20, size=n_entities)
    owner, value, stamp, tag = [], [], [], []
    n_pre = np.zeros(n_entities, dtype=int)
    for e in range(n_entities):
        pre = int(rng.integers(0, 8))
        post = int(rng.integers(1, 6))
        n_pre[e] = pre
        for _ in range(pre):
            owner.append(e)
            value.append(str(int(rng.integers(0, 51))))
            stamp.append(_ts(cutoffs[e] - int(rng.integers(1, 86400 * 9))))
            tag.append(str(rng.choice(["a", "b", "c"])))
        for j in range(post):
            owner.append(e)
            value.append("1000000")
            # includes a row exactly at the cutoff
            stamp.append(_ts(cutoffs[e] + (0 if j == 0 else int(rng.integers(1, 86400 * 5)))))
            tag.append("leak")
    schema = DatabaseSchema(
        "main",
        (
            table("main", [col("id", N), col("cutoff_time", T), col("y", N, "target")], primary_key="id"),
            table("child", [col("id", N, "foreign_key"), col("value", N), col("tag", C), col("time", T, "event_time")]),
        ),
        (Relation("main", "id", "child", "id"),),
    )
    raw = {
        "main": {
            "id": [str(i) for i in range(n_entities)],
            "cutoff_time": [_ts(c) for c in cutoffs],
            "y": [f"{v:.4f}" for v in rng.normal(size=n_entities)],
        },
        "child": {"id": [str(o) for o in owner], "value": value, "tag": tag, "time": stamp},
    }
    return schema, raw, n_pre


def large_child_database(n_rows: int = 1_000_000, n_entities: int = 10_000, seed: int = 0):
    """Main table plus one timestamped child table of ``n_rows`` rows (for the sampling benchmark)."""
    rng = np.random.default_rng(seed)
    owner = rng.integers(0, n_entities, size=n_rows)
    seconds = rng.integers(0, 86400 * 300, size=n_rows)
    amount = rng.gamma(2.0, 10.0, size=n_rows)
    stamps = (np.datetime64("2017-01-01T00:00:00") + seconds.astype("timedelta64[s]")).astype(str)
    stamps = np.char.replace(stamps, "T", " ")
    entity_level = np.bincount(owner, weights=amount, minlength=n_entities) / np.maximum(
        np.bincount(owner, minlength=n_entities), 1)
    target = entity_level + rng.normal(0, 1, size=n_entities)
    schema = DatabaseSchema(
        "main",
        (
            table("main", [col("id", N), col("y", N, "target")], primary_key="id"),
            table("child", [col("id", N, "foreign_key"), col("amount", N), col("time", T, "event_time")]),
        ),
        (Relation("main", "id", "child", "id"),),
    )
    raw = {
        "main": {"id": [str(i) for i in range(n_entities)], "y": [f"{v:.4f}" for v in target]},
        "child": {
            "id": owner.astype(str).tolist(),
            "amount": np.char.mod("%.3f", amount).tolist(),
            "time": stamps.tolist(),
        },
    }
    return schema, raw
