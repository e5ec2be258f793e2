"""Schema declaration, entity graph, and edge/path classification.

A schema names a main table (one row per entity), the other tables, and the
single-column key relations between them. Tables are nodes of the entity
graph; relations are undirected edges that a joining path may cross in
either direction.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Optional

import numpy as np
import pandas as pd

from onebm.errors import (
    DuplicateKeyValue,
    MissingTable,
    NoMainTable,
    SchemaError,
    TypeMismatch,
)

if TYPE_CHECKING:
    from onebm.ingest import LoadedTable


class ColumnType(str, Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"
    TEXT = "text"
    TIMESTAMP = "timestamp"


class ColumnRole(str, Enum):
    PRIMARY_KEY = "primary_key"
    FOREIGN_KEY = "foreign_key"
    ATTRIBUTE = "attribute"
    TARGET = "target"
    CUTOFF_TIME = "cutoff_time"
    EVENT_TIME = "event_time"
    ORDER = "order"


# roles allowed at most once per schema, and only on the main table
MAIN_ONLY_ROLES = (ColumnRole.TARGET, ColumnRole.CUTOFF_TIME, ColumnRole.ORDER)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    ctype: ColumnType
    roles: frozenset = frozenset()

    def has_role(self, role: ColumnRole) -> bool:
        return role in self.roles


@dataclass(frozen=True)
class TableSpec:
    name: str
    source_file: str
    columns: tuple
    primary_key: Optional[str] = None

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(f"{self.name} has no column {name!r}")

    def columns_with_role(self, role: ColumnRole) -> list[ColumnSpec]:
        return [c for c in self.columns if role in c.roles]

    def role_column(self, role: ColumnRole) -> Optional[str]:
        cols = self.columns_with_role(role)
        return cols[0].name if cols else None

    @property
    def event_time_column(self) -> Optional[str]:
        return self.role_column(ColumnRole.EVENT_TIME)


@dataclass(frozen=True)
class Relation:
    left_table: str
    left_column: str
    right_table: str
    right_column: str
    key_label: str = ""

    def __post_init__(self):
        if not self.key_label:
            label = self.left_column
            if self.right_column != self.left_column:
                label = f"{self.left_column}:{self.right_column}"
            object.__setattr__(self, "key_label", label)


@dataclass(frozen=True)
class DatabaseSchema:
    main_table: str
    tables: tuple
    relations: tuple = ()

    def table(self, name: str) -> TableSpec:
        for t in self.tables:
            if t.name == name:
                return t
        raise MissingTable(f"no table named {name!r}")

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)

    @property
    def main(self) -> TableSpec:
        return self.table(self.main_table)

    def replace_table(self, spec: TableSpec) -> "DatabaseSchema":
        tables = tuple(spec if t.name == spec.name else t for t in self.tables)
        return replace(self, tables=tables)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "DatabaseSchema":
        try:
            tables = []
            for t in doc["tables"]:
                cols = []
                for c in t.get("columns", []):
                    roles = frozenset(ColumnRole(r) for r in c.get("roles", []))
                    cols.append(ColumnSpec(c["name"], ColumnType(c["type"]), roles))
                pk = t.get("primary_key")
                if pk is not None:
                    cols = [
                        replace(c, roles=c.roles | {ColumnRole.PRIMARY_KEY}) if c.name == pk else c
                        for c in cols
                    ]
                tables.append(TableSpec(t["name"], t["file"], tuple(cols), pk))
            relations = tuple(
                Relation(
                    r["left_table"], r["left_column"], r["right_table"], r["right_column"],
                    r.get("key_label", ""),
                )
                for r in doc.get("relations", [])
            )
            return cls(doc["main_table"], tuple(tables), relations)
        except KeyError as exc:
            raise SchemaError(f"schema document is missing field {exc}") from None
        except ValueError as exc:
            raise SchemaError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "DatabaseSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        tables = []
        for t in self.tables:
            entry = {
                "name": t.name,
                "file": t.source_file,
                "columns": [
                    {"name": c.name, "type": c.ctype.value,
                     "roles": sorted(r.value for r in c.roles if r is not ColumnRole.PRIMARY_KEY)}
                    for c in t.columns
                ],
            }
            if t.primary_key is not None:
                entry["primary_key"] = t.primary_key
            tables.append(entry)
        return {
            "main_table": self.main_table,
            "tables": tables,
            "relations": [
                {"left_table": r.left_table, "left_column": r.left_column,
                 "right_table": r.right_table, "right_column": r.right_column}
                for r in self.relations
            ],
        }


class EdgeKind(str, Enum):
    ONE_TO_ONE = "one_to_one"
    ONE_TO_MANY = "one_to_many"
    MANY_TO_ONE = "many_to_one"
    MANY_TO_MANY = "many_to_many"


class PathKind(str, Enum):
    ONE_TO_ONE = "one_to_one"
    MULTIPLE = "multiple"


FROM_LEFT = "from-left"
FROM_RIGHT = "from-right"


@dataclass(frozen=True)
class Hop:
    """One traversal of a relation, in a given direction."""

    relation: Relation
    direction: str = FROM_LEFT

    @property
    def src_table(self) -> str:
        r = self.relation
        return r.left_table if self.direction == FROM_LEFT else r.right_table

    @property
    def src_column(self) -> str:
        r = self.relation
        return r.left_column if self.direction == FROM_LEFT else r.right_column

    @property
    def dst_table(self) -> str:
        r = self.relation
        return r.right_table if self.direction == FROM_LEFT else r.left_table

    @property
    def dst_column(self) -> str:
        r = self.relation
        return r.right_column if self.direction == FROM_LEFT else r.left_column

    @property
    def key(self) -> str:
        return self.relation.key_label

    @property
    def endpoints(self) -> tuple:
        return (self.src_table, self.src_column, self.dst_table, self.dst_column)


@dataclass(frozen=True)
class JoiningPath:
    hops: tuple
    collected_column: str

    @property
    def length(self) -> int:
        return len(self.hops)

    @property
    def main_table(self) -> str:
        return self.hops[0].src_table

    @property
    def terminal_table(self) -> str:
        return self.hops[-1].dst_table

    @property
    def tables(self) -> list[str]:
        return [self.hops[0].src_table] + [h.dst_table for h in self.hops]

    def signature(self) -> tuple:
        """Hashable identity that ignores key labels."""
        return tuple(h.endpoints for h in self.hops) + (self.collected_column,)

    def table_signature(self) -> tuple:
        return tuple(h.endpoints for h in self.hops)

    def extends(self, hops: tuple) -> bool:
        """True if ``hops`` is a (possibly equal) prefix of this path's hops."""
        n = len(hops)
        return n <= len(self.hops) and all(
            a.endpoints == b.endpoints for a, b in zip(self.hops[:n], hops)
        )

    def describe(self) -> str:
        parts = [self.hops[0].src_table]
        for h in self.hops:
            parts.append(f"-[{h.key}]->{h.dst_table}")
        return "".join(parts)

    def __str__(self) -> str:
        return f"{self.describe()} :: {self.collected_column}"


@dataclass(frozen=True, eq=False)
class ValidatedDatabase:
    """Schema plus loaded tables that passed :func:`validate_schema`. Read-only."""

    schema: DatabaseSchema
    tables: Mapping
    _key_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def table(self, name: str) -> "LoadedTable":
        try:
            return self.tables[name]
        except KeyError:
            raise MissingTable(f"no table named {name!r}") from None

    @property
    def main(self) -> "LoadedTable":
        return self.tables[self.schema.main_table]

    @property
    def entity_ids(self) -> list:
        main = self.main
        return main.column(main.spec.primary_key).values()

    @property
    def n_entities(self) -> int:
        return self.main.row_count

    def is_primary_key(self, table: str, column: str) -> bool:
        return self.schema.table(table).primary_key == column

    def key_index(self, table: str, column: str):
        """Hash index of ``table.column``: (uniques, row order, group starts, group counts).

        Rows with a null key are left out. Within a key group, row indices ascend.
        """
        cache_key = (table, column)
        hit = self._key_cache.get(cache_key)
        if hit is not None:
            return hit
        col = self.table(table).column(column)
        keys = col.key_array()
        rows = np.flatnonzero(col.valid)
        codes, uniques = pd.factorize(keys[rows], sort=False)
        order = rows[np.argsort(codes, kind="stable")]
        counts = np.bincount(codes, minlength=len(uniques)).astype(np.int64)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)
        index = (pd.Index(uniques), order, starts, counts)
        self._key_cache[cache_key] = index
        return index


def validate_schema(schema: DatabaseSchema, loaded_tables: Iterable["LoadedTable"]) -> ValidatedDatabase:
    """Check structure, roles, keys and relation types; return an immutable database."""
    by_name = {}
    for lt in loaded_tables:
        by_name[lt.spec.name] = lt

    names = [t.name for t in schema.tables]
    dupes = [n for n, c in Counter(names).items() if c > 1]
    if dupes:
        raise SchemaError(f"duplicate table names: {dupes}")
    if not schema.has_table(schema.main_table):
        raise NoMainTable(f"main table {schema.main_table!r} is not declared")
    for t in schema.tables:
        if t.name not in by_name:
            raise MissingTable(f"no loaded data for table {t.name!r}")

    role_seen: dict = {}
    for t in schema.tables:
        col_names = [c.name for c in t.columns]
        if len(set(col_names)) != len(col_names):
            raise SchemaError(f"duplicate column names in table {t.name!r}")
        if t.primary_key is not None and not t.has_column(t.primary_key):
            raise SchemaError(f"primary key {t.primary_key!r} is not a column of {t.name!r}")
        if len(t.columns_with_role(ColumnRole.EVENT_TIME)) > 1:
            raise SchemaError(f"table {t.name!r} declares more than one event_time column")
        for c in t.columns:
            if (ColumnRole.CUTOFF_TIME in c.roles or ColumnRole.EVENT_TIME in c.roles) and c.ctype is not ColumnType.TIMESTAMP:
                raise SchemaError(f"{t.name}.{c.name}: time roles require a timestamp column")
            for role in MAIN_ONLY_ROLES:
                if role in c.roles:
                    if t.name != schema.main_table:
                        raise SchemaError(f"{t.name}.{c.name}: role {role.value} is only allowed on the main table")
                    if role in role_seen:
                        raise SchemaError(f"role {role.value} declared twice ({role_seen[role]} and {c.name})")
                    role_seen[role] = c.name

    main = schema.main
    if main.primary_key is None:
        raise NoMainTable(f"main table {main.name!r} has no primary key (entity id)")

    for t in schema.tables:
        if t.primary_key is None:
            continue
        col = by_name[t.name].column(t.primary_key)
        if not col.valid.all():
            bad = int(np.flatnonzero(~col.valid)[0])
            raise SchemaError(f"null primary key in {t.name}.{t.primary_key} at row {bad}")
        dup = pd.Series(col.key_array()).duplicated()
        if dup.any():
            raise DuplicateKeyValue(t.name, t.primary_key, col.value(int(np.flatnonzero(dup.to_numpy())[0])))

    for r in schema.relations:
        for tname, cname in ((r.left_table, r.left_column), (r.right_table, r.right_column)):
            if not schema.has_table(tname):
                raise MissingTable(f"relation references unknown table {tname!r}")
            if not schema.table(tname).has_column(cname):
                raise SchemaError(f"relation references unknown column {tname}.{cname}")
        lt = schema.table(r.left_table).column(r.left_column).ctype
        rt = schema.table(r.right_table).column(r.right_column).ctype
        if lt is not rt:
            raise TypeMismatch(
                f"relation {r.left_table}.{r.left_column} ({lt.value}) - "
                f"{r.right_table}.{r.right_column} ({rt.value})"
            )

    return ValidatedDatabase(schema, dict((t.name, by_name[t.name]) for t in schema.tables))


def classify_edge(relation: Relation, db: ValidatedDatabase, direction: str = FROM_LEFT) -> EdgeKind:
    hop = Hop(relation, direction)
    src_pk = db.is_primary_key(hop.src_table, hop.src_column)
    dst_pk = db.is_primary_key(hop.dst_table, hop.dst_column)
    if src_pk and dst_pk:
        return EdgeKind.ONE_TO_ONE
    if src_pk:
        return EdgeKind.ONE_TO_MANY
    if dst_pk:
        return EdgeKind.MANY_TO_ONE
    return EdgeKind.MANY_TO_MANY


def classify_path(path: JoiningPath, db: ValidatedDatabase) -> PathKind:
    for hop in path.hops:
        if classify_edge(hop.relation, db, hop.direction) in (EdgeKind.ONE_TO_MANY, EdgeKind.MANY_TO_MANY):
            return PathKind.MULTIPLE
    return PathKind.ONE_TO_ONE


def _collapsible(first: Hop, second: Hop, db: ValidatedDatabase) -> bool:
    mid = first.dst_table
    return (
        first.dst_column == second.src_column
        and db.is_primary_key(mid, first.dst_column)
        and db.is_primary_key(second.dst_table, second.dst_column)
        # eliding a table that carries event times would change cutoff filtering
        and db.schema.table(mid).event_time_column is None
    )


def canonicalize_path(path: JoiningPath, db: ValidatedDatabase) -> JoiningPath:
    """Elide pass-through hops X -k-> B -k-> C where k is the primary key of B and C.

    The rewrite is applied until nothing changes; the result is the shortest
    path this rule can reach.
    """
    hops = list(path.hops)
    changed = True
    while changed:
        changed = False
        for i in range(len(hops) - 1):
            a, b = hops[i], hops[i + 1]
            if _collapsible(a, b, db):
                merged = _direct_hop(a, b, db)
                hops[i : i + 2] = [merged]
                changed = True
                break
    if len(hops) == len(path.hops):
        return path
    return JoiningPath(tuple(hops), path.collected_column)


def _direct_hop(a: Hop, b: Hop, db: ValidatedDatabase) -> Hop:
    """Hop from ``a``'s source straight to ``b``'s destination, reusing a declared relation if one exists."""
    want = (a.src_table, a.src_column, b.dst_table, b.dst_column)
    for rel in db.schema.relations:
        for direction in (FROM_LEFT, FROM_RIGHT):
            hop = Hop(rel, direction)
            if hop.endpoints == want:
                return hop
    return Hop(Relation(a.src_table, a.src_column, b.dst_table, b.dst_column, a.key), FROM_LEFT)
