"""CSV loading into typed, immutable columns.

Every column is a pair of numpy arrays: ``data`` holding the typed values and a
boolean ``valid`` mask (False = null). Categorical columns store interned
integer codes plus a category table; text columns keep Python strings.
"""
from __future__ import annotations

import csv
import logging
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from onebm.errors import AmbiguousCutoff, EmptyColumn, ParseError, SchemaError
from onebm.relational_model import (
    ColumnRole,
    ColumnSpec,
    ColumnType,
    DatabaseSchema,
    TableSpec,
    ValidatedDatabase,
    validate_schema,
)

logger = logging.getLogger(__name__)

NULL_TOKENS = ("", "NA")
ISO_TIMESTAMP = re.compile(r"\d{4}-\d{2}-\d{2}(?:[T ]\d{2}:\d{2}(?::\d{2}(?:\.\d+)?)?)?Z?")
INFERENCE_SHARE = 0.99
DEFAULT_DISTINCT_RATIO = 0.5


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Column:
    ctype: ColumnType
    data: np.ndarray
    valid: np.ndarray
    categories: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.valid)

    def value(self, i: int):
        if not self.valid[i]:
            return None
        if self.ctype is ColumnType.CATEGORICAL:
            return self.categories[self.data[i]]
        if self.ctype is ColumnType.NUMERICAL:
            return float(self.data[i])
        if self.ctype is ColumnType.TIMESTAMP:
            return int(self.data[i])
        return self.data[i]

    def values(self) -> list:
        return [self.value(i) for i in range(len(self))]

    def key_array(self) -> np.ndarray:
        """Values in a hashable, cross-table comparable form (null -> NaN/None)."""
        if self.ctype is ColumnType.NUMERICAL:
            return np.where(self.valid, self.data, np.nan)
        if self.ctype is ColumnType.TIMESTAMP:
            return np.where(self.valid, self.data.astype(np.float64), np.nan)
        if self.ctype is ColumnType.CATEGORICAL:
            out = np.empty(len(self), dtype=object)
            out[self.valid] = self.categories[self.data[self.valid]]
            return out
        return self.data

    def numeric(self) -> np.ndarray:
        """float64 view with NaN for nulls (numerical and timestamp columns)."""
        return np.where(self.valid, self.data.astype(np.float64), np.nan)

    def take(self, idx: np.ndarray) -> "Column":
        return Column(self.ctype, self.data[idx], self.valid[idx], self.categories)

    def to_strings(self) -> list[str]:
        out = []
        for v in self.values():
            if v is None:
                out.append("")
            elif self.ctype is ColumnType.NUMERICAL:
                out.append(format_number(v))
            elif self.ctype is ColumnType.TIMESTAMP:
                out.append(format_timestamp(v))
            else:
                out.append(v)
        return out


def format_number(x: float) -> str:
    if x != x:
        return "nan"
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


@dataclass(frozen=True, eq=False)
class LoadedTable:
    spec: TableSpec
    columns: Mapping
    row_count: int

    def column(self, name: str) -> Column:
        try:
            return self.columns[name]
        except KeyError:
            raise KeyError(f"table {self.spec.name!r} has no column {name!r}") from None

    def to_csv(self, path) -> None:
        cols = [self.columns[c.name].to_strings() for c in self.spec.columns]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.spec.column_names)
            writer.writerows(zip(*cols))


def _null_mask(strings: np.ndarray) -> np.ndarray:
    return (strings == "") | (strings == "NA")


def _parse_timestamps(strings) -> np.ndarray:
    cleaned = [s[:-1] if s.endswith("Z") else s for s in strings]
    return np.array(cleaned, dtype="datetime64[us]").astype(np.int64) // 1_000_000


def _first_failure(strings: np.ndarray, ok) -> int:
    for i, s in enumerate(strings):
        if not ok(s):
            return i
    return 0


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _is_timestamp(s: str) -> bool:
    if not ISO_TIMESTAMP.fullmatch(s):
        return False
    try:
        _parse_timestamps([s])
    except ValueError:
        return False
    return True


def parse_column(
    strings: Sequence[str],
    ctype: ColumnType,
    *,
    strict: bool = True,
    source: str = "<memory>",
    name: str = "?",
) -> Column:
    """Convert raw CSV cells into a typed :class:`Column`.

    With ``strict`` a non-conforming cell raises :class:`ParseError`; otherwise
    it becomes null (used for inferred columns, where up to 1% may not conform).
    """
    s = np.asarray(strings, dtype=object)
    n = len(s)
    valid = ~_null_mask(s) if n else np.zeros(0, dtype=bool)
    idx = np.flatnonzero(valid)

    def fail(checker, expected):
        pos = idx[_first_failure(s[idx], checker)]
        raise ParseError(source, int(pos) + 2, name, str(s[pos]), expected)

    if ctype is ColumnType.NUMERICAL:
        data = np.full(n, np.nan)
        try:
            data[idx] = s[idx].astype(np.float64)
        except ValueError:
            if strict:
                fail(_is_number, "number")
            good = np.array([_is_number(v) for v in s[idx]], dtype=bool)
            data[idx[good]] = s[idx[good]].astype(np.float64)
            valid[idx[~good]] = False
        return Column(ctype, _readonly(data), _readonly(valid))

    if ctype is ColumnType.TIMESTAMP:
        data = np.zeros(n, dtype=np.int64)
        ok = pd.Series(s[idx], dtype=object).str.fullmatch(ISO_TIMESTAMP.pattern).to_numpy(dtype=bool)
        if not ok.all():
            if strict:
                fail(_is_timestamp, "ISO-8601 timestamp")
            valid[idx[~ok]] = False
            idx = idx[ok]
        try:
            data[idx] = _parse_timestamps(s[idx])
        except ValueError:
            good = np.array([_is_timestamp(v) for v in s[idx]], dtype=bool)
            if strict:
                fail(_is_timestamp, "ISO-8601 timestamp")
            data[idx[good]] = _parse_timestamps(s[idx[good]])
            valid[idx[~good]] = False
        return Column(ctype, _readonly(data), _readonly(valid))

    if ctype is ColumnType.CATEGORICAL:
        codes = np.full(n, -1, dtype=np.int64)
        sub_codes, uniques = pd.factorize(s[idx], sort=False)
        codes[idx] = sub_codes
        cats = np.asarray(uniques, dtype=object)
        return Column(ctype, _readonly(codes), _readonly(valid), _readonly(cats))

    data = np.empty(n, dtype=object)
    data[idx] = s[idx]
    return Column(ColumnType.TEXT, _readonly(data), _readonly(valid))


def infer_column_type(values: Sequence[str], distinct_ratio: float = DEFAULT_DISTINCT_RATIO) -> ColumnType:
    """Guess a column type from raw strings; declarations in the schema always win."""
    present = [v for v in values if v not in NULL_TOKENS]
    if not present:
        warnings.warn("column has no non-empty value; treating it as categorical", EmptyColumn, stacklevel=2)
        return ColumnType.CATEGORICAL
    n = len(present)
    series = pd.Series(present, dtype=object)
    if series.str.fullmatch(ISO_TIMESTAMP.pattern).sum() >= INFERENCE_SHARE * n:
        return ColumnType.TIMESTAMP
    if pd.to_numeric(series, errors="coerce").notna().sum() >= INFERENCE_SHARE * n:
        return ColumnType.NUMERICAL
    if series.nunique() / n <= distinct_ratio:
        return ColumnType.CATEGORICAL
    # single-token labels stay categorical even when mostly distinct
    if not series.str.contains(r"\s", regex=True).any():
        return ColumnType.CATEGORICAL
    return ColumnType.TEXT


def load_table(spec: TableSpec, path, distinct_ratio: float = DEFAULT_DISTINCT_RATIO) -> LoadedTable:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise ParseError(path, 1, "<header>", "", "a header row") from None
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(path, 0, "<file>", "", f"RFC-4180 CSV ({exc})") from None

    return table_from_strings(spec, {c: frame[c].to_numpy(dtype=object) for c in frame.columns},
                              distinct_ratio, source=str(path))


def table_from_strings(spec: TableSpec, raw: Mapping, distinct_ratio: float = DEFAULT_DISTINCT_RATIO,
                       source: str = "<memory>") -> LoadedTable:
    """Build a table from raw cell strings keyed by header name (file order)."""
    declared = {c.name for c in spec.columns}
    missing = [c for c in spec.column_names if c not in raw]
    if missing:
        raise SchemaError(f"{source}: declared columns not present in CSV header: {missing}")
    lengths = {len(v) for v in raw.values()}
    if len(lengths) > 1:
        raise SchemaError(f"{source}: columns have different lengths")
    n_rows = lengths.pop() if lengths else 0

    columns = {}
    specs = list(spec.columns)
    for c in spec.columns:
        columns[c.name] = parse_column(raw[c.name], c.ctype, source=source, name=c.name)
    for name, cells in raw.items():
        if name in declared:
            continue
        cells = list(cells)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyColumn)
            ctype = infer_column_type(cells, distinct_ratio) if cells else ColumnType.CATEGORICAL
        logger.info("%s.%s: inferred type %s", spec.name, name, ctype.value)
        columns[name] = parse_column(cells, ctype, strict=False, source=source, name=name)
        specs.append(ColumnSpec(name, ctype, frozenset({ColumnRole.ATTRIBUTE})))
    return LoadedTable(replace(spec, columns=tuple(specs)), columns, n_rows)


def resolve_cutoff_column(main: TableSpec) -> Optional[str]:
    by_role = main.columns_with_role(ColumnRole.CUTOFF_TIME)
    if len(by_role) > 1:
        raise AmbiguousCutoff(f"several cutoff_time columns: {[c.name for c in by_role]}")
    if by_role:
        return by_role[0].name
    by_name = [c for c in main.columns if c.name.lower() == "cutoff_time" and c.ctype is ColumnType.TIMESTAMP]
    if len(by_name) > 1:
        raise AmbiguousCutoff(f"several columns qualify as cutoff time: {[c.name for c in by_name]}")
    if by_name:
        return by_name[0].name
    logger.warning("main table %r has no cutoff column; temporal filtering is disabled", main.name)
    return None


def _promote_event_time(spec: TableSpec) -> TableSpec:
    """Give a lone timestamp column the event_time role when none is declared."""
    if spec.event_time_column is not None:
        return spec
    stamps = [c for c in spec.columns if c.ctype is ColumnType.TIMESTAMP]
    if len(stamps) != 1:
        return spec
    only = stamps[0]
    cols = tuple(
        replace(c, roles=c.roles | {ColumnRole.EVENT_TIME}) if c is only else c for c in spec.columns
    )
    return replace(spec, columns=cols)


def _promote_cutoff(spec: TableSpec) -> TableSpec:
    """Give a column named ``cutoff_time`` the cutoff role so it is never collected as a feature."""
    if spec.columns_with_role(ColumnRole.CUTOFF_TIME):
        return spec
    named = [c for c in spec.columns if c.name.lower() == "cutoff_time" and c.ctype is ColumnType.TIMESTAMP]
    if len(named) != 1:
        return spec
    cols = tuple(
        replace(c, roles=c.roles | {ColumnRole.CUTOFF_TIME}) if c is named[0] else c for c in spec.columns
    )
    return replace(spec, columns=cols)


def build_database(schema: DatabaseSchema, tables: Sequence[LoadedTable]) -> ValidatedDatabase:
    """Merge inferred columns back into the schema, then validate."""
    by_name = {t.spec.name: t for t in tables}
    for name, lt in list(by_name.items()):
        spec = lt.spec
        if name == schema.main_table:
            spec = _promote_cutoff(spec)
        else:
            spec = _promote_event_time(spec)
        by_name[name] = replace(lt, spec=spec)
        if schema.has_table(name):
            schema = schema.replace_table(spec)
    return validate_schema(schema, by_name.values())


def load_database(schema_path, data_dir, *, distinct_ratio: float = DEFAULT_DISTINCT_RATIO, workers: int = 4) -> ValidatedDatabase:
    schema = DatabaseSchema.from_json(schema_path)
    data_dir = Path(data_dir)
    for t in schema.tables:
        if not (data_dir / t.source_file).exists():
            raise SchemaError(f"data file for table {t.name!r} not found: {data_dir / t.source_file}")
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        tables = list(pool.map(lambda t: load_table(t, data_dir / t.source_file, distinct_ratio), schema.tables))
    return build_database(schema, tables)
