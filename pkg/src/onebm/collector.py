"""Depth-first data collection along joining paths.

Joins are carried as *join indices*: one int64 row-index array per table on
the path prefix (row 0 indexes the main table). Attribute columns are only
gathered when a path is finalized, so a cached prefix costs
``(depth + 1) * n_rows`` integers regardless of table width.
"""
from __future__ import annotations

import logging
import zlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from onebm.errors import DepthOutOfRange, OneBMError
from onebm.ingest import Column, resolve_cutoff_column
from onebm.path_enum import PathPlan
from onebm.relational_model import ColumnType, Hop, JoiningPath, PathKind, ValidatedDatabase, classify_path

logger = logging.getLogger(__name__)


class CollectedType(str, Enum):
    NUMERIC_SCALAR = "numeric_scalar"
    CATEGORY_SCALAR = "category_scalar"
    TEXT_SCALAR = "text_scalar"
    TIMESTAMP_SCALAR = "timestamp_scalar"
    NUMBER_MULTISET = "number_multiset"
    ITEM_MULTISET = "item_multiset"
    TEXT_SET = "text_set"
    TIME_SERIES = "time_series"
    SEQUENCE = "sequence"


SCALAR_TYPES = {
    ColumnType.NUMERICAL: CollectedType.NUMERIC_SCALAR,
    ColumnType.CATEGORICAL: CollectedType.CATEGORY_SCALAR,
    ColumnType.TEXT: CollectedType.TEXT_SCALAR,
    ColumnType.TIMESTAMP: CollectedType.TIMESTAMP_SCALAR,
}


def identify_collected_type(kind: PathKind, ctype: ColumnType, has_time_on_path: bool) -> CollectedType:
    if kind is PathKind.ONE_TO_ONE:
        return SCALAR_TYPES[ctype]
    if ctype is ColumnType.TEXT:
        return CollectedType.TEXT_SET
    if ctype is ColumnType.CATEGORICAL:
        return CollectedType.SEQUENCE if has_time_on_path else CollectedType.ITEM_MULTISET
    # numerical, and timestamps read as epoch seconds
    return CollectedType.TIME_SERIES if has_time_on_path else CollectedType.NUMBER_MULTISET


@dataclass(frozen=True)
class SamplingPolicy:
    max_joined_size: int = 10_000_000
    seed: int = 0

    def __post_init__(self):
        if self.max_joined_size < 1:
            raise ValueError("max_joined_size must be >= 1")


@dataclass(frozen=True)
class RelationalTuple:
    entity_id: object
    group_ids: tuple
    value: object
    event_time: Optional[int] = None


@dataclass(frozen=True, eq=False)
class JoinIndex:
    hops: tuple
    rows: np.ndarray
    estimated_size: int

    def __len__(self) -> int:
        return self.rows.shape[1]


def root_index(db: ValidatedDatabase) -> JoinIndex:
    rows = np.arange(db.n_entities, dtype=np.int64)[None, :]
    return JoinIndex((), rows, db.n_entities)


def _lookup(db: ValidatedDatabase, index: JoinIndex, hop: Hop):
    src_rows = index.rows[-1]
    src = db.table(hop.src_table).column(hop.src_column)
    uniques, order, starts, counts = db.key_index(hop.dst_table, hop.dst_column)
    codes = np.full(len(src_rows), -1, dtype=np.int64)
    ok = src.valid[src_rows]
    if ok.any() and len(uniques):
        codes[ok] = uniques.get_indexer(src.key_array()[src_rows[ok]])
    hit = codes >= 0
    per = np.zeros(len(src_rows), dtype=np.int64)
    per[hit] = counts[codes[hit]]
    return codes, per, order, starts


def join_histograms(db: ValidatedDatabase, index: JoinIndex, hop: Hop) -> tuple[dict, dict]:
    """Key-frequency histograms of both join sides (left from the prefix join, right from the table)."""
    src = db.table(hop.src_table).column(hop.src_column)
    rows = index.rows[-1]
    rows = rows[src.valid[rows]]
    left = Counter(src.key_array()[rows].tolist())
    dst = db.table(hop.dst_table).column(hop.dst_column)
    right = Counter(dst.key_array()[dst.valid].tolist())
    return dict(left), dict(right)


def estimate_join_size(left_index: Mapping, right_index: Mapping) -> int:
    if len(right_index) < len(left_index):
        left_index, right_index = right_index, left_index
    return sum(c * right_index[k] for k, c in left_index.items() if k in right_index)


def extend_join(db: ValidatedDatabase, index: JoinIndex, hop: Hop) -> JoinIndex:
    codes, per, order, starts = _lookup(db, index, hop)
    total = int(per.sum())  # equals estimate_join_size over the two key histograms
    src_pos = np.repeat(np.arange(len(per)), per)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(per) - per, per)
    dst_rows = order[starts[codes[src_pos]] + offsets] if total else np.zeros(0, dtype=np.int64)
    rows = np.vstack([index.rows[:, src_pos], dst_rows[None, :]])
    return JoinIndex(index.hops + (hop,), rows, total)


class CacheStack:
    """LIFO of join indices for the prefixes of the branch being explored."""

    def __init__(self, limit: int):
        self.limit = limit
        self._items: list[JoinIndex] = []
        self.max_size = 0

    def __len__(self) -> int:
        return len(self._items)

    @property
    def top(self) -> Optional[JoinIndex]:
        return self._items[-1] if self._items else None

    def push(self, index: JoinIndex) -> None:
        if len(self._items) >= self.limit:
            raise OneBMError("cache stack would exceed MaxDepth")
        self._items.append(index)
        self.max_size = max(self.max_size, len(self._items))

    def pop(self) -> JoinIndex:
        return self._items.pop()

    def clear(self) -> None:
        self._items.clear()


@dataclass(frozen=True, eq=False)
class CollectedColumn:
    path: JoiningPath
    ctype: CollectedType
    kind: PathKind
    entity_rows: np.ndarray
    group_rows: np.ndarray
    values: Column
    event_time: Optional[np.ndarray]
    entity_ids: Sequence
    estimated_size: int = 0
    n_joined: int = 0
    sampling_ratio: float = 1.0

    def __len__(self) -> int:
        return len(self.entity_rows)

    @property
    def n_entities(self) -> int:
        return len(self.entity_ids)

    @property
    def has_time(self) -> bool:
        return self.event_time is not None

    def tuples(self) -> Iterator[RelationalTuple]:
        for i in range(len(self)):
            et = None
            if self.event_time is not None and not np.isnan(self.event_time[i]):
                et = int(self.event_time[i])
            yield RelationalTuple(
                self.entity_ids[self.entity_rows[i]],
                tuple(int(g) for g in self.group_rows[:, i]),
                self.values.value(i),
                et,
            )

    def time_order(self) -> np.ndarray:
        """Positions sorted by (entity, event time, original order); nulls first within an entity."""
        if self.event_time is None:
            return np.arange(len(self))
        et = np.where(np.isnan(self.event_time), -np.inf, self.event_time)
        return np.lexsort((np.arange(len(self)), et, self.entity_rows))


def event_time_source(db: ValidatedDatabase, path: JoiningPath) -> Optional[tuple[int, str]]:
    """(depth, column) of the deepest non-main table on the path with an event time."""
    tables = path.tables
    for depth in range(len(tables) - 1, 0, -1):
        col = db.schema.table(tables[depth]).event_time_column
        if col is not None:
            return depth, col
    return None


def cutoff_mask(entity_rows: np.ndarray, event_time: np.ndarray, cutoffs: np.ndarray) -> np.ndarray:
    """True for rows to keep: event_time < cutoff, or either side unknown."""
    cut = cutoffs[entity_rows]
    return ~(event_time >= cut)


def apply_cutoff_filter(tuples: Sequence[RelationalTuple], cutoff_of: Mapping) -> list[RelationalTuple]:
    out = []
    for t in tuples:
        cut = cutoff_of.get(t.entity_id)
        if t.event_time is not None and cut is not None and t.event_time >= cut:
            continue
        out.append(t)
    return out


def sample_positions(
    entity_keys: np.ndarray,
    event_time: Optional[np.ndarray],
    estimated_size: int,
    policy: SamplingPolicy,
    has_time: bool,
    salt: int = 0,
) -> np.ndarray:
    """Sorted positions surviving stratified per-entity subsampling."""
    n = len(entity_keys)
    if estimated_size <= policy.max_joined_size or n == 0:
        return np.arange(n)
    codes, _ = pd.factorize(np.asarray(entity_keys), sort=False)
    counts = np.bincount(codes).astype(np.int64)
    m, e = policy.max_joined_size, int(estimated_size)
    budget = np.minimum(counts, np.maximum(1, (m * counts + e - 1) // e))
    pos = np.arange(n)
    if has_time and event_time is not None:
        recency = np.where(np.isnan(event_time), -np.inf, event_time)
        order = np.lexsort((-pos, -recency, codes))
    else:
        rng = np.random.default_rng([policy.seed & 0xFFFFFFFFFFFFFFFF, salt])
        order = np.lexsort((rng.random(n), codes))
    sorted_codes = codes[order]
    rank = pos - np.searchsorted(sorted_codes, sorted_codes, side="left")
    return np.sort(order[rank < budget[sorted_codes]])


def sample_tuples(
    tuples: Sequence[RelationalTuple],
    estimated_size: int,
    policy: SamplingPolicy,
    has_time: bool,
) -> list[RelationalTuple]:
    if not tuples:
        return []
    keys = np.empty(len(tuples), dtype=object)
    keys[:] = [t.entity_id for t in tuples]
    et = np.array([np.nan if t.event_time is None else t.event_time for t in tuples], dtype=np.float64)
    keep = sample_positions(keys, et, estimated_size, policy, has_time)
    return [tuples[i] for i in keep]


def group_by(col: CollectedColumn, depth: int) -> dict:
    """Regroup leaf values under the depth-``depth`` nodes of each relational tree.

    Depth 0 gives one Counter per entity; deeper levels give a list of
    Counters, one per distinct node, in first-appearance order. Null leaves
    are not values and are skipped.
    """
    if depth < 0 or depth > max(col.path.length - 1, 0):
        raise DepthOutOfRange(f"depth {depth} outside 0..{col.path.length - 1} for {col.path}")
    ids = col.entity_ids
    if depth == 0:
        out = {e: Counter() for e in ids}
    else:
        out = {e: [] for e in ids}
        slots: dict = {}
    vals = col.values
    for i in np.flatnonzero(vals.valid):
        e = ids[col.entity_rows[i]]
        v = vals.value(i)
        if depth == 0:
            out[e][v] += 1
            continue
        node = (e,) + tuple(int(g) for g in col.group_rows[:depth, i])
        slot = slots.get(node)
        if slot is None:
            slot = slots[node] = Counter()
            out[e].append(slot)
        slot[v] += 1
    return out


@dataclass
class CollectorStats:
    joins: int = 0
    max_stack: int = 0
    join_log: list = field(default_factory=list)
    failures: list = field(default_factory=list)


class DepthFirstCollector:
    """Runs one DFS over a plan, reusing cached prefix joins.

    With ``cache=False`` every path is joined from scratch; results are the
    same, only slower.
    """

    def __init__(self, db: ValidatedDatabase, policy: SamplingPolicy = SamplingPolicy(),
                 cutoff_column: Optional[str] = "auto", cache: bool = True):
        self.db = db
        self.policy = policy
        self.cache = cache
        if cutoff_column == "auto":
            cutoff_column = resolve_cutoff_column(db.schema.main)
        self.cutoff_column = cutoff_column
        self.cutoffs = db.main.column(cutoff_column).numeric() if cutoff_column else None
        self.stats = CollectorStats()
        self._entity_ids = db.entity_ids

    def _extend(self, index: JoinIndex, hop: Hop) -> JoinIndex:
        self.stats.joins += 1
        self.stats.join_log.append(index.hops + (hop,))
        return extend_join(self.db, index, hop)

    def _resolve(self, stack: CacheStack, path: JoiningPath) -> JoinIndex:
        if not self.cache:
            index = root_index(self.db)
            for hop in path.hops:
                index = self._extend(index, hop)
            return index
        while stack.top is not None and not path.extends(stack.top.hops):
            stack.pop()
        index = stack.top if stack.top is not None else root_index(self.db)
        for hop in path.hops[len(index.hops):]:
            index = self._extend(index, hop)
            stack.push(index)
        return index

    def collect(self, plan: PathPlan) -> Iterator[CollectedColumn]:
        stack = CacheStack(plan.max_depth)
        try:
            for path in plan.paths:
                try:
                    index = self._resolve(stack, path)
                    yield self.finalize(path, index)
                except (OneBMError, ValueError, KeyError, MemoryError) as exc:
                    logger.warning("path %s failed and is skipped: %s", path, exc)
                    self.stats.failures.append((path, exc))
                finally:
                    self.stats.max_stack = max(self.stats.max_stack, stack.max_size)
        finally:
            stack.clear()

    def finalize(self, path: JoiningPath, index: JoinIndex) -> CollectedColumn:
        db = self.db
        rows = index.rows
        kind = classify_path(path, db)
        terminal = db.table(path.terminal_table)
        ctype = terminal.spec.column(path.collected_column).ctype
        source = event_time_source(db, path)
        event_time = None
        if source is not None:
            depth, col = source
            event_time = db.table(path.tables[depth]).column(col).numeric()[rows[depth]]

        keep = np.arange(rows.shape[1])
        if event_time is not None and self.cutoffs is not None:
            keep = np.flatnonzero(cutoff_mask(rows[0], event_time, self.cutoffs))

        ratio = 1.0
        if index.estimated_size > self.policy.max_joined_size:
            ratio = self.policy.max_joined_size / index.estimated_size
            salt = zlib.crc32(str(path).encode("utf-8"))
            sub = sample_positions(
                rows[0, keep], None if event_time is None else event_time[keep],
                index.estimated_size, self.policy, event_time is not None, salt,
            )
            keep = keep[sub]

        rows = rows[:, keep]
        return CollectedColumn(
            path=path,
            ctype=identify_collected_type(kind, ctype, source is not None),
            kind=kind,
            entity_rows=rows[0],
            group_rows=rows[1:-1],
            values=terminal.column(path.collected_column).take(rows[-1]),
            event_time=None if event_time is None else event_time[keep],
            entity_ids=self._entity_ids,
            estimated_size=index.estimated_size,
            n_joined=len(index),
            sampling_ratio=ratio,
        )


def dfs_collect(plan: PathPlan, db: ValidatedDatabase, policy: SamplingPolicy = SamplingPolicy(),
                **kwargs) -> Iterator[CollectedColumn]:
    return DepthFirstCollector(db, policy, **kwargs).collect(plan)
