"""Joining-path enumeration over the entity graph.

Paths are produced in depth-first pre-order from the main table, visiting
relations and then columns in schema declaration order, so that the feature
order of a run is reproducible.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum

from onebm.relational_model import (
    FROM_LEFT,
    FROM_RIGHT,
    ColumnRole,
    ColumnType,
    Hop,
    JoiningPath,
    PathKind,
    ValidatedDatabase,
    canonicalize_path,
    classify_path,
)

logger = logging.getLogger(__name__)


class TraversalMode(str, Enum):
    FORWARD_ONLY = "forward_only"
    FULL = "full"

    @classmethod
    def parse(cls, text: str) -> "TraversalMode":
        return cls(text.replace("-", "_"))


@dataclass(frozen=True)
class PathPlan:
    paths: tuple
    mode: TraversalMode
    max_depth: int
    kinds: tuple = ()

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def to_text(self) -> str:
        lines = []
        for path, kind in zip(self.paths, self.kinds):
            lines.append(f"{_render(path)} :: {path.collected_column} :: {kind.value}")
        return "\n".join(lines) + ("\n" if lines else "")


def _render(path: JoiningPath) -> str:
    out = path.main_table
    for h in path.hops:
        out += f"-[{h.key}]->{h.dst_table}"
    return out


def is_forward_hop(from_depth: int, to_depth: int) -> bool:
    return from_depth < to_depth


def adjacent_hops(db: ValidatedDatabase, table: str) -> list[Hop]:
    """Hops leaving ``table``, in relation declaration order."""
    hops = []
    for rel in db.schema.relations:
        if rel.left_table == rel.right_table:
            continue
        if rel.left_table == table:
            hops.append(Hop(rel, FROM_LEFT))
        elif rel.right_table == table:
            hops.append(Hop(rel, FROM_RIGHT))
    return hops


def compute_node_depths(db: ValidatedDatabase) -> dict[str, int]:
    main = db.schema.main_table
    depths = {main: 0}
    queue = deque([main])
    while queue:
        table = queue.popleft()
        for hop in adjacent_hops(db, table):
            if hop.dst_table not in depths:
                depths[hop.dst_table] = depths[table] + 1
                queue.append(hop.dst_table)
    for t in db.schema.tables:
        if t.name not in depths:
            logger.warning("table %r is unreachable from the main table and is ignored", t.name)
    return depths


def collectable_columns(db: ValidatedDatabase, hop: Hop, kind: PathKind) -> list[str]:
    spec = db.schema.table(hop.dst_table)
    skip = {hop.dst_column}
    if hop.dst_table == db.schema.main_table:
        skip |= {c.name for c in spec.columns if c.roles & {ColumnRole.TARGET, ColumnRole.CUTOFF_TIME}}
    out = []
    for c in spec.columns:
        if c.name in skip:
            continue
        # multiple paths have no collection type for raw timestamps
        if kind is PathKind.MULTIPLE and c.ctype is ColumnType.TIMESTAMP:
            continue
        out.append(c.name)
    return out


def enumerate_paths(db: ValidatedDatabase, max_depth: int, mode: TraversalMode = TraversalMode.FORWARD_ONLY) -> PathPlan:
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    mode = TraversalMode(mode)
    depths = compute_node_depths(db)
    main = db.schema.main_table
    raw: list[tuple[JoiningPath, PathKind]] = []

    def visit(table: str, hops: tuple, visited: frozenset):
        for hop in adjacent_hops(db, table):
            dst = hop.dst_table
            if dst in visited or dst not in depths:
                continue
            if mode is TraversalMode.FORWARD_ONLY and not is_forward_hop(depths[table], depths[dst]):
                continue
            ext = hops + (hop,)
            kind = classify_path(JoiningPath(ext, ""), db)
            for col in collectable_columns(db, hop, kind):
                raw.append((JoiningPath(ext, col), kind))
            if len(ext) < max_depth:
                visit(dst, ext, visited | {dst})

    visit(main, (), frozenset({main}))

    # one representative per canonical form: the shortest member, earliest in DFS order
    best: dict = {}
    for i, (path, _) in enumerate(raw):
        key = canonicalize_path(path, db).signature()
        cur = best.get(key)
        if cur is None or path.length < raw[cur][0].length:
            best[key] = i
    keep = sorted(best.values())
    dropped = len(raw) - len(keep)
    if dropped:
        logger.info("dropped %d redundant paths", dropped)
    return PathPlan(
        tuple(raw[i][0] for i in keep), mode, max_depth, tuple(raw[i][1] for i in keep)
    )
