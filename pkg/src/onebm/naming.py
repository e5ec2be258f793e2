"""Feature names: ``key1-table1[-key2-table2...]-column-tag[.index][.norm]``.

Main-table attributes have no hops and use the main table name as prefix,
e.g. ``main-ad_id``. Numeric values passed through unchanged carry no tag.
"""
from __future__ import annotations

import re
from typing import Iterable, Optional

from onebm.relational_model import JoiningPath

RAW = ""
_INDEXED = re.compile(r"^(?P<base>.*?)\.(?P<index>\d+)$")


def path_prefix(path: JoiningPath, main_table: str = "main") -> str:
    if not path.hops:
        return main_table
    return "-".join(f"{h.key}-{h.dst_table}" for h in path.hops)


def name_feature(path: JoiningPath, transform_tag: str, index: Optional[int] = None,
                 normalized: bool = False, main_table: str = "main") -> str:
    name = f"{path_prefix(path, main_table)}-{path.collected_column}"
    if transform_tag:
        name += f"-{transform_tag}"
    if index is not None:
        name += f".{index}"
    if normalized:
        name += ".norm"
    return name


def split_tag(tag: str) -> tuple[str, Optional[int], bool]:
    """'recent.1' -> ('recent', 1, False); '0T.norm' -> ('0T', None, True)."""
    normalized = tag.endswith(".norm")
    if normalized:
        tag = tag[: -len(".norm")]
    m = _INDEXED.match(tag)
    if m and not tag.startswith("COR-"):
        return m.group("base"), int(m.group("index")), normalized
    return tag, None, normalized


def parse_feature_name(name: str, paths: Iterable[JoiningPath], main_table: str = "main"):
    """Find the path whose prefix matches ``name``; returns (path, tag) or None.

    The longest matching prefix wins, so a column called ``x-mean`` does not
    shadow a path through a table called ``x``.
    """
    best = None
    for path in paths:
        stem = name_feature(path, RAW, main_table=main_table)
        if name == stem:
            cand = (len(stem), path, RAW)
        elif name.startswith(stem + "-"):
            cand = (len(stem), path, name[len(stem) + 1:])
        else:
            continue
        if best is None or cand[0] > best[0]:
            best = cand
    if best is None:
        return None
    return best[1], best[2]
