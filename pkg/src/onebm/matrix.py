"""Feature vectors (one per collected column) and the assembled feature matrix."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from onebm.errors import NameCollision


@dataclass(frozen=True, eq=False)
class FeatureVector:
    names: list
    values: np.ndarray  # (n_entities, width), NaN = null
    entity_ids: Sequence
    count_like: list = field(default_factory=list)
    source: object = None
    tags: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.entity_ids), len(self.names)):
            raise ValueError(
                f"feature block shape {self.values.shape} does not match "
                f"{len(self.entity_ids)} entities x {len(self.names)} names"
            )
        if not self.count_like:
            object.__setattr__(self, "count_like", [False] * len(self.names))

    @property
    def width(self) -> int:
        return len(self.names)

    def as_dict(self) -> dict:
        return {e: [None if v != v else float(v) for v in row] for e, row in zip(self.entity_ids, self.values)}


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    entity_ids: list
    names: list
    values: np.ndarray
    train_mask: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.train_mask is None:
            object.__setattr__(self, "train_mask", np.ones(len(self.entity_ids), dtype=bool))

    @property
    def width(self) -> int:
        return len(self.names)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def keep(self, names: Sequence[str]) -> "FeatureMatrix":
        wanted = set(names)
        idx = [i for i, n in enumerate(self.names) if n in wanted]
        return FeatureMatrix(
            self.entity_ids,
            [self.names[i] for i in idx],
            self.values[:, idx],
            self.train_mask,
            {n: self.provenance[n] for n in (self.names[i] for i in idx) if n in self.provenance},
        )


def assemble_matrix(vectors: Sequence[FeatureVector], entities: Sequence) -> FeatureMatrix:
    """Concatenate vectors in the given order, each block sorted by name.

    Entities a vector does not cover get null, or 0 for count-type columns.
    """
    n = len(entities)
    row_of = None
    blocks, names, provenance = [], [], {}
    seen = set()
    for vec in vectors:
        order = sorted(range(vec.width), key=lambda i: vec.names[i])
        if vec.entity_ids is entities or list(vec.entity_ids) == list(entities):
            block = vec.values[:, order]
        else:
            if row_of is None:
                row_of = {e: i for i, e in enumerate(entities)}
            block = np.full((n, len(order)), np.nan)
            for j, i in enumerate(order):
                if vec.count_like[i]:
                    block[:, j] = 0.0
            src_rows, dst_rows = [], []
            for k, e in enumerate(vec.entity_ids):
                r = row_of.get(e)
                if r is not None:
                    src_rows.append(k)
                    dst_rows.append(r)
            block[dst_rows] = vec.values[np.ix_(src_rows, order)]
        for i in order:
            name = vec.names[i]
            if name in seen:
                raise NameCollision(f"feature name {name!r} produced twice")
            seen.add(name)
            names.append(name)
            provenance[name] = (vec.source, vec.tags[i] if vec.tags else None)
        blocks.append(block)
    values = np.hstack(blocks) if blocks else np.zeros((n, 0))
    return FeatureMatrix(list(entities), names, values, None, provenance)
