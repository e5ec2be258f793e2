"""Transformations from collected data to fixed-width numeric features.

Each :class:`~onebm.collector.CollectedType` maps to one family:

=================  ===========================================================
numeric scalar     value as is
category scalar    per-class label counts and smoothed label distribution
timestamp scalar   calendar fields
number multiset    mean, variance, max, min, sum, count
time series        multiset stats, recent(k), DFT magnitudes, Haar DWT, ACF
item multiset      count, distinct count, counts of target-correlated items
sequence           count, distinct count, counts of target-correlated n-grams
text / text set    tokenized, then treated as a sequence
=================  ===========================================================

Anything fitted on data (selected items and n-grams, category encodings)
uses training entities only, i.e. those with a non-null target.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from onebm.collector import CollectedColumn, CollectedType
from onebm.errors import DuplicateRegistration, UnknownType
from onebm.matrix import FeatureVector
from onebm.naming import RAW, name_feature
from onebm.relational_model import ColumnRole, ColumnType, ValidatedDatabase

MULTISET_TAGS = ["mean", "variance", "max", "min", "sum", "count"]
CALENDAR_TAGS = ["year", "month", "day", "hour", "minute", "dayofweek", "weekend", "dayofyear"]
COUNT_TAGS = {"count", "distinct"}
_TOKEN = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class TransformConfig:
    recent_k: int = 5
    fft_coeffs: int = 5
    dwt_coeffs: int = 5
    autocorr_lags: int = 3
    top_items: int = 10
    min_abs_corr: float = 0.05
    max_subseq_len: int = 3
    smoothing_alpha: float = 10.0
    nested_depths: frozenset = frozenset({0})

    def __post_init__(self):
        object.__setattr__(self, "nested_depths", frozenset(int(d) for d in self.nested_depths))
        for name in ("recent_k", "fft_coeffs", "dwt_coeffs", "autocorr_lags", "top_items"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0.0 <= self.min_abs_corr <= 1.0:
            raise ValueError("min_abs_corr must be in [0, 1]")
        if self.max_subseq_len < 2:
            raise ValueError("max_subseq_len must be >= 2")
        if self.smoothing_alpha < 0:
            raise ValueError("smoothing_alpha must be non-negative")
        if any(d < 0 for d in self.nested_depths):
            raise ValueError("nested_depths must be non-negative")

    @classmethod
    def from_dict(cls, doc: dict) -> "TransformConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown transform config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "TransformConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class TargetColumn:
    """Target per entity; entities with a null target are test entities."""

    values: np.ndarray  # float64 for regression, object for classification
    task: str
    train_mask: np.ndarray
    classes: tuple = ()

    @classmethod
    def from_values(cls, values: Sequence, task: Optional[str] = None) -> "TargetColumn":
        vals = list(values)
        train = np.array([v is not None and not (isinstance(v, float) and v != v) for v in vals], dtype=bool)
        if task is None:
            task = "regression" if all(isinstance(v, (int, float)) for v, t in zip(vals, train) if t) else "classification"
        if task == "regression":
            arr = np.array([float(v) if t else np.nan for v, t in zip(vals, train)], dtype=np.float64)
            return cls(arr, task, train)
        arr = np.empty(len(vals), dtype=object)
        arr[:] = [v if t else None for v, t in zip(vals, train)]
        freq = Counter(arr[train].tolist())
        classes = tuple(sorted(freq, key=lambda c: (-freq[c], str(c))))
        return cls(arr, task, train, classes)

    @classmethod
    def from_database(cls, db: ValidatedDatabase) -> "TargetColumn":
        main = db.schema.main
        name = main.role_column(ColumnRole.TARGET)
        if name is None:
            raise ValueError(f"main table {main.name!r} declares no target column")
        col = db.main.column(name)
        task = "regression" if col.ctype is ColumnType.NUMERICAL else "classification"
        return cls.from_values(col.values(), task)

    def __len__(self) -> int:
        return len(self.values)

    def encoded(self) -> np.ndarray:
        """Numeric target matrix over training rows: one column, or one-hot per class."""
        t = self.values[self.train_mask]
        if self.task == "regression":
            return t.astype(np.float64)[:, None]
        return np.stack([(t == c).astype(np.float64) for c in self.classes], axis=1) if self.classes else np.zeros((len(t), 0))


# ---------------------------------------------------------------- numerics


def transform_number_multiset(values: Sequence[float]) -> tuple:
    """(mean, population variance, max, min, sum, non-null count)."""
    x = np.asarray([v for v in values if v is not None], dtype=np.float64)
    x = x[~np.isnan(x)]
    if len(x) == 0:
        return (None, None, None, None, None, 0)
    mean = float(x.mean())
    var = float(np.mean((x - mean) ** 2))
    return (mean, var, float(x.max()), float(x.min()), float(x.sum()), len(x))


def dft_magnitudes(x: np.ndarray, k: int) -> list:
    """|DFT| of ``x`` zero-padded to the next power of two; first ``k`` bins (null past the end)."""
    n = len(x)
    if n == 0:
        return [None] * k
    size = 1 << (n - 1).bit_length()
    mags = np.abs(np.fft.fft(np.concatenate([x, np.zeros(size - n)])))
    return [float(m) for m in mags[:k]] + [None] * max(0, k - size)


def haar_coefficients(x: np.ndarray, k: int) -> list:
    """Full Haar decomposition [approx, coarsest detail, ..., finest detail]; first ``k``, zero-filled."""
    n = len(x)
    if n == 0:
        return [None] * k
    size = 1 << (n - 1).bit_length()
    a = np.concatenate([x, np.zeros(size - n)])
    details = []
    while len(a) > 1:
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) / math.sqrt(2.0))
        a = (even + odd) / math.sqrt(2.0)
    coeffs = np.concatenate([a] + details[::-1])
    out = [float(c) for c in coeffs[:k]]
    return out + [0.0] * (k - len(out))


def autocorrelation(x: np.ndarray, lags: int) -> list:
    """Lag-adjusted autocorrelation: mean lagged product over (n - lag), divided by variance."""
    n = len(x)
    out = []
    if n == 0 or np.ptp(x) == 0:
        return [None] * lags
    d = x - x.mean()
    var = float(np.dot(d, d)) / n
    if var == 0.0:  # underflow on tiny spreads
        return [None] * lags
    for lag in range(1, lags + 1):
        if n <= lag:
            out.append(None)
        else:
            out.append(float(np.dot(d[:-lag], d[lag:])) / (n - lag) / var)
    return out


def time_series_tags(cfg: TransformConfig) -> list:
    return (
        MULTISET_TAGS
        + [f"recent.{i}" for i in range(cfg.recent_k)]
        + [f"fft.{i}" for i in range(cfg.fft_coeffs)]
        + [f"dwt.{i}" for i in range(cfg.dwt_coeffs)]
        + [f"acf.{lag}" for lag in range(1, cfg.autocorr_lags + 1)]
    )


def transform_time_series(points: Sequence[tuple], cfg: TransformConfig = TransformConfig()) -> list:
    """Features of a (timestamp, value) series; ties keep input order, null values are dropped."""
    pts = [(t, v) for t, v in points if v is not None and v == v]
    pts.sort(key=lambda p: -math.inf if p[0] is None else p[0])
    x = np.array([v for _, v in pts], dtype=np.float64)
    stats = list(transform_number_multiset(x))
    recent = [float(x[-1 - i]) if i < len(x) else None for i in range(cfg.recent_k)]
    return (
        stats
        + recent
        + dft_magnitudes(x, cfg.fft_coeffs)
        + haar_coefficients(x, cfg.dwt_coeffs)
        + autocorrelation(x, cfg.autocorr_lags)
    )


def transform_timestamp_scalar(ts: Optional[int]) -> tuple:
    if ts is None:
        return (None,) * len(CALENDAR_TAGS)
    d = datetime.fromtimestamp(int(ts), tz=timezone.utc)
    dow = d.weekday()
    return (d.year, d.month, d.day, d.hour, d.minute, dow, int(dow >= 5), d.timetuple().tm_yday)


# ------------------------------------------------------- correlated items


def pearson_scores(counts: Sequence[Counter], target: TargetColumn) -> dict:
    """max |Pearson(count of key, target class)| over training entities, per key; zero variance -> 0."""
    train = np.flatnonzero(target.train_mask)
    keys = sorted({k for i in train for k in counts[i]}, key=str)
    if not keys or len(train) < 2:
        return {k: 0.0 for k in keys}
    col_of = {k: j for j, k in enumerate(keys)}
    r, c, v = [], [], []
    for row, i in enumerate(train):
        for k, cnt in counts[i].items():
            r.append(row)
            c.append(col_of[k])
            v.append(cnt)
    n = len(train)
    X = sparse.csr_matrix((np.asarray(v, dtype=np.float64), (r, c)), shape=(n, len(keys)))
    Y = target.encoded()
    mx = np.asarray(X.mean(axis=0)).ravel()
    sxx = np.asarray(X.multiply(X).mean(axis=0)).ravel() - mx**2
    my = Y.mean(axis=0)
    syy = (Y**2).mean(axis=0) - my**2
    sxy = np.asarray(X.T @ Y) / n - np.outer(mx, my)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = sxy / np.sqrt(np.outer(sxx, syy))
    bad = (sxx <= 1e-12 * (1.0 + mx**2))[:, None] | (syy <= 1e-12 * (1.0 + my**2))[None, :]
    corr[bad | ~np.isfinite(corr)] = 0.0
    score = np.abs(corr).max(axis=1) if corr.shape[1] else np.zeros(len(keys))
    return {k: float(min(s, 1.0)) for k, s in zip(keys, score)}


def select_correlated(counts: Sequence[Counter], target: TargetColumn, cfg: TransformConfig) -> list:
    scores = pearson_scores(counts, target)
    ranked = sorted((k for k, s in scores.items() if s >= cfg.min_abs_corr and s > 0),
                    key=lambda k: (-scores[k], str(k)))
    return ranked[: cfg.top_items]


def _count_block(counts: Sequence[Counter], keys: Sequence) -> np.ndarray:
    out = np.zeros((len(counts), len(keys)))
    for j, k in enumerate(keys):
        out[:, j] = [c.get(k, 0) for c in counts]
    return out


def transform_item_multiset(items: Sequence, target: TargetColumn, cfg: TransformConfig = TransformConfig(),
                            selected: Optional[list] = None):
    """Per-entity (count, distinct, counts of selected items).

    ``items`` holds one multiset (iterable or Counter) per entity. Returns
    ``(tags, values, selected)``; pass ``selected`` back in to reapply a fit.
    """
    counts = [c if isinstance(c, Counter) else Counter(c) for c in items]
    if selected is None:
        selected = select_correlated(counts, target, cfg)
    base = np.array([[sum(c.values()), len(c)] for c in counts], dtype=np.float64).reshape(len(counts), 2)
    tags = ["count", "distinct"] + [f"COR-{k}" for k in selected]
    return tags, np.hstack([base, _count_block(counts, selected)]), selected


def ngrams(seq: Sequence, max_len: int) -> Counter:
    out = Counter()
    for n in range(2, max_len + 1):
        for i in range(len(seq) - n + 1):
            out[tuple(seq[i : i + n])] += 1
    return out


def transform_sequence(sequences: Sequence[Sequence], target: TargetColumn, cfg: TransformConfig = TransformConfig(),
                       selected: Optional[list] = None):
    """Per-entity (count, distinct, counts of selected contiguous n-grams of length 2..max_subseq_len)."""
    seqs = [list(s) for s in sequences]
    grams = [ngrams(s, cfg.max_subseq_len) for s in seqs]
    if selected is None:
        selected = select_correlated(grams, target, cfg)
    base = np.array([[len(s), len(set(s))] for s in seqs], dtype=np.float64).reshape(len(seqs), 2)
    tags = ["count", "distinct"] + ["COR-" + ">".join(map(str, g)) for g in selected]
    return tags, np.hstack([base, _count_block(grams, selected)]), selected


def tokenize(text: Optional[str]) -> list:
    return _TOKEN.findall(text.lower()) if text else []


def transform_text(texts: Sequence, target: TargetColumn, cfg: TransformConfig = TransformConfig(),
                   selected: Optional[list] = None):
    """``texts`` holds, per entity, one string or a list of strings in source order."""
    seqs = []
    for t in texts:
        if t is None or isinstance(t, str):
            seqs.append(tokenize(t))
        else:
            seqs.append([tok for s in t for tok in tokenize(s)])
    return transform_sequence(seqs, target, cfg, selected)


def transform_categorical_scalar(value_of: Sequence, target: TargetColumn, cfg: TransformConfig = TransformConfig(),
                                 fitted: Optional[dict] = None):
    """Label-distribution encoding fitted on training entities.

    Classification: ``jT`` is the number of training entities sharing the
    category with class j (classes by descending frequency) and ``jT.norm``
    is ``(jT + alpha * prior_j) / (n_category + alpha)``. Regression: a
    smoothed target mean ``TE`` and the training frequency ``freq``.
    """
    vals = list(value_of)
    alpha = cfg.smoothing_alpha
    if fitted is None:
        fitted = {}
        train = np.flatnonzero(target.train_mask)
        n_cat = Counter(vals[i] for i in train if vals[i] is not None)
        fitted["n"] = dict(n_cat)
        if target.task == "classification":
            totals = Counter(target.values[i] for i in train)
            n_train = sum(totals.values())
            fitted["prior"] = [totals[c] / n_train if n_train else 0.0 for c in target.classes]
            joint = Counter((vals[i], target.values[i]) for i in train if vals[i] is not None)
            fitted["joint"] = {(v, c): k for (v, c), k in joint.items()}
        else:
            ys = target.values
            fitted["mean"] = float(np.mean(ys[train])) if len(train) else float("nan")
            sums: dict = {}
            for i in train:
                if vals[i] is not None:
                    sums[vals[i]] = sums.get(vals[i], 0.0) + float(ys[i])
            fitted["sum"] = sums

    rows = []
    if target.task == "classification":
        tags = [f"{j}T" for j in range(len(target.classes))] + [f"{j}T.norm" for j in range(len(target.classes))]
        for v in vals:
            if v is None:
                rows.append([np.nan] * len(tags))
                continue
            n_v = fitted["n"].get(v, 0)
            raw = [fitted["joint"].get((v, c), 0) for c in target.classes]
            denom = n_v + alpha
            norm = [(raw[j] + alpha * fitted["prior"][j]) / denom if denom > 0 else np.nan
                    for j in range(len(raw))]
            rows.append(raw + norm)
    else:
        tags = ["TE", "freq"]
        for v in vals:
            if v is None:
                rows.append([np.nan, np.nan])
                continue
            n_v = fitted["n"].get(v, 0)
            denom = n_v + alpha
            te = (fitted["sum"].get(v, 0.0) + alpha * fitted["mean"]) / denom if denom > 0 else np.nan
            rows.append([te, float(n_v)])
    return tags, np.asarray(rows, dtype=np.float64).reshape(len(vals), len(tags)), fitted


# ---------------------------------------------------------------- plugins


@dataclass(frozen=True)
class Plugin:
    name: str
    ctype: object
    extractor: Callable
    tags: Callable

    def width(self, cfg: TransformConfig) -> int:
        return len(self.tags(cfg))


class PluginRegistry:
    def __init__(self):
        self._plugins: dict = {}

    def register(self, ctype, extractor: Callable, *, name: str, tags) -> Plugin:
        """``extractor(col, target, cfg)`` returns an (n_entities, len(tags(cfg))) array."""
        if name in self._plugins:
            raise DuplicateRegistration(f"a plugin named {name!r} is already registered")
        tag_fn = tags if callable(tags) else (lambda cfg, _t=list(tags): _t)
        plugin = Plugin(name, ctype, extractor, tag_fn)
        self._plugins[name] = plugin
        return plugin

    def unregister(self, name: str) -> None:
        self._plugins.pop(name, None)

    def for_type(self, ctype) -> list:
        return [p for p in self._plugins.values() if p.ctype == ctype]

    def __len__(self) -> int:
        return len(self._plugins)


default_registry = PluginRegistry()


def register_plugin(ctype, extractor: Callable, *, name: str, tags, registry: PluginRegistry = default_registry) -> Plugin:
    return registry.register(ctype, extractor, name=name, tags=tags)


# --------------------------------------------------------------- dispatch


def _per_entity(col: CollectedColumn, order: Optional[np.ndarray] = None, with_time: bool = False) -> list:
    out = [[] for _ in range(col.n_entities)]
    if order is None:
        order = np.arange(len(col))
    valid = col.values.valid
    for i in order:
        if not valid[i]:
            continue
        v = col.values.value(i)
        if with_time:
            et = col.event_time[i] if col.event_time is not None else np.nan
            v = (None if et != et else et, v)
        out[col.entity_rows[i]].append(v)
    return out


def _multiset_block(col: CollectedColumn) -> np.ndarray:
    n = col.n_entities
    x = col.values.numeric()
    ok = ~np.isnan(x)
    e, x = col.entity_rows[ok], x[ok]
    count = np.bincount(e, minlength=n).astype(np.float64)
    total = np.bincount(e, weights=x, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / count
    dev = x - mean[e]
    var = np.bincount(e, weights=dev * dev, minlength=n) / np.where(count > 0, count, np.nan)
    hi = np.full(n, -np.inf)
    lo = np.full(n, np.inf)
    np.maximum.at(hi, e, x)
    np.minimum.at(lo, e, x)
    empty = count == 0
    for a in (mean, var, hi, lo, total):
        a[empty] = np.nan
    return np.column_stack([mean, var, hi, lo, total, count])


def _nested_block(col: CollectedColumn, depth: int, numeric: bool):
    """Two-stage aggregation: a statistic per depth-``depth`` node, then mean/min/max per entity."""
    ok = col.values.valid
    if not ok.any():
        frame = pd.DataFrame({"e": np.zeros(0, dtype=np.int64)})
    else:
        frame = pd.DataFrame({"e": col.entity_rows[ok]})
    for d in range(depth):
        frame[f"g{d}"] = col.group_rows[d][ok] if ok.any() else np.zeros(0, dtype=np.int64)
    keys = ["e"] + [f"g{d}" for d in range(depth)]
    if numeric:
        frame["x"] = col.values.numeric()[ok]
        inner = frame.groupby(keys, sort=False)["x"].agg(["mean", "sum", "count"])
    else:
        frame["x"] = col.values.data[ok]
        inner = frame.groupby(keys, sort=False)["x"].agg(["count", "nunique"]).rename(columns={"nunique": "distinct"})
    outer = inner.groupby(level="e").agg(["mean", "min", "max"])
    tags = [f"d{depth}.{a}.{b}" for a, b in outer.columns]
    block = np.full((col.n_entities, len(tags)), np.nan)
    if len(outer):
        block[outer.index.to_numpy()] = outer.to_numpy(dtype=np.float64)
    return tags, block


def transform(col: CollectedColumn, target: TargetColumn, cfg: TransformConfig = TransformConfig(),
              registry: PluginRegistry = default_registry, main_table: str = "main",
              fitted: Optional[dict] = None) -> FeatureVector:
    ct = col.ctype
    n = col.n_entities
    plugins = registry.for_type(ct)
    state = {} if fitted is None else dict(fitted)
    tags: list
    if ct == CollectedType.NUMERIC_SCALAR:
        block = np.full((n, 1), np.nan)
        ok = col.values.valid
        block[col.entity_rows[ok], 0] = col.values.numeric()[ok]
        tags = [RAW]
    elif ct == CollectedType.TIMESTAMP_SCALAR:
        stamps = [None] * n
        for i in np.flatnonzero(col.values.valid):
            stamps[col.entity_rows[i]] = col.values.value(i)
        tags = list(CALENDAR_TAGS)
        block = np.array([[np.nan if v is None else v for v in transform_timestamp_scalar(s)] for s in stamps],
                         dtype=np.float64).reshape(n, len(tags))
    elif ct == CollectedType.CATEGORY_SCALAR:
        cats = [None] * n
        for i in np.flatnonzero(col.values.valid):
            cats[col.entity_rows[i]] = col.values.value(i)
        tags, block, state["encoding"] = transform_categorical_scalar(cats, target, cfg, state.get("encoding"))
    elif ct == CollectedType.TEXT_SCALAR:
        texts = [None] * n
        for i in np.flatnonzero(col.values.valid):
            texts[col.entity_rows[i]] = col.values.value(i)
        tags, block, state["selected"] = transform_text(texts, target, cfg, state.get("selected"))
    elif ct == CollectedType.NUMBER_MULTISET:
        tags, block = list(MULTISET_TAGS), _multiset_block(col)
    elif ct == CollectedType.TIME_SERIES:
        tags = time_series_tags(cfg)
        series = _per_entity(col, col.time_order(), with_time=True)
        block = np.array([[np.nan if v is None else v for v in transform_time_series(s, cfg)] for s in series],
                         dtype=np.float64).reshape(n, len(tags))
    elif ct == CollectedType.ITEM_MULTISET:
        tags, block, state["selected"] = transform_item_multiset(_per_entity(col), target, cfg, state.get("selected"))
    elif ct == CollectedType.SEQUENCE:
        seqs = _per_entity(col, col.time_order())
        tags, block, state["selected"] = transform_sequence(seqs, target, cfg, state.get("selected"))
    elif ct == CollectedType.TEXT_SET:
        texts = _per_entity(col, col.time_order())
        tags, block, state["selected"] = transform_text(texts, target, cfg, state.get("selected"))
    elif plugins:
        tags, block = [], np.zeros((n, 0))
    else:
        raise UnknownType(f"no transformation registered for collected type {ct!r}")

    count_like = [t in COUNT_TAGS or t.startswith("COR-") for t in tags]

    depth_limit = col.path.length - 1
    for depth in sorted(d for d in cfg.nested_depths if 0 < d <= depth_limit):
        numeric = ct in (CollectedType.NUMBER_MULTISET, CollectedType.TIME_SERIES)
        if numeric or ct in (CollectedType.ITEM_MULTISET, CollectedType.SEQUENCE, CollectedType.TEXT_SET):
            extra_tags, extra = _nested_block(col, depth, numeric)
            tags = tags + extra_tags
            block = np.hstack([block, extra])
            count_like += [False] * len(extra_tags)

    for plugin in plugins:
        ptags = list(plugin.tags(cfg))
        out = np.asarray(plugin.extractor(col, target, cfg), dtype=np.float64).reshape(n, -1)
        if out.shape[1] != len(ptags):
            raise ValueError(f"plugin {plugin.name!r} returned {out.shape[1]} columns, declared {len(ptags)}")
        tags = tags + [f"{plugin.name}:{t}" for t in ptags]
        block = np.hstack([block, out])
        count_like += [False] * len(ptags)

    names = [name_feature(col.path, t, main_table=main_table) for t in tags]
    return FeatureVector(names, block, col.entity_ids, count_like, col.path, tags, state)
