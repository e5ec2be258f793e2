"""Filter-style feature selection: constants, duplicates, drift, target independence.

All decisions are fitted on training rows (``matrix.train_mask``) and
reported per feature; within each stage the report is sorted by name so the
outcome does not depend on column order.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from onebm.errors import DegenerateTable
from onebm.matrix import FeatureMatrix
from onebm.transforms import TargetColumn

logger = logging.getLogger(__name__)

DUPLICATE, DRIFT, INDEPENDENT, CONSTANT = "duplicate", "drift", "independent", "constant"


@dataclass(frozen=True)
class SelectionConfig:
    ks_threshold: float = 0.2
    alpha: float = 0.05
    drift_split: float = 0.8
    n_bins: int = 10


@dataclass
class SelectionReport:
    kept: list = field(default_factory=list)
    removed: list = field(default_factory=list)  # (name, reason, statistic)

    def removed_names(self) -> list:
        return [r[0] for r in self.removed]

    def reason(self, name: str) -> Optional[str]:
        for n, reason, _ in self.removed:
            if n == name:
                return reason
        return None

    def extend(self, other: "SelectionReport") -> None:
        self.removed.extend(other.removed)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "reason", "statistic"])
            for name in self.kept:
                w.writerow([name, "kept", ""])
            for name, reason, stat in self.removed:
                w.writerow([name, reason, "" if stat is None or stat != stat else repr(float(stat))])


def _canonical(x: np.ndarray) -> np.ndarray:
    y = x + 0.0  # -0.0 -> 0.0
    y[np.isnan(y)] = np.nan
    return y


def remove_duplicates(matrix: FeatureMatrix):
    rows = matrix.train_mask
    report = SelectionReport()
    groups: dict = {}
    for j, name in enumerate(matrix.names):
        x = _canonical(matrix.values[rows, j])
        present = x[~np.isnan(x)]
        if len(np.unique(present)) <= 1:
            report.removed.append((name, CONSTANT, float(len(np.unique(present)))))
            continue
        groups.setdefault(x.tobytes(), []).append(name)
    survivors = []
    for names in groups.values():
        names = sorted(names)
        survivors.append(names[0])
        report.removed.extend((n, DUPLICATE, None) for n in names[1:])
    report.removed.sort(key=lambda r: (r[1] != CONSTANT, r[0]))
    report.kept = sorted(survivors)
    return matrix.keep(report.kept), report


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov D = max |F_a - F_b| over the pooled sample."""
    a = np.sort(a)
    b = np.sort(b)
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / len(a)
    fb = np.searchsorted(b, pts, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def detect_drift(matrix: FeatureMatrix, order_values: Optional[np.ndarray], cfg: SelectionConfig = SelectionConfig()):
    """Compare the earliest ``drift_split`` share of training rows with the rest (by order value)."""
    report = SelectionReport(kept=list(matrix.names))
    if order_values is None:
        return report
    train = np.flatnonzero(matrix.train_mask)
    key = np.asarray(order_values, dtype=np.float64)[train]
    ranked = train[np.lexsort((train, np.where(np.isnan(key), np.inf, key)))]
    cut = int(np.floor(cfg.drift_split * len(ranked) + 1e-9))
    early, late = ranked[:cut], ranked[cut:]
    if len(early) == 0 or len(late) == 0:
        return report
    kept = []
    for j, name in enumerate(matrix.names):
        a = matrix.values[early, j]
        b = matrix.values[late, j]
        a, b = a[~np.isnan(a)], b[~np.isnan(b)]
        if len(a) == 0 or len(b) == 0:
            kept.append(name)
            continue
        d = ks_statistic(a, b)
        if d > cfg.ks_threshold:
            report.removed.append((name, DRIFT, d))
        else:
            kept.append(name)
    report.kept = sorted(kept)
    report.removed.sort()
    return report


def equal_frequency_bins(x: np.ndarray, n_bins: int = 10) -> np.ndarray:
    """Bin ids; nulls get their own bin (-1). Few distinct values map one bin per value."""
    out = np.full(len(x), -1, dtype=np.int64)
    ok = ~np.isnan(x)
    vals = x[ok]
    if len(vals) == 0:
        return out
    uniq = np.unique(vals)
    if len(uniq) <= n_bins:
        out[ok] = np.searchsorted(uniq, vals)
        return out
    edges = np.unique(np.quantile(vals, np.linspace(0, 1, n_bins + 1)[1:-1]))
    out[ok] = np.searchsorted(edges, vals, side="right")
    return out


def contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1 if len(ia) else 0, ib.max() + 1 if len(ib) else 0))
    np.add.at(table, (ia, ib), 1)
    return table


def chi_square_statistic(table: np.ndarray) -> tuple[float, int]:
    """Pearson chi-square without continuity correction, and degrees of freedom."""
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    r, c = table.shape
    if r < 2 or c < 2:
        raise DegenerateTable(f"{r}x{c} contingency table")
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    return float(((table - expected) ** 2 / expected).sum()), (r - 1) * (c - 1)


def target_bins(target: TargetColumn, n_bins: int = 10) -> np.ndarray:
    t = target.values
    if target.task == "classification":
        codes = np.full(len(t), -1, dtype=np.int64)
        for j, c in enumerate(target.classes):
            codes[t == c] = j
        return codes
    return equal_frequency_bins(np.asarray(t, dtype=np.float64), n_bins)


def chi_square_filter(matrix: FeatureMatrix, target: TargetColumn, cfg: SelectionConfig = SelectionConfig()):
    report = SelectionReport()
    train = matrix.train_mask & target.train_mask
    yb = target_bins(target, cfg.n_bins)[train]
    if len(np.unique(yb)) < 2:
        logger.warning("target has fewer than two bins on training rows; chi-square stage skipped")
        report.kept = sorted(matrix.names)
        return report
    kept = []
    for j, name in enumerate(matrix.names):
        xb = equal_frequency_bins(matrix.values[train, j], cfg.n_bins)
        try:
            stat, dof = chi_square_statistic(contingency(xb, yb))
        except DegenerateTable:
            report.removed.append((name, CONSTANT, 0.0))
            continue
        p = float(stats.chi2.sf(stat, dof))
        if p > cfg.alpha:
            report.removed.append((name, INDEPENDENT, p))
        else:
            kept.append(name)
    report.kept = sorted(kept)
    report.removed.sort()
    return report


def select(matrix: FeatureMatrix, target: TargetColumn, order_values: Optional[np.ndarray] = None,
           cfg: SelectionConfig = SelectionConfig()):
    """Duplicates/constants, then drift, then chi-square; returns (matrix, report)."""
    report = SelectionReport()
    current, first = remove_duplicates(matrix)
    report.extend(first)
    drift = detect_drift(current, order_values, cfg)
    report.extend(drift)
    current = current.keep(drift.kept)
    chi = chi_square_filter(current, target, cfg)
    report.extend(chi)
    current = current.keep(chi.kept)
    report.kept = list(current.names)
    return current, report
