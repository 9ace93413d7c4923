"""Ranking metrics and the per-cell result records behind every benchmark table."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

METHODS = ("ibl", "icl", "logistic", "knn", "svm")


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve as the Mann-Whitney statistic.

    Equals the fraction of (positive, negative) pairs where the positive
    scores higher, with tied pairs counted 1/2. Computed via sort-and-rank,
    O(n log n).
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.ndim != 1 or y.ndim != 1 or s.shape[0] != y.shape[0]:
        raise ValueError("scores and labels must be equal-length vectors")
    n = s.shape[0]
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("labels must contain both classes")
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(n, dtype=float)
    boundaries = np.flatnonzero(np.diff(sorted_s) != 0) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [n]])
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + b - 1) + 1.0  # average 1-based rank of the tie group
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def accuracy(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> float:
    """Fraction of rows where thresholded score agrees with the label."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if s.shape != y.shape:
        raise ValueError("scores and labels must be equal-length vectors")
    return float(((s >= threshold).astype(int) == y).mean())


@dataclass(frozen=True)
class ResultRecord:
    """One experiment cell: (dataset, seed, train size, method) -> AUC plus diagnostics.

    ``auc`` is absent (None) exactly when no usable model existed for the
    cell, which keeps such cells out of plots rather than charting a zero.
    """

    dataset_id: str
    seed: int
    n_train: int
    method: str
    auc: float | None
    n_attempts: int = 0
    n_valid: int = 0
    selected_attempt: str | None = None
    n_fallback: int = 0
    error: str | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.auc is not None and not (0.0 <= self.auc <= 1.0):
            raise ValueError("auc must lie in [0, 1]")
        if self.method == "ibl" and (self.auc is None) != (self.n_valid == 0):
            raise ValueError("ibl records carry an AUC exactly when some model validated")

    @property
    def cell_key(self) -> tuple[str, int, int, str]:
        return (self.dataset_id, self.seed, self.n_train, self.method)


CSV_FIELDS = [
    "dataset_id", "seed", "n_train", "method", "auc",
    "n_attempts", "n_valid", "selected_attempt", "n_fallback", "error",
]


def _record_to_row(r: ResultRecord) -> dict:
    row = asdict(r)
    row["auc"] = "" if r.auc is None else repr(float(r.auc))
    row["selected_attempt"] = r.selected_attempt or ""
    row["error"] = r.error or ""
    return row


def write_results_csv(records: Iterable[ResultRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for record in records:
            writer.writerow(_record_to_row(record))


def append_result_csv(record: ResultRecord, path: str | Path) -> None:
    """Append one record, writing the header if the file does not exist yet."""
    path = Path(path)
    new_file = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if new_file:
            writer.writeheader()
        writer.writerow(_record_to_row(record))


def read_results_csv(path: str | Path) -> list[ResultRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(ResultRecord(
                dataset_id=row["dataset_id"],
                seed=int(row["seed"]),
                n_train=int(row["n_train"]),
                method=row["method"],
                auc=float(row["auc"]) if row["auc"] else None,
                n_attempts=int(row["n_attempts"]),
                n_valid=int(row["n_valid"]),
                selected_attempt=row["selected_attempt"] or None,
                n_fallback=int(row.get("n_fallback") or 0),
                error=row.get("error") or None,
            ))
    return records


def write_results_json(records: Iterable[ResultRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([asdict(r) for r in records], fh, indent=2)
        fh.write("\n")


def plot_table(records: Iterable[ResultRecord]) -> list[dict]:
    """Plot-ready long format: x = n_train, y = auc, series = method.

    Cells without an AUC are omitted, so they simply do not appear in charts.
    """
    out = []
    for r in records:
        if r.auc is None:
            continue
        out.append({
            "dataset_id": r.dataset_id,
            "seed": r.seed,
            "n_train": r.n_train,
            "method": r.method,
            "auc": r.auc,
        })
    out.sort(key=lambda d: (d["dataset_id"], d["seed"], d["n_train"], d["method"]))
    return out


def write_plot_csv(records: Iterable[ResultRecord], path: str | Path) -> None:
    rows = plot_table(records)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["dataset_id", "seed", "n_train", "method", "auc"])
        writer.writeheader()
        for row in rows:
            row = dict(row)
            row["auc"] = repr(float(row["auc"]))
            writer.writerow(row)


__all__ = [
    "auc", "accuracy", "ResultRecord", "METHODS",
    "write_results_csv", "append_result_csv", "read_results_csv",
    "write_results_json", "plot_table", "write_plot_csv",
]
