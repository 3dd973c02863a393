"""Confusion matrices, accuracies, jellyfish TP/FP bookkeeping and multi-run aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CLASS_NAMES, N_CLASSES, ClassLabel

JELLY = int(ClassLabel.JELLYFISH)


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predictions.

    ``reported`` optionally holds, per true class, how many events passed the
    jellyfish gate (the parenthesised values of a gated confusion matrix).
    """

    m: np.ndarray
    reported: np.ndarray | None = None

    def __post_init__(self):
        self.m = np.asarray(self.m)
        if self.m.shape != (N_CLASSES, N_CLASSES):
            raise ValueError(f"confusion matrix must be {N_CLASSES}x{N_CLASSES}, got {self.m.shape}")
        if np.any(self.m < 0):
            raise ValueError("confusion matrix entries must be non-negative")
        if self.reported is not None:
            self.reported = np.asarray(self.reported)
            if self.reported.shape != (N_CLASSES,):
                raise ValueError("reported counts must have one entry per class")

    @classmethod
    def from_predictions(cls, labels, preds, reported_mask=None) -> "ConfusionMatrix":
        y = np.asarray(labels, dtype=np.int64)
        p = np.asarray(preds, dtype=np.int64)
        m = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
        np.add.at(m, (y, p), 1)
        rep = None
        if reported_mask is not None:
            rep = np.bincount(y[np.asarray(reported_mask, dtype=bool)], minlength=N_CLASSES)
        return cls(m, rep)

    @property
    def row_totals(self) -> np.ndarray:
        return self.m.sum(axis=1)

    def to_dict(self) -> dict:
        d = {"matrix": self.m.tolist()}
        if self.reported is not None:
            d["reported"] = self.reported.tolist()
        return d


def _as_array(matrix) -> np.ndarray:
    return matrix.m if isinstance(matrix, ConfusionMatrix) else np.asarray(matrix)


def accuracy(matrix) -> float:
    m = _as_array(matrix)
    total = m.sum()
    if total <= 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return float(np.trace(m) / total)


def per_class_accuracy(matrix) -> np.ndarray:
    """Diagonal over row sums; NaN flags classes with no events."""
    m = _as_array(matrix).astype(np.float64)
    if m.sum() <= 0:
        raise ValueError("per-class accuracy of an empty confusion matrix is undefined")
    rows = m.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rows > 0, np.diag(m) / np.where(rows > 0, rows, 1), np.nan)


def jelly_tp_rate(cm: ConfusionMatrix, gated: bool = False) -> float:
    rows = cm.row_totals
    if rows[JELLY] == 0:
        return float("nan")
    hits = cm.reported[JELLY] if gated else cm.m[JELLY, JELLY]
    return float(hits / rows[JELLY])


def jelly_fp_count(cm: ConfusionMatrix, gated: bool = False) -> int:
    """Non-jellyfish events labelled (or, gated, reported) as jellyfish."""
    if gated:
        return int(cm.reported.sum() - cm.reported[JELLY])
    return int(cm.m[:, JELLY].sum() - cm.m[JELLY, JELLY])


def non_jelly_total(cm: ConfusionMatrix) -> int:
    return int(cm.m.sum() - cm.row_totals[JELLY])


def jelly_fp_rate(cm: ConfusionMatrix, gated: bool = False) -> float:
    n = non_jelly_total(cm)
    return jelly_fp_count(cm, gated) / n if n else float("nan")


def std_sum_metric(matrices: Sequence) -> float:
    """Sum over classes of the across-run sample std (n-1) of true-positive counts."""
    if len(matrices) < 2:
        raise ValueError("need at least two confusion matrices")
    diag = np.stack([np.diag(_as_array(m)) for m in matrices]).astype(np.float64)
    return float(np.sum(np.std(diag, axis=0, ddof=1)))


def normalize(values: Sequence[float], baseline: float) -> list[float]:
    """Divide each value by the baseline configuration's value."""
    if baseline == 0:
        raise ValueError("cannot normalise by a zero baseline")
    return [float(v) / baseline for v in values]


@dataclass
class RunMetrics:
    """One seed's evaluation of one method."""

    seed: int
    frame_acc: float
    events: ConfusionMatrix
    gated: bool = False

    @property
    def event_acc(self) -> float:
        return accuracy(self.events)

    @property
    def jelly_acc(self) -> float:
        return jelly_tp_rate(self.events, self.gated)

    @property
    def jelly_fp(self) -> int:
        return jelly_fp_count(self.events, self.gated)

    @property
    def jelly_fp_rate(self) -> float:
        return jelly_fp_rate(self.events, self.gated)

    def scalars(self) -> dict[str, float]:
        return {
            "frame_acc": self.frame_acc,
            "event_acc": self.event_acc,
            "jelly_acc": self.jelly_acc,
            "jelly_fp": float(self.jelly_fp),
            "jelly_fp_rate": self.jelly_fp_rate,
        }


def mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    v = v[~np.isnan(v)]
    if len(v) == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else float("nan")


@dataclass
class RunReport:
    method: str
    runs: list[RunMetrics]
    mean: dict[str, float] = field(default_factory=dict)
    std: dict[str, float] = field(default_factory=dict)
    mean_matrix: np.ndarray | None = None
    mean_reported: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_runs": len(self.runs),
            "mean": self.mean,
            "std": self.std,
            "std_sum_event_tp": std_sum_metric([r.events for r in self.runs]),
            "mean_confusion": self.mean_matrix.tolist(),
            "mean_reported": None if self.mean_reported is None else self.mean_reported.tolist(),
            "runs": [{"seed": r.seed, **r.scalars(), **r.events.to_dict()} for r in self.runs],
        }


def aggregate_runs(runs: Sequence[RunMetrics], method: str = "") -> RunReport:
    """Mean and sample std of every scalar metric plus the element-wise mean matrix."""
    runs = list(runs)
    if len(runs) < 2:
        raise ValueError("at least two runs are required for std reporting")
    shapes = {r.events.m.shape for r in runs}
    if len(shapes) != 1:
        raise ValueError(f"mismatched confusion matrix shapes: {shapes}")
    keys = runs[0].scalars().keys()
    mean, std = {}, {}
    for k in keys:
        mean[k], std[k] = mean_std([r.scalars()[k] for r in runs])
    mean_matrix = np.mean([r.events.m for r in runs], axis=0)
    mean_rep = None
    if all(r.events.reported is not None for r in runs):
        mean_rep = np.mean([r.events.reported for r in runs], axis=0)
    return RunReport(method, runs, mean, std, mean_matrix, mean_rep)


# ---------------------------------------------------------------------------
# export


def _jsonable(x):
    if isinstance(x, float) and math.isnan(x):
        return None
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def write_report_json(reports: Sequence[RunReport], path, extra: dict | None = None) -> Path:
    doc = {"reports": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    path = Path(path)
    path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


METRIC_COLUMNS = ("frame_acc", "event_acc", "jelly_acc", "jelly_fp", "jelly_fp_rate")


def write_report_csv(reports: Sequence[RunReport], path) -> Path:
    """One row per method: mean and std of every metric."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "n_runs"] + [f"{c}{s}" for c in METRIC_COLUMNS for s in ("", "_std")])
    for r in reports:
        row = [r.method, len(r.runs)]
        for c in METRIC_COLUMNS:
            row += [f"{r.mean[c]:.6g}", f"{r.std[c]:.6g}"]
        w.writerow(row)
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_confusion_csv(matrix, path, reported=None) -> Path:
    """Confusion grid with class-name header; an optional ``reported`` column."""
    m = _as_array(matrix)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\pred", *CLASS_NAMES] + (["reported"] if reported is not None else []))
    for i, name in enumerate(CLASS_NAMES):
        row = [name] + [f"{v:.6g}" for v in m[i]]
        if reported is not None:
            row.append(f"{reported[i]:.6g}")
        w.writerow(row)
    path = Path(path)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path
