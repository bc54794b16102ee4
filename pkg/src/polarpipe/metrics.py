"""Confusion counts and F1 metrics for multi-label predictions.

Macro-F1 averages per-label F1 scores without weighting; micro-F1 pools the
counts first. Any F1 with an empty denominator is defined as 0. For the
binary task the default view scores the negative and the positive class as
two separate rows ("two-class macro"); ``positive-f1`` scores only the
positive class.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import DataError, Dataset
from .probs import ProbabilityMatrix

BINARY_MODES = ("two-class-macro", "positive-f1")


@dataclass(frozen=True)
class ConfusionCounts:
    label: str
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


@dataclass(frozen=True)
class MetricsReport:
    per_label: tuple[ConfusionCounts, ...]
    macro_f1: float
    micro_f1: float
    n_instances: int
    mode: str


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    """F1 = 2tp / (2tp + fp + fn); 0 when the denominator is 0."""
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def confusion(pred: np.ndarray, gold: np.ndarray, label_names: Sequence[str]) -> tuple[ConfusionCounts, ...]:
    """Per-label confusion counts for 0/1 matrices of shape (n, L)."""
    pred = np.asarray(pred, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if pred.shape != gold.shape:
        raise DataError(f"shape mismatch: pred {pred.shape} vs gold {gold.shape}")
    if pred.ndim != 2 or pred.shape[1] != len(label_names):
        raise DataError(
            f"expected shape (n, {len(label_names)}), got {pred.shape}"
        )
    counts = []
    for l, name in enumerate(label_names):
        p = pred[:, l]
        g = gold[:, l]
        tp = int(np.sum((p == 1) & (g == 1)))
        fp = int(np.sum((p == 1) & (g == 0)))
        fn = int(np.sum((p == 0) & (g == 1)))
        tn = int(np.sum((p == 0) & (g == 0)))
        counts.append(ConfusionCounts(label=name, tp=tp, fp=fp, fn=fn, tn=tn))
    return tuple(counts)


def macro_f1(counts: Sequence[ConfusionCounts]) -> float:
    """Unweighted mean of per-label F1."""
    if not counts:
        raise DataError("macro_f1 needs at least one label")
    return sum(c.f1 for c in counts) / len(counts)


def micro_f1(counts: Sequence[ConfusionCounts]) -> float:
    """F1 over counts pooled across labels."""
    if not counts:
        raise DataError("micro_f1 needs at least one label")
    tp = sum(c.tp for c in counts)
    fp = sum(c.fp for c in counts)
    fn = sum(c.fn for c in counts)
    return f1_from_counts(tp, fp, fn)


def binary_two_class_counts(pred: np.ndarray, gold: np.ndarray, name: str) -> tuple[ConfusionCounts, ...]:
    """Score a binary task as two one-vs-rest rows, one per class."""
    rows = []
    for cls in (0, 1):
        p = (pred[:, 0] == cls).astype(np.int64)
        g = (gold[:, 0] == cls).astype(np.int64)
        tp = int(np.sum((p == 1) & (g == 1)))
        fp = int(np.sum((p == 1) & (g == 0)))
        fn = int(np.sum((p == 0) & (g == 1)))
        tn = int(np.sum((p == 0) & (g == 0)))
        rows.append(ConfusionCounts(label=f"{name}={cls}", tp=tp, fp=fp, fn=fn, tn=tn))
    return tuple(rows)


def evaluate(
    pm: ProbabilityMatrix,
    ds: Dataset,
    thresholds: Sequence[float],
    binary_mode: str = "two-class-macro",
) -> MetricsReport:
    """Threshold probabilities, align to gold labels by id, and score.

    Every dataset id must appear in the probability matrix (extra probability
    rows are ignored). ``binary_mode`` only applies to single-label schemas.
    """
    if binary_mode not in BINARY_MODES:
        raise DataError(f"binary_mode must be one of {BINARY_MODES}, got {binary_mode!r}")
    thetas = np.asarray(thresholds, dtype=np.float64)
    width = ds.schema.n_labels
    if thetas.shape != (width,):
        raise DataError(f"expected {width} thresholds, got shape {thetas.shape}")
    if tuple(pm.label_names) != tuple(ds.schema.names):
        raise DataError(
            f"label mismatch: probabilities {pm.label_names} vs schema {ds.schema.names}"
        )
    index = pm.row_index()
    rows = []
    for inst in ds.instances:
        if inst.id not in index:
            raise DataError(f"probabilities missing id {inst.id!r}")
        rows.append(index[inst.id])
    probs = pm.values[rows]
    gold = np.array([inst.labels for inst in ds.instances], dtype=np.int64)
    pred = (probs >= thetas).astype(np.int64)

    if ds.schema.is_binary and binary_mode == "two-class-macro":
        counts = binary_two_class_counts(pred, gold, ds.schema.names[0])
    else:
        counts = confusion(pred, gold, ds.schema.names)
    return MetricsReport(
        per_label=counts,
        macro_f1=macro_f1(counts),
        micro_f1=micro_f1(counts),
        n_instances=len(ds),
        mode="multi-label" if not ds.schema.is_binary else binary_mode,
    )


def format_report(report: MetricsReport) -> str:
    """Render a report as a TSV table plus a summary block.

    Table values print at 4 decimal places; the report object itself keeps
    full precision.
    """
    lines = ["label\ttp\tfp\tfn\tprecision\trecall\tf1"]
    for c in report.per_label:
        lines.append(
            f"{c.label}\t{c.tp}\t{c.fp}\t{c.fn}"
            f"\t{c.precision:.4f}\t{c.recall:.4f}\t{c.f1:.4f}"
        )
    lines.append("")
    lines.append(f"macro_f1\t{report.macro_f1:.4f}")
    lines.append(f"micro_f1\t{report.micro_f1:.4f}")
    lines.append(f"n_instances\t{report.n_instances}")
    lines.append(f"mode\t{report.mode}")
    return "\n".join(lines) + "\n"


def format_machine(report: MetricsReport) -> str:
    """One key-value record per metric, floats at full precision."""
    lines = []
    for c in report.per_label:
        for key, value in (
            ("tp", c.tp),
            ("fp", c.fp),
            ("fn", c.fn),
            ("tn", c.tn),
            ("precision", c.precision),
            ("recall", c.recall),
            ("f1", c.f1),
        ):
            lines.append(f"{c.label}.{key}\t{value!r}")
    lines.append(f"macro_f1\t{report.macro_f1!r}")
    lines.append(f"micro_f1\t{report.micro_f1!r}")
    lines.append(f"n_instances\t{report.n_instances}")
    lines.append(f"mode\t{report.mode}")
    return "\n".join(lines) + "\n"


def save_report(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(format_report(report), encoding="utf-8")
