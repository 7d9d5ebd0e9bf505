"""Confusion matrices, per-class metrics and report emission.

Per-class "accuracy" is reported two ways: the one-vs-rest definition
(TP+TN)/total, and plain recall. Published per-class accuracy tables for
this kind of classifier often equal the recall column, so both are emitted
under explicit names rather than silently choosing one.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrix, ShapeError


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # [n, n] int64, rows = true class, cols = predicted
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsRow:
    class_name: str
    precision: float
    recall: float
    f1: float
    specificity: float
    accuracy_ovr: float  # one-vs-rest: (TP + TN) / total
    accuracy_recall: float  # the recall-as-accuracy convention


def confusion(
    y_true, y_pred, n_classes: int, class_names: list[str] | None = None
) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"label lists differ in length: {len(y_true)} vs {len(y_pred)}")
    if len(y_true) and (
        y_true.min() < 0
        or y_pred.min() < 0
        or y_true.max() >= n_classes
        or y_pred.max() >= n_classes
    ):
        raise ShapeError(f"labels outside 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    names = class_names if class_names is not None else [str(i) for i in range(n_classes)]
    return ConfusionMatrix(counts=counts, class_names=list(names))


def combine(folds: list[ConfusionMatrix]) -> ConfusionMatrix:
    """Element-wise sum of per-fold matrices."""
    if not folds:
        raise EmptyMatrix("no matrices to combine")
    first = folds[0]
    for cm in folds[1:]:
        if cm.counts.shape != first.counts.shape or cm.class_names != first.class_names:
            raise ShapeError("fold matrices differ in shape or class names")
    total = np.sum([cm.counts for cm in folds], axis=0)
    return ConfusionMatrix(counts=total.astype(np.int64), class_names=first.class_names)


def _safe_div(num: float, den: float, what: str) -> float:
    if den == 0:
        warnings.warn(f"zero denominator for {what}; reporting 0", stacklevel=3)
        return 0.0
    return num / den


def per_class_metrics(cm: ConfusionMatrix) -> list[MetricsRow]:
    counts = cm.counts
    total = counts.sum()
    rows = []
    for i, name in enumerate(cm.class_names):
        tp = int(counts[i, i])
        fn = int(counts[i, :].sum()) - tp
        fp = int(counts[:, i].sum()) - tp
        tn = int(total) - tp - fn - fp
        precision = _safe_div(tp, tp + fp, f"precision[{name}]")
        recall = _safe_div(tp, tp + fn, f"recall[{name}]")
        f1 = _safe_div(2 * precision * recall, precision + recall, f"f1[{name}]")
        specificity = _safe_div(tn, tn + fp, f"specificity[{name}]")
        accuracy_ovr = _safe_div(tp + tn, total, f"accuracy[{name}]")
        rows.append(
            MetricsRow(
                class_name=name,
                precision=precision,
                recall=recall,
                f1=f1,
                specificity=specificity,
                accuracy_ovr=accuracy_ovr,
                accuracy_recall=recall,
            )
        )
    return rows


def overall_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix has no items")
    return float(np.trace(cm.counts) / cm.total)


# --- report emission --------------------------------------------------------

_CSV_FIELDS = (
    "class",
    "precision",
    "recall",
    "f1",
    "specificity",
    "accuracy_ovr",
    "accuracy_recall",
)


def metrics_csv(rows: list[MetricsRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for r in rows:
        writer.writerow(
            [
                r.class_name,
                repr(r.precision),
                repr(r.recall),
                repr(r.f1),
                repr(r.specificity),
                repr(r.accuracy_ovr),
                repr(r.accuracy_recall),
            ]
        )
    return buf.getvalue()


def metrics_json(cm: ConfusionMatrix, fold_accuracies: list[float] | None = None) -> str:
    rows = per_class_metrics(cm)
    payload = {
        "overall_accuracy": overall_accuracy(cm),
        "classes": [vars(r) for r in rows],
        "confusion": cm.counts.tolist(),
        "class_names": cm.class_names,
    }
    if fold_accuracies is not None:
        payload["fold_accuracies"] = fold_accuracies
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def confusion_text(cm: ConfusionMatrix) -> str:
    """Plain-text table, true classes in rows, predictions in columns."""
    width = max(6, max(len(n) for n in cm.class_names) + 1, len(str(cm.counts.max())) + 1)
    header = " " * width + "".join(f"{n:>{width}}" for n in cm.class_names)
    lines = [header]
    for name, row in zip(cm.class_names, cm.counts):
        lines.append(f"{name:>{width}}" + "".join(f"{v:>{width}}" for v in row))
    return "\n".join(lines) + "\n"


def confusion_svg(cm: ConfusionMatrix) -> str:
    """Self-contained SVG heatmap of the matrix; deterministic output."""
    n = len(cm.class_names)
    cell = 64
    margin = 80
    size = margin + n * cell + 20
    peak = max(1, int(cm.counts.max()))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'font-family="monospace" font-size="12">'
    ]
    for i in range(n):
        for j in range(n):
            v = int(cm.counts[i, j])
            shade = int(255 - 205 * (v / peak))
            x = margin + j * cell
            y = margin + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},255)" stroke="white"/>'
            )
            text_fill = "black" if shade > 120 else "white"
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" text-anchor="middle" '
                f'fill="{text_fill}">{v}</text>'
            )
    for i, name in enumerate(cm.class_names):
        parts.append(
            f'<text x="{margin - 10}" y="{margin + i * cell + cell / 2 + 4}" '
            f'text-anchor="end">{name}</text>'
        )
        parts.append(
            f'<text x="{margin + i * cell + cell / 2}" y="{margin - 10}" '
            f'text-anchor="middle">{name}</text>'
        )
    parts.append(
        f'<text x="{margin - 40}" y="{margin - 40}" text-anchor="start">true \\ predicted</text>'
    )
    parts.append("</svg>")
    return "".join(parts) + "\n"
