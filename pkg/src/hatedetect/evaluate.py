"""Confusion matrices, per-class precision/recall/F1, report rendering.

F1 comes in macro (the headline number, robust to class imbalance) and
support-weighted flavors; degenerate 0/0 cases resolve to 0 and are
flagged in the report rather than passing silently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .validation import ValidationError, check_positive_int


@dataclass(frozen=True)
class EvalReport:
    class_names: tuple[str, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    macro_f1: float
    weighted_f1: float
    accuracy: float
    degenerate_classes: tuple[str, ...]  # classes scored 0 by the 0/0 convention

    def to_dict(self) -> dict:
        return {
            "classes": {
                name: {
                    "precision": self.precision[i],
                    "recall": self.recall[i],
                    "f1": self.f1[i],
                    "support": self.support[i],
                }
                for i, name in enumerate(self.class_names)
            },
            "macro_f1": self.macro_f1,
            "weighted_f1": self.weighted_f1,
            "accuracy": self.accuracy,
            "degenerate_classes": list(self.degenerate_classes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = [f"{'class':<10} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}"]
        for i, name in enumerate(self.class_names):
            lines.append(
                f"{name:<10} {self.precision[i]:>9.4f} {self.recall[i]:>9.4f} "
                f"{self.f1[i]:>9.4f} {self.support[i]:>8d}"
            )
        lines.append("")
        lines.append(f"accuracy    {self.accuracy:.4f}")
        lines.append(f"macro F1    {self.macro_f1:.4f}")
        lines.append(f"weighted F1 {self.weighted_f1:.4f}")
        if self.degenerate_classes:
            lines.append(f"degenerate classes (0/0 -> 0): {', '.join(self.degenerate_classes)}")
        return "\n".join(lines)


def confusion_matrix(y_true: list[int], y_pred: list[int], k: int) -> np.ndarray:
    """K x K counts; rows are true classes, columns predictions."""
    check_positive_int(k, "k")
    if len(y_true) != len(y_pred):
        raise ValidationError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    cm = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        if not 0 <= t < k:
            raise ValidationError(f"true label {t} out of range [0, {k})")
        if not 0 <= p < k:
            raise ValidationError(f"predicted label {p} out of range [0, {k})")
        cm[t, p] += 1
    return cm


def f1_scores(cm: np.ndarray, class_names: tuple[str, ...] | None = None) -> EvalReport:
    """Per-class P/R/F1 from a confusion matrix, with macro and weighted means."""
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValidationError(f"confusion matrix must be square, got shape {cm.shape}")
    if (cm < 0).any():
        raise ValidationError("confusion matrix entries must be non-negative")
    k = cm.shape[0]
    if class_names is None:
        class_names = tuple(str(i) for i in range(k))
    if len(class_names) != k:
        raise ValidationError(f"{len(class_names)} class names for a {k}x{k} matrix")

    precision, recall, f1 = [], [], []
    degenerate = []
    support = cm.sum(axis=1)
    for i in range(k):
        tp = int(cm[i, i])
        fp = int(cm[:, i].sum()) - tp
        fn = int(cm[i, :].sum()) - tp
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn > 0 else 0.0
        if (tp + fp == 0) or (tp + fn == 0) or (2 * tp + fp + fn == 0):
            degenerate.append(class_names[i])
        precision.append(p)
        recall.append(r)
        f1.append(f)

    total = int(cm.sum())
    accuracy = float(np.trace(cm)) / total if total else 0.0
    macro = float(np.mean(f1)) if k else 0.0
    weighted = (
        float(sum(s * f for s, f in zip(support, f1)) / support.sum()) if support.sum() else 0.0
    )
    return EvalReport(
        class_names=class_names,
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        support=tuple(int(s) for s in support),
        macro_f1=macro,
        weighted_f1=weighted,
        accuracy=accuracy,
        degenerate_classes=tuple(degenerate),
    )


def confusion_to_csv(cm: np.ndarray, class_names: tuple[str, ...]) -> str:
    lines = ["true\\pred," + ",".join(class_names)]
    for i, name in enumerate(class_names):
        lines.append(name + "," + ",".join(str(int(x)) for x in cm[i]))
    return "\n".join(lines) + "\n"
