"""Confusion-matrix construction and the full scoring metric suite.

Rows are expert-annotated stages, columns are predictions, in the fixed
order W, N1, N2, N3, REM. Per-class scores come from one-vs-rest
TP/TN/FP/FN reduction; any 0/0 ratio is defined as 0, and classes absent
from both truth and prediction stay out of the macro averages.
"""

from dataclasses import dataclass

import numpy as np

from . import NUM_STAGES, STAGES
from .errors import DegenerateDistribution, InvalidInput


def confusion_from(preds, labels):
    """Count matrix ``counts[true][pred]`` from parallel index vectors."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise InvalidInput(
            f"preds {preds.shape} and labels {labels.shape} must be equal-length vectors"
        )
    if preds.size == 0:
        raise InvalidInput("cannot build a confusion matrix from no samples")
    if preds.min() < 0 or preds.max() >= NUM_STAGES:
        raise InvalidInput("prediction indices outside 0..4")
    if labels.min() < 0 or labels.max() >= NUM_STAGES:
        raise InvalidInput("label indices outside 0..4")
    cm = np.zeros((NUM_STAGES, NUM_STAGES), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def _validate_cm(cm):
    cm = np.asarray(cm, dtype=np.int64)
    if cm.shape != (NUM_STAGES, NUM_STAGES):
        raise InvalidInput(f"confusion matrix must be 5x5, got {cm.shape}")
    if np.any(cm < 0):
        raise InvalidInput("confusion matrix counts must be non-negative")
    if cm.sum() == 0:
        raise InvalidInput("confusion matrix is empty")
    return cm


def one_vs_rest(cm, c):
    """(TP, TN, FP, FN) for class ``c``."""
    cm = np.asarray(cm, dtype=np.int64)
    tp = cm[c, c]
    fn = cm[c].sum() - tp
    fp = cm[:, c].sum() - tp
    tn = cm.sum() - tp - fn - fp
    return int(tp), int(tn), int(fp), int(fn)


def _ratio(num, den):
    return num / den if den else 0.0


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    sensitivity: float
    specificity: float


def class_prf(cm, c, printed_formula=False):
    """Precision/recall/F1/sensitivity/specificity for one class.

    ``printed_formula=True`` switches specificity to the TN/(TP+FN) variant
    that appears in some published metric listings (kept for audit; the
    default is the standard TN/(TN+FP)).
    """
    cm = _validate_cm(cm)
    tp, tn, fp, fn = one_vs_rest(cm, c)
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    if printed_formula:
        specificity = _ratio(tn, tp + fn)
    else:
        specificity = _ratio(tn, tn + fp)
    return ClassScores(precision, recall, f1, recall, specificity)


def kappa_multiclass(cm):
    """Cohen's kappa: (p_o - p_e) / (1 - p_e) over the full matrix."""
    cm = _validate_cm(cm)
    total = cm.sum()
    p_o = np.trace(cm) / total
    rows = cm.sum(axis=1)
    cols = cm.sum(axis=0)
    p_e = float(rows @ cols) / (total * total)
    if p_e >= 1.0 - 1e-15:
        if p_o >= 1.0 - 1e-15:
            return 1.0
        raise DegenerateDistribution(
            "chance agreement is 1 while observed agreement is below 1"
        )
    return float((p_o - p_e) / (1.0 - p_e))


def supported_classes(cm):
    """Classes that occur in truth or prediction (macro-average domain)."""
    cm = np.asarray(cm)
    return [
        c
        for c in range(NUM_STAGES)
        if cm[c].sum() > 0 or cm[:, c].sum() > 0
    ]


@dataclass
class OverallMetrics:
    accuracy: float
    mf1: float
    kappa: float
    macro_sensitivity: float
    macro_specificity: float
    per_class_f1: list


def overall_metrics(cm):
    cm = _validate_cm(cm)
    support = supported_classes(cm)
    scores = [class_prf(cm, c) for c in range(NUM_STAGES)]
    return OverallMetrics(
        accuracy=float(np.trace(cm) / cm.sum()),
        mf1=float(np.mean([scores[c].f1 for c in support])),
        kappa=kappa_multiclass(cm),
        macro_sensitivity=float(np.mean([scores[c].sensitivity for c in support])),
        macro_specificity=float(np.mean([scores[c].specificity for c in support])),
        per_class_f1=[scores[c].f1 for c in range(NUM_STAGES)],
    )


def metrics_report(cm):
    """JSON-ready report: overall block, per-class block, raw + normalized counts."""
    cm = _validate_cm(cm)
    overall = overall_metrics(cm)
    per_class = {}
    for c, name in enumerate(STAGES):
        s = class_prf(cm, c)
        printed = class_prf(cm, c, printed_formula=True)
        tp, tn, fp, fn = one_vs_rest(cm, c)
        per_class[name] = {
            "precision": s.precision,
            "recall": s.recall,
            "f1": s.f1,
            "sensitivity": s.sensitivity,
            "specificity": s.specificity,
            "specificity_printed_variant": printed.specificity,
            "tp": tp, "tn": tn, "fp": fp, "fn": fn,
        }
    row_sums = cm.sum(axis=1, keepdims=True)
    normalized = np.divide(
        cm, row_sums, out=np.zeros(cm.shape, dtype=np.float64),
        where=row_sums > 0,
    )
    return {
        "overall": {
            "accuracy": overall.accuracy,
            "mf1": overall.mf1,
            "kappa": overall.kappa,
            "macro_sensitivity": overall.macro_sensitivity,
            "macro_specificity": overall.macro_specificity,
            "total_epochs": int(cm.sum()),
        },
        "per_class": per_class,
        "confusion": cm.tolist(),
        "confusion_row_normalized": normalized.tolist(),
    }
