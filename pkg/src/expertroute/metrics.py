"""Multiclass metrics over an option-letter confusion matrix.

Rows are gold labels, columns predictions. Ratios with a zero denominator
are reported as 0 (kappa is 1 when observed agreement is perfect).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import NoGoldLabels

NO_ANSWER = "-"  # prediction label for failed pipelines
METRIC_NAMES = ("acc", "weighted_f1", "precision", "specificity", "mcc", "kappa")


def confusion_matrix(gold: Sequence[str], pred: Sequence[str | None]) -> tuple[list[str], np.ndarray]:
    preds = [NO_ANSWER if p is None else p for p in pred]
    labels = sorted(set(gold) | set(preds))
    index = {l: i for i, l in enumerate(labels)}
    cm = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, preds):
        cm[index[g], index[p]] += 1
    return labels, cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return out


def metrics_from_confusion(cm) -> dict[str, float]:
    cm = np.asarray(cm, dtype=np.int64)
    n = cm.sum()
    if n == 0:
        raise NoGoldLabels("confusion matrix is empty")
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1).astype(float)   # gold counts per class
    predicted = cm.sum(axis=0).astype(float)
    fp = predicted - tp
    fn = support - tp
    tn = n - tp - fp - fn

    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    specificity = _safe_div(tn, tn + fp)

    acc = tp.sum() / n
    p_e = float((support * predicted).sum()) / float(n) ** 2
    if p_e == 1.0:
        kappa = 1.0 if acc == 1.0 else 0.0
    else:
        kappa = (acc - p_e) / (1 - p_e)

    # multiclass MCC in covariance form
    c, s = float(tp.sum()), float(n)
    cov_tp = c * s - float((predicted * support).sum())
    cov_pp = s * s - float((predicted ** 2).sum())
    cov_tt = s * s - float((support ** 2).sum())
    denom = np.sqrt(cov_pp * cov_tt)
    mcc = cov_tp / denom if denom > 0 else 0.0

    return {
        "acc": float(acc),
        "weighted_f1": float((f1 * support).sum() / n),
        "precision": float(precision.mean()),
        "specificity": float(specificity.mean()),
        "mcc": float(mcc),
        "kappa": float(kappa),
    }


def compute_metrics(outcomes: Iterable[tuple[str | None, str | None]]) -> dict[str, float]:
    """Metrics over ``(gold, predicted)`` pairs; pairs without gold are skipped,
    a ``None`` prediction counts as a wrong answer."""
    pairs = [(g, p) for g, p in outcomes if g is not None]
    if not pairs:
        raise NoGoldLabels("no outcome carries a gold label")
    _, cm = confusion_matrix([g for g, _ in pairs], [p for _, p in pairs])
    return metrics_from_confusion(cm)
