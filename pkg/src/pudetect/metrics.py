"""Ranking and threshold metrics for PU model evaluation.

All scores are plain 1-d float arrays; labels are binary with 1 meaning
human/legitimate. AUC is computed exactly from ranks (Mann-Whitney), not
from a binned ROC curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "roc_auc",
    "threshold_at_recall",
    "precision_at_threshold",
    "confusion_at_threshold",
    "EvaluationReport",
]


def roc_auc(scores, labels) -> float:
    """Exact ROC AUC via the rank statistic.

    Equals P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg) over
    all positive/negative pairs. Ties receive average ranks, which is the
    Mann-Whitney convention.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError("scores and labels must be 1-d arrays of equal length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative label")

    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    # average rank within each tie group
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1

    rank_sum_pos = ranks[pos].sum()
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def threshold_at_recall(positive_scores, target_recall: float = 0.99) -> float:
    """Largest threshold tau with fraction(scores >= tau) >= target_recall.

    The answer is always the k-th largest score with k = ceil(target * n):
    any larger tau drops below the target, and tau itself keeps at least k
    scores on the positive side.
    """
    scores = np.asarray(positive_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("cannot pick a threshold from an empty score list")
    if not 0.0 < target_recall <= 1.0:
        raise ValueError("target_recall must be in (0, 1]")
    k = int(np.ceil(target_recall * scores.size))
    return float(np.partition(scores, scores.size - k)[scores.size - k])


def confusion_at_threshold(scores, labels, threshold: float):
    """(tp, fp, tn, fn) with predicted-positive meaning score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    tn = int(np.sum(~pred & ~pos))
    fn = int(np.sum(~pred & pos))
    return tp, fp, tn, fn


def precision_at_threshold(scores, labels, threshold: float):
    """Precision TP/(TP+FP) at the threshold.

    Returns (precision, no_positive_predictions_flag); precision is 0.0 and
    the flag True when nothing is predicted positive.
    """
    labels = np.asarray(labels)
    if labels.size == 0 or (labels == 1).all() or (labels != 1).all():
        raise ValueError("precision needs both classes present")
    tp, fp, _, _ = confusion_at_threshold(scores, labels, threshold)
    if tp + fp == 0:
        return 0.0, True
    return tp / (tp + fp), False


@dataclass
class EvaluationReport:
    """Per-cell evaluation result: one (method, topper, mixing, seed) run."""

    method: str
    topper: float
    mixing: float
    seed: int
    auc: float
    precision_at_recall99: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    no_positive_predictions: bool = False
    notes: str = field(default="")

    COLUMNS = (
        "method", "topper", "mixing", "seed", "auc", "precision_at_recall99",
        "threshold", "tp", "fp", "tn", "fn", "no_positive_predictions", "notes",
    )

    def to_row(self) -> list[str]:
        """Serialize to strings that round-trip losslessly (repr for floats)."""
        vals = []
        for col in self.COLUMNS:
            v = getattr(self, col)
            if isinstance(v, bool):
                vals.append("1" if v else "0")
            elif isinstance(v, float):
                vals.append(repr(v))
            else:
                vals.append(str(v))
        return vals

    @classmethod
    def from_row(cls, row) -> "EvaluationReport":
        m = dict(zip(cls.COLUMNS, row))
        return cls(
            method=m["method"],
            topper=float(m["topper"]),
            mixing=float(m["mixing"]),
            seed=int(m["seed"]),
            auc=float(m["auc"]),
            precision_at_recall99=float(m["precision_at_recall99"]),
            threshold=float(m["threshold"]),
            tp=int(m["tp"]),
            fp=int(m["fp"]),
            tn=int(m["tn"]),
            fn=int(m["fn"]),
            no_positive_predictions=m["no_positive_predictions"] == "1",
            notes=m["notes"],
        )


def evaluate_scores(method, topper, mixing, seed, test_scores, test_labels,
                    val_positive_scores, target_recall: float = 0.99) -> EvaluationReport:
    """Build the full report for one cell from raw scores.

    The threshold comes from validation known-positive scores at the target
    recall; AUC and precision are computed on the test scores/labels.
    """
    auc = roc_auc(test_scores, test_labels)
    tau = threshold_at_recall(val_positive_scores, target_recall)
    prec, flag = precision_at_threshold(test_scores, test_labels, tau)
    tp, fp, tn, fn = confusion_at_threshold(test_scores, test_labels, tau)
    return EvaluationReport(
        method=method, topper=topper, mixing=mixing, seed=seed,
        auc=auc, precision_at_recall99=prec, threshold=tau,
        tp=tp, fp=fp, tn=tn, fn=fn, no_positive_predictions=flag,
    )
