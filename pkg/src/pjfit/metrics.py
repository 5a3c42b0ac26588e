"""Binary classification metrics: thresholded confusion stats and ROC AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError


class UndefinedMetricError(ValueError):
    """The metric is undefined for this input (e.g. single-class AUC)."""


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    precision_defined: bool = True
    recall_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "threshold": self.threshold,
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
        }

    def table(self) -> str:
        rows = [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ]
        if self.auc is not None:
            rows.append(("auc", self.auc))
        lines = [f"{name:<10} {value:8.4f}" for name, value in rows]
        lines.append(
            f"{'counts':<10} tp={self.tp} fp={self.fp} tn={self.tn} fn={self.fn} "
            f"(threshold {self.threshold})"
        )
        return "\n".join(lines)


def _check_inputs(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.ndim != 1:
        raise ValidationError("scores and labels must be 1-D")
    if scores.shape != labels.shape:
        raise ValidationError(
            f"scores length {scores.shape[0]} != labels length {labels.shape[0]}"
        )
    if scores.size == 0:
        raise ValidationError("empty input")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("labels must be binary 0/1")
    return scores, labels.astype(np.int64)


def threshold_metrics(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """Confusion-matrix metrics predicting 1 iff score >= threshold.

    A precision or recall with zero denominator is reported as 0 and
    flagged via the corresponding ``*_defined`` field.
    """
    scores, labels = _check_inputs(scores, labels)
    pred = scores >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    precision_defined = (tp + fp) > 0
    recall_defined = (tp + fn) > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if recall_defined else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(
        accuracy=(tp + tn) / scores.size,
        precision=precision,
        recall=recall,
        f1=f1,
        auc=None,
        threshold=threshold,
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision_defined=precision_defined,
        recall_defined=recall_defined,
    )


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative,
    with ties credited 0.5 (rank-sum formulation)."""
    scores, labels = _check_inputs(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def evaluate(scores, labels, threshold: float = 0.5) -> MetricsReport:
    """Thresholded metrics plus AUC (None when only one class is present)."""
    report = threshold_metrics(scores, labels, threshold)
    labels_arr = np.asarray(labels)
    if 0 < labels_arr.sum() < labels_arr.size:
        report.auc = roc_auc(scores, labels)
    return report
