"""Metric tests, with a brute-force pair-counting oracle for AUC."""

import numpy as np
import pytest

from pjfit.errors import ValidationError
from pjfit.metrics import (
    UndefinedMetricError,
    evaluate,
    roc_auc,
    threshold_metrics,
)


def pair_counting_auc(scores, labels) -> float:
    """O(n^2) oracle: wins plus half-credit ties over all (+,-) pairs."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestThresholdMetrics:
    def test_perfect_split(self):
        r = threshold_metrics([0.9, 0.1], [1, 0])
        assert (r.accuracy, r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0, 1.0)
        assert (r.tp, r.fp, r.tn, r.fn) == (1, 0, 1, 0)

    def test_all_predicted_positive_half_correct(self):
        r = threshold_metrics([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
        assert r.accuracy == 0.5
        assert r.recall == 1.0

    def test_hand_confusion_matrix(self):
        r = threshold_metrics([0.6, 0.6, 0.4], [1, 0, 1])
        assert (r.tp, r.fp, r.fn, r.tn) == (1, 1, 1, 0)
        assert r.precision == 0.5 and r.recall == 0.5 and r.f1 == 0.5

    def test_zero_denominator_flags(self):
        r = threshold_metrics([0.1, 0.2], [0, 0])
        assert r.precision == 0.0 and not r.precision_defined
        assert r.recall == 0.0 and not r.recall_defined

    def test_empty_input_rejected(self):
        with pytest.raises(ValidationError):
            threshold_metrics([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            threshold_metrics([0.5], [1, 0])

    def test_f1_consistent_with_precision_recall(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(2, 50))
            scores = rng.random(n)
            labels = rng.integers(0, 2, size=n)
            r = threshold_metrics(scores, labels)
            if r.precision + r.recall > 0:
                expected = 2 * r.precision * r.recall / (r.precision + r.recall)
                assert abs(r.f1 - expected) < 1e-12
            assert abs(r.accuracy - (r.tp + r.tn) / n) < 1e-12


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_ties(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5

    def test_hand_counted_three_quarters(self):
        # Pairs: (0.9 vs 0.8) win, (0.9 vs 0.6) win, (0.7 vs 0.8) loss,
        # (0.7 vs 0.6) win: 3 of 4.
        assert roc_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == 0.75

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc([0.5, 0.6], [1, 1])

    def test_matches_pair_oracle_exactly(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(2, 201))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            # Quantized scores force plenty of ties.
            scores = np.round(rng.random(n), 2)
            assert roc_auc(scores, labels) == pair_counting_auc(scores, labels)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(43)
        scores = rng.random(60)
        labels = rng.integers(0, 2, size=60)
        labels[0], labels[1] = 0, 1
        base = roc_auc(scores, labels)
        assert roc_auc(3.0 * scores + 1.0, labels) == pytest.approx(base, abs=1e-12)
        assert roc_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)

    def test_label_complement_sums_to_one(self):
        rng = np.random.default_rng(44)
        scores = rng.permutation(np.linspace(0.0, 1.0, 40))  # tie-free
        labels = rng.integers(0, 2, size=40)
        labels[0], labels[1] = 0, 1
        assert roc_auc(scores, labels) + roc_auc(scores, 1 - labels) == pytest.approx(
            1.0, abs=1e-12
        )


class TestEvaluate:
    def test_includes_auc_when_both_classes(self):
        r = evaluate([0.9, 0.1], [1, 0])
        assert r.auc == 1.0

    def test_auc_none_for_single_class(self):
        r = evaluate([0.9, 0.1], [1, 1])
        assert r.auc is None

    def test_table_renders(self):
        text = evaluate([0.9, 0.1], [1, 0]).table()
        assert "accuracy" in text and "auc" in text and "tp=1" in text
