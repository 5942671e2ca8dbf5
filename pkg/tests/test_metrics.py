import numpy as np
import pytest

from src.core.errors import InvalidArgumentError, UndefinedMetricError
from src.evaluation.metrics import auc_macro, balanced_accuracy, c_index, f1_macro


def pairwise_auc(scores, positive):
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def pairwise_c_index(risks, times, events):
    num = den = 0.0
    for i in range(len(risks)):
        for j in range(len(risks)):
            if events[i] and times[i] < times[j]:
                den += 1
                num += 1.0 if risks[i] > risks[j] else 0.5 if risks[i] == risks[j] else 0.0
    return 100.0 * num / den


def test_auc_matches_pairwise_oracle(rng):
    labels = rng.integers(0, 3, size=40)
    probs = rng.dirichlet(np.ones(4), size=40)
    probs[:5, 1] = probs[5:10, 1]  # some ties
    expected = np.mean([pairwise_auc(probs[:, c], labels == c) for c in np.unique(labels)]) * 100
    assert auc_macro(probs, labels) == pytest.approx(expected)


def test_auc_perfect_and_single_class():
    probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3], [0.4, 0.6]])
    assert auc_macro(probs, [0, 1, 0, 1]) == pytest.approx(100.0)
    with pytest.raises(UndefinedMetricError):
        auc_macro(probs, [1, 1, 1, 1])
    with pytest.raises(InvalidArgumentError):
        auc_macro(probs, [0, 1])


def test_f1_macro_over_all_label_classes():
    labels = [0, 1, 0, 1]
    assert f1_macro(labels, labels, num_classes=4) == pytest.approx(50.0)
    assert f1_macro(labels, labels, num_classes=2) == pytest.approx(100.0)


def test_balanced_accuracy():
    assert balanced_accuracy([0, 0, 0, 1], [0, 0, 1, 1]) == pytest.approx(75.0)
    with pytest.raises(InvalidArgumentError):
        balanced_accuracy([], [])


def test_c_index_matches_pairwise_oracle(rng):
    risks = np.round(rng.normal(size=30), 1)  # rounding creates risk ties
    times = rng.exponential(100, size=30)
    events = rng.random(30) < 0.7
    assert c_index(risks, times, events) == pytest.approx(pairwise_c_index(risks, times, events))


def test_c_index_edges():
    assert c_index([3.0, 2.0, 1.0], [1.0, 2.0, 3.0], [True, True, True]) == pytest.approx(100.0)
    assert c_index([1.0, 1.0], [1.0, 2.0], [True, False]) == pytest.approx(50.0)
    with pytest.raises(UndefinedMetricError):
        c_index([1.0, 2.0], [1.0, 2.0], [False, False])
    with pytest.raises(InvalidArgumentError):
        c_index([1.0], [1.0], [True])
