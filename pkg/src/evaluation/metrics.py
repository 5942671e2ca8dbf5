"""
Metrics: slide-level classification and survival scores, as percentages

- auc_macro: one-vs-rest ROC AUC averaged over the classes present
- f1_macro: per-class F1 averaged over all label classes
- balanced_accuracy: mean recall over the classes present
- c_index: concordance of risk scores with observed survival
"""

from typing import Sequence
import logging

import numpy as np
from sklearn.metrics import balanced_accuracy_score, f1_score, roc_auc_score

from src.core.errors import InvalidArgumentError, UndefinedMetricError

logger = logging.getLogger(__name__)


def auc_macro(probabilities: np.ndarray, labels: Sequence[int]) -> float:
    """
    Macro one-vs-rest ROC AUC.

    Args:
        probabilities: (n, classes) scores
        labels: True class per row

    Returns:
        Percentage in [0, 100]; classes without both positives and
        negatives are excluded with a warning
    """
    scores = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != y.shape[0]:
        raise InvalidArgumentError(f"Probabilities {scores.shape} do not match {y.shape[0]} labels")
    if y.shape[0] < 2:
        raise InvalidArgumentError("AUC needs at least 2 samples")

    per_class = []
    for c in np.unique(y):
        positive = y == c
        if positive.all():
            logger.warning(f"Class {c} has no negatives; excluded from macro AUC")
            continue
        per_class.append(roc_auc_score(positive.astype(int), scores[:, c]))
    if not per_class:
        raise UndefinedMetricError("No class has both positives and negatives")
    return float(np.mean(per_class) * 100.0)


def f1_macro(predictions: Sequence[int], labels: Sequence[int], num_classes: int = 4) -> float:
    """Macro F1 over classes 0..num_classes-1, a class with no support or predictions scores 0"""
    return float(
        f1_score(labels, predictions, labels=list(range(num_classes)), average="macro", zero_division=0) * 100.0
    )


def balanced_accuracy(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Mean per-class recall over the classes present in labels"""
    if len(labels) == 0:
        raise InvalidArgumentError("Balanced accuracy needs at least one sample")
    return float(balanced_accuracy_score(labels, predictions) * 100.0)


def c_index(risks: Sequence[float], times: Sequence[float], events: Sequence[bool]) -> float:
    """
    Concordance index.

    A pair (i, j) is comparable when time_i < time_j and subject i had an
    event; it is concordant when risk_i > risk_j, ties in risk count 0.5.

    Returns:
        Percentage in [0, 100]
    """
    risk = np.asarray(risks, dtype=np.float64)
    time = np.asarray(times, dtype=np.float64)
    event = np.asarray(events, dtype=bool)
    if not risk.shape == time.shape == event.shape:
        raise InvalidArgumentError("risks, times and events must have equal length")
    if risk.shape[0] < 2:
        raise InvalidArgumentError("c-index needs at least 2 subjects")

    comparable = (time[:, None] < time[None, :]) & event[:, None]
    concordant = (risk[:, None] > risk[None, :]) + 0.5 * (risk[:, None] == risk[None, :])
    pairs = comparable.sum()
    if pairs == 0:
        raise UndefinedMetricError("No comparable pairs for the c-index")
    return float((comparable * concordant).sum() / pairs * 100.0)
