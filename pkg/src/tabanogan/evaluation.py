"""ROC analysis, threshold selection and the kNN distance baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RocCurve:
    """ROC points ordered by decreasing threshold (so FPR/TPR increase).

    A row is predicted anomalous when ``score >= threshold``.  The first
    point uses a threshold just above the largest score and sits at (0, 0).
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float
    optimal_threshold: float = float("nan")

    def __len__(self) -> int:
        return len(self.thresholds)


def _check_labeled(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores but {len(labels)} labels")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if labels.all() or not labels.any():
        raise ValueError("ROC analysis needs both anomalous and normal rows")
    return scores, labels


def roc_curve(scores, labels) -> RocCurve:
    """ROC curve with a threshold at every distinct score; labels are 1 = anomaly."""
    scores, labels = _check_labeled(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    n_pos, n_neg = tp[-1], fp[-1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thresholds = np.r_[np.nextafter(s[0], np.inf), s[last]]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    curve = RocCurve(thresholds, tpr, fpr, auc)
    curve.optimal_threshold = optimal_threshold(curve)
    return curve


def optimal_threshold(curve: RocCurve) -> float:
    """Threshold maximizing Youden's J = TPR - FPR; ties go to the higher threshold."""
    j = curve.tpr - curve.fpr
    # thresholds are decreasing, so the first maximum is the highest threshold
    return float(curve.thresholds[int(np.argmax(j))])


def youden_j(curve: RocCurve, threshold: float) -> float:
    i = int(np.flatnonzero(curve.thresholds == threshold)[0])
    return float(curve.tpr[i] - curve.fpr[i])


def auc_pairwise(scores, labels) -> float:
    """P(anomaly score > normal score) + 0.5 * P(tie), by counting pairs."""
    scores, labels = _check_labeled(scores, labels)
    pos = scores[labels]
    neg = scores[~labels]
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return float((greater + 0.5 * ties) / (len(pos) * len(neg)))


@dataclass
class Metrics:
    threshold: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int


def classification_metrics(scores, labels, threshold: float) -> Metrics:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pred = scores >= threshold
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    tn = int(np.sum(~pred & ~labels))
    fn = int(np.sum(~pred & labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(threshold, (tp + tn) / len(scores), precision, recall, f1, tp, fp, tn, fn)


def knn_anomaly_scores(train, test, k: int = 5, chunk_size: int = 256) -> np.ndarray:
    """Euclidean distance from each test row to its k-th nearest training row.

    Exact brute force.  Squared differences are accumulated feature by
    feature in column order so the result does not depend on chunking.
    """
    train = np.atleast_2d(np.asarray(train, dtype=np.float64))
    test = np.atleast_2d(np.asarray(test, dtype=np.float64))
    if train.shape[1] != test.shape[1]:
        raise ValueError(f"train width {train.shape[1]} != test width {test.shape[1]}")
    if not 1 <= k <= len(train):
        raise ValueError(f"k must be between 1 and {len(train)}, got {k}")
    out = np.empty(len(test))
    for s in range(0, len(test), chunk_size):
        block = test[s:s + chunk_size]
        d2 = np.zeros((len(block), len(train)))
        for j in range(train.shape[1]):
            diff = block[:, j:j + 1] - train[None, :, j]
            d2 += diff * diff
        out[s:s + chunk_size] = np.sqrt(np.partition(d2, k - 1, axis=1)[:, k - 1])
    return out
