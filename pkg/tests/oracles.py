"""Independent reference implementations used by the tests.

These are deliberately naive (explicit loops, full sorts, pair counting)
and share no code with the package.
"""

from __future__ import annotations

import math

import numpy as np


def naive_linear(x, w, b):
    """y_j = sum_i x_i * w[i, j] + b_j with Python loops."""
    n_in, n_out = w.shape
    out = []
    for j in range(n_out):
        s = 0.0
        for i in range(n_in):
            s += x[i] * w[i, j]
        out.append(s + b[j])
    return np.array(out)


def central_difference(f, params, h=1e-5):
    """Central finite-difference gradient of scalar f(params) for each array in params."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def gradients_agree(analytic, numeric, rel=1e-4, abs_small=1e-6, small=1e-2):
    """Per-entry check: relative error <= rel, or absolute <= abs_small for tiny gradients."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    err = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    ok = (err <= rel * scale) | ((scale < small) & (err <= abs_small))
    return bool(ok.all()), float(np.max(err / np.maximum(scale, 1e-300)))


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov distance from sorted samples."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    points = np.concatenate([a, b])
    fa = np.searchsorted(a, points, side="right") / len(a)
    fb = np.searchsorted(b, points, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def pair_count_auc(scores, labels):
    """P(anomaly > normal) + 0.5 P(tie) by explicit double loop."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def sweep_best_threshold(scores, labels):
    """Youden-optimal threshold by trying every candidate; ties go to the higher threshold."""
    scores = list(map(float, scores))
    candidates = sorted(set(scores) | {math.nextafter(max(scores), math.inf)}, reverse=True)
    n_pos = sum(1 for l in labels if l)
    n_neg = len(labels) - n_pos
    best_t, best_j = None, -math.inf
    for t in candidates:
        tp = sum(1 for s, l in zip(scores, labels) if l and s >= t)
        fp = sum(1 for s, l in zip(scores, labels) if not l and s >= t)
        j = tp / n_pos - fp / n_neg
        if j > best_j:
            best_t, best_j = t, j
    return best_t, best_j


def knn_full_sort(train, test, k):
    """Distance to the k-th nearest training row: every distance, fully sorted."""
    out = []
    for x in test:
        dists = []
        for y in train:
            s = 0.0
            for a, b in zip(x, y):
                s += (a - b) * (a - b)
            dists.append(math.sqrt(s))
        dists.sort()
        out.append(dists[k - 1])
    return np.array(out)


def two_cluster_moments(x):
    """Means and proportions of the negative and positive parts of x."""
    x = np.asarray(x, dtype=float)
    neg, pos = x[x < 0], x[x >= 0]
    return (neg.mean(), pos.mean()), (len(neg) / len(x), len(pos) / len(x))
