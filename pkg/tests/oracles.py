"""Independent oracles used by the test suite.

Each oracle deliberately takes a different algorithmic route than the library
code it checks: AUROC by exhaustive pair counting instead of trapezoids,
isotonic regression by exhaustive enumeration of contiguous-block partitions
instead of PAVA, and sigmoid-map fitting by grid refinement instead of Newton.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def pair_counting_auroc(scores, labels) -> float:
    """(concordant + 0.5 * tied) / (n_pos * n_neg) over every (pos, neg) pair."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need both classes")
    diff = pos[:, None] - neg[None, :]
    concordant = np.count_nonzero(diff > 0)
    tied = np.count_nonzero(diff == 0)
    return (concordant + 0.5 * tied) / (pos.size * neg.size)


def brute_force_isotonic_sse(scores, labels) -> float:
    """Minimal SSE over all non-decreasing FUNCTIONS of the score.

    Equal scores must share one fitted value, so exact ties are grouped
    first.  Any optimal monotone fit is then constant on contiguous runs of
    the distinct sorted scores, each run at its weighted mean; enumerating
    all 2^(g-1) contiguous partitions of the g groups and keeping those with
    non-decreasing block means covers the optimum exactly.  The returned SSE
    is taken over the original points.
    """
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = y[order]
    boundary = np.r_[True, s[1:] != s[:-1]]
    group = np.cumsum(boundary) - 1
    g = group[-1] + 1
    w = np.bincount(group, minlength=g).astype(float)
    group_sum = np.bincount(group, weights=y, minlength=g)
    best = math.inf
    for cuts in itertools.product([False, True], repeat=g - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [g]
        means = []
        sse = 0.0
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            mean = float(group_sum[lo:hi].sum() / w[lo:hi].sum())
            means.append(mean)
            members = (group >= lo) & (group < hi)
            sse += float(np.sum((y[members] - mean) ** 2))
        if all(a <= b + 1e-12 for a, b in zip(means[:-1], means[1:])):
            best = min(best, sse)
    return best


def sigmoid_map_loss(a: float, b: float, scores, targets) -> float:
    """Cross-entropy of p = 1 / (1 + exp(a * f + b)) against fractional targets."""
    f = np.asarray(scores, dtype=float)
    t = np.asarray(targets, dtype=float)
    z = a * f + b
    # -[t*log(p) + (1-t)*log(1-p)] with p = sigmoid(-z), in a stable form
    loss = np.where(z >= 0, z + np.log1p(np.exp(-z)), np.log1p(np.exp(z))) * t
    loss += np.where(z >= 0, np.log1p(np.exp(-z)), -z + np.log1p(np.exp(z))) * (1.0 - t)
    return float(loss.sum())


def grid_refine_sigmoid_fit(scores, targets, center=(0.0, 0.0), half_width=10.0):
    """Best (a, b) for `sigmoid_map_loss` by iterated grid refinement."""
    a0, b0 = center
    best = (math.inf, a0, b0)
    for _ in range(30):
        a_grid = np.linspace(a0 - half_width, a0 + half_width, 21)
        b_grid = np.linspace(b0 - half_width, b0 + half_width, 21)
        for a in a_grid:
            for b in b_grid:
                loss = sigmoid_map_loss(a, b, scores, targets)
                if loss < best[0]:
                    best = (loss, a, b)
        _, a0, b0 = best
        half_width *= 0.4
    return best[1], best[2], best[0]


def quadratic_logloss_gradient(weights, intercept, X, y, l2_lambda) -> np.ndarray:
    """Gradient of sum log-loss + (l2/2)*||w||^2 at (weights, intercept)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    z = X @ weights + intercept
    p = 1.0 / (1.0 + np.exp(-z))
    grad_w = X.T @ (p - y) + l2_lambda * np.asarray(weights, dtype=float)
    grad_b = np.sum(p - y)
    return np.r_[grad_w, grad_b]
