"""Calibration and discrimination metrics for binary probability-of-default models.

Calibration is measured with the Brier score loss,

    B = (1/N) * sum_i (p_hat_i - y_i)^2

and its pooled variant over rating grades,

    B = (1/N) * sum_k N_k * [p_k * (1 - PD_k)^2 + (1 - p_k) * PD_k^2]

where PD_k is the probability of default assigned to grade k and p_k the
observed default rate within the grade.  Discrimination (rank ability) is
measured with the ROC curve, trapezoidal AUROC, and Gini = 2 * AUROC - 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateLabelsError(ValueError):
    """Raised when a rank metric is requested for single-class labels."""


def _as_probability_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def _as_label_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError("labels must be a non-empty 1-D array")
    as_int = arr.astype(np.int64, copy=True)
    if not np.array_equal(arr, as_int) or np.any((as_int != 0) & (as_int != 1)):
        raise ValueError("labels must be 0 or 1")
    return as_int


@dataclass(frozen=True)
class LabeledScores:
    """Parallel arrays of predicted probabilities and binary outcomes.

    The universal currency between models, calibrators, and metrics: scores
    are probabilities in [0, 1], labels are {0, 1} with 1 meaning default.
    """

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = _as_probability_array(self.scores, "scores")
        labels = _as_label_array(self.labels)
        if scores.shape != labels.shape:
            raise ValueError("scores and labels must have equal length")
        scores.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.scores.size

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    def with_scores(self, scores) -> "LabeledScores":
        """Same outcomes, different predictions (e.g. after recalibration)."""
        return LabeledScores(scores=np.asarray(scores, dtype=float), labels=self.labels)


@dataclass(frozen=True)
class Grade:
    """One rating grade: assigned PD, observed default rate, obligor count."""

    pd_assigned: float
    observed_rate: float
    count: int

    def __post_init__(self):
        if not 0.0 <= self.pd_assigned <= 1.0:
            raise ValueError("pd_assigned must lie in [0, 1]")
        if not 0.0 <= self.observed_rate <= 1.0:
            raise ValueError("observed_rate must lie in [0, 1]")
        if self.count < 1:
            raise ValueError("grade count must be >= 1")


@dataclass(frozen=True)
class GradePool:
    """Loans pooled into rating grades that share an assigned PD."""

    grades: tuple

    def __init__(self, grades):
        grades = tuple(grades)
        if not grades:
            raise ValueError("a grade pool needs at least one grade")
        object.__setattr__(self, "grades", grades)

    @property
    def total_count(self) -> int:
        return sum(g.count for g in self.grades)

    @classmethod
    def singleton_grades(cls, ls: LabeledScores) -> "GradePool":
        """One obligor per grade; observed rate is the obligor's own outcome."""
        return cls(
            Grade(pd_assigned=float(p), observed_rate=float(y), count=1)
            for p, y in zip(ls.scores, ls.labels)
        )


@dataclass(frozen=True)
class RocCurve:
    """ROC curve points: false positive rate (x) vs true positive rate (y).

    One point per distinct decision threshold, swept from above the maximum
    score down to the minimum; starts at (0, 0) and ends at (1, 1).
    """

    fpr: np.ndarray
    tpr: np.ndarray

    def __post_init__(self):
        fpr = np.asarray(self.fpr, dtype=float)
        tpr = np.asarray(self.tpr, dtype=float)
        if fpr.shape != tpr.shape or fpr.ndim != 1 or fpr.size < 2:
            raise ValueError("fpr/tpr must be 1-D arrays of equal length >= 2")
        if fpr[0] != 0.0 or tpr[0] != 0.0 or fpr[-1] != 1.0 or tpr[-1] != 1.0:
            raise ValueError("curve must start at (0,0) and end at (1,1)")
        if np.any(np.diff(fpr) < 0) or np.any(np.diff(tpr) < 0):
            raise ValueError("curve coordinates must be non-decreasing")
        fpr.setflags(write=False)
        tpr.setflags(write=False)
        object.__setattr__(self, "fpr", fpr)
        object.__setattr__(self, "tpr", tpr)

    @property
    def points(self) -> list:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass(frozen=True)
class ReliabilityBins:
    """Equal-width reliability-diagram bins over [0, 1].

    Empty bins carry count 0 and NaN statistics; `occupied` flags the rest.
    """

    mean_predicted: np.ndarray
    observed_rate: np.ndarray
    count: np.ndarray
    n_bins: int
    edges: np.ndarray = field(repr=False, default=None)

    @property
    def occupied(self) -> np.ndarray:
        return self.count > 0

    @property
    def bins(self) -> list:
        return list(
            zip(self.mean_predicted.tolist(), self.observed_rate.tolist(), self.count.tolist())
        )


def brier_score(ls: LabeledScores) -> float:
    """Mean squared difference between predicted probabilities and outcomes."""
    diff = ls.scores - ls.labels
    return float(np.dot(diff, diff) / len(ls))


def brier_score_pooled(pool: GradePool) -> float:
    """Brier score over rating grades.

    With one obligor per grade and the observed rate equal to the obligor's
    outcome this reduces exactly to the unpooled `brier_score`.
    """
    total = 0.0
    for g in pool.grades:
        total += g.count * (
            g.observed_rate * (1.0 - g.pd_assigned) ** 2
            + (1.0 - g.observed_rate) * g.pd_assigned**2
        )
    return float(total / pool.total_count)


def _threshold_counts(ls: LabeledScores):
    """Cumulative true/false positive counts per distinct threshold, descending."""
    order = np.argsort(-ls.scores, kind="stable")
    sorted_scores = ls.scores[order]
    sorted_labels = ls.labels[order]
    # last index of each run of tied scores
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    last_of_run = np.r_[distinct, sorted_labels.size - 1]
    tp = np.cumsum(sorted_labels)[last_of_run]
    fp = (last_of_run + 1) - tp
    return tp, fp


def _require_both_classes(ls: LabeledScores) -> tuple:
    n_pos = ls.n_positive
    n_neg = ls.n_negative
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            "degenerate labels: need at least one positive and one negative"
        )
    return n_pos, n_neg


def roc_curve(ls: LabeledScores) -> RocCurve:
    """ROC curve with tied scores merged into a single threshold."""
    n_pos, n_neg = _require_both_classes(ls)
    tp, fp = _threshold_counts(ls)
    fpr = np.r_[0.0, fp / n_neg]
    tpr = np.r_[0.0, tp / n_pos]
    return RocCurve(fpr=fpr, tpr=tpr)


def auroc(ls: LabeledScores) -> float:
    """Area under the ROC curve by trapezoidal integration.

    Equals the pair statistic (concordant + 0.5 * tied) / (n_pos * n_neg);
    0.5 means no better than random ranking.
    """
    curve = roc_curve(ls)
    dx = np.diff(curve.fpr)
    mid_y = curve.tpr[:-1] + curve.tpr[1:]
    return float(0.5 * np.dot(dx, mid_y))


def gini(ls: LabeledScores) -> float:
    """Gini coefficient, the rescaling 2 * AUROC - 1 of the AUROC.

    Random ranking scores 0; negative values mean the ranking has predictive
    power with the decisions reversed.
    """
    return 2.0 * auroc(ls) - 1.0


def reliability_bins(ls: LabeledScores, n_bins: int = 10) -> ReliabilityBins:
    """Mean predicted probability vs observed default rate per equal-width bin."""
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    # scores of exactly 1.0 belong to the last bin
    idx = np.minimum((ls.scores * n_bins).astype(np.int64), n_bins - 1)
    count = np.bincount(idx, minlength=n_bins)
    score_sum = np.bincount(idx, weights=ls.scores, minlength=n_bins)
    label_sum = np.bincount(idx, weights=ls.labels.astype(float), minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_predicted = np.where(count > 0, score_sum / count, np.nan)
        observed_rate = np.where(count > 0, label_sum / count, np.nan)
    return ReliabilityBins(
        mean_predicted=mean_predicted,
        observed_rate=observed_rate,
        count=count,
        n_bins=n_bins,
        edges=edges,
    )
