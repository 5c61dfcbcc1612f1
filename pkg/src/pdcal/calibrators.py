"""Monotone recalibration maps: identity, sigmoid (Platt) scaling, isotonic regression.

A calibrator is fitted on held-out (score, outcome) pairs and then applied to
raw classifier scores to produce corrected probabilities.  The sigmoid map is

    p(f) = 1 / (1 + exp(a * f + b))

with (a, b) fitted by maximum likelihood against smoothed targets
t+ = (N+ + 1)/(N+ + 2) and t- = 1/(N- + 2), which keep the likelihood bounded
on separable fitting sets.  The isotonic map is the least-squares
non-decreasing step function, solved by pool-adjacent-violators; between-knot
inputs interpolate linearly and out-of-range inputs clamp to the boundary
values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .metrics import LabeledScores


class CalibrationFitError(RuntimeError):
    """Sigmoid fitting failed to reach the gradient-norm tolerance."""


# Observers of every calibrator fit, for protocol audits: each listener is
# called as listener(kind, scores, labels) with copies of the fitting data.
_fit_listeners: list = []


def add_fit_listener(listener: Callable[[str, np.ndarray, np.ndarray], None]) -> None:
    _fit_listeners.append(listener)


def remove_fit_listener(listener) -> None:
    _fit_listeners.remove(listener)


def _notify_fit(kind: str, scores: np.ndarray, labels: np.ndarray) -> None:
    for listener in list(_fit_listeners):
        listener(kind, scores.copy(), labels.copy())


def _fitting_arrays(data) -> tuple:
    """Unpack fitting data as (scores, labels).

    Accepts a LabeledScores, or a plain (scores, labels) pair for raw
    classifier scores that need not lie in [0, 1].
    """
    if isinstance(data, LabeledScores):
        return np.asarray(data.scores, dtype=float), data.labels
    scores, labels = data
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 1 or scores.shape != labels.shape or scores.size < 1:
        raise ValueError("scores and labels must be non-empty 1-D arrays of equal length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    return scores, labels


@dataclass(frozen=True)
class IdentityCalibrator:
    """Control treatment: raw scores pass through, clamped to [0, 1]."""

    def apply(self, scores) -> np.ndarray:
        return np.clip(np.asarray(scores, dtype=float), 0.0, 1.0)


@dataclass(frozen=True)
class SigmoidCalibrator:
    """Fitted two-parameter sigmoid map p(f) = 1 / (1 + exp(a * f + b))."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("sigmoid parameters must be finite")

    def apply(self, scores) -> np.ndarray:
        z = self.a * np.asarray(scores, dtype=float) + self.b
        return _stable_sigmoid(-z)


@dataclass(frozen=True)
class IsotonicCalibrator:
    """Fitted non-decreasing step function, stored as (threshold, value) knots."""

    thresholds: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        thresholds = np.asarray(self.thresholds, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if thresholds.shape != values.shape or thresholds.ndim != 1 or thresholds.size < 1:
            raise ValueError("thresholds/values must be 1-D arrays of equal length >= 1")
        if np.any(np.diff(thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if np.any(np.diff(values) < 0):
            raise ValueError("values must be non-decreasing")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("values must lie in [0, 1]")
        thresholds.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "values", values)

    def apply(self, scores) -> np.ndarray:
        # np.interp interpolates linearly between knots and clamps outside
        return np.interp(np.asarray(scores, dtype=float), self.thresholds, self.values)


Calibrator = Union[IdentityCalibrator, SigmoidCalibrator, IsotonicCalibrator]


def apply(calibrator: Calibrator, scores) -> np.ndarray:
    """Map raw scores through a fitted calibrator."""
    return calibrator.apply(scores)


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid_loss_grad_hess(a: float, b: float, f: np.ndarray, t: np.ndarray):
    """Cross-entropy of the sigmoid map against targets t, with derivatives.

    With z = a*f + b and p = sigmoid(-z): dL/dz = t - p per point, and the
    Hessian in (a, b) is the weighted Gram matrix with weights p*(1-p).
    """
    z = a * f + b
    p = _stable_sigmoid(-z)
    # -[t*log(p) + (1-t)*log(1-p)] written via log1p for stability
    loss = float(np.sum(t * np.logaddexp(0.0, z) + (1.0 - t) * np.logaddexp(0.0, -z)))
    r = t - p
    grad = np.array([np.dot(r, f), r.sum()])
    w = p * (1.0 - p)
    h_aa = np.dot(w, f * f)
    h_ab = np.dot(w, f)
    h_bb = w.sum()
    hess = np.array([[h_aa, h_ab], [h_ab, h_bb]])
    return loss, grad, hess


def fit_sigmoid(ls, tol: float = 1e-8, max_iter: int = 10_000) -> SigmoidCalibrator:
    """Fit Platt's sigmoid map by maximum likelihood.

    Damped Newton iterations on the two-parameter objective, with a
    gradient-descent fallback when the Hessian is degenerate.  Converges when
    the gradient norm drops to `tol`.  Constant scores carry no rank
    information, so `a` is pinned to 0 and only the level is fitted.
    """
    f, labels = _fitting_arrays(ls)
    _notify_fit("sigmoid", f, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("sigmoid calibration needs both classes in the fitting set")
    # smoothed targets in place of the raw 0/1 labels
    t = np.where(labels == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    pin_a = bool(np.all(f == f[0]))
    a = 0.0
    b = float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    loss, grad, hess = _sigmoid_loss_grad_hess(a, b, f, t)
    for _ in range(max_iter):
        if pin_a:
            grad_norm = abs(grad[1])
        else:
            grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= tol:
            return SigmoidCalibrator(a=a, b=b)
        if pin_a:
            step = np.array([0.0, -grad[1] / max(hess[1, 1], 1e-12)])
        else:
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -grad / max(float(np.linalg.norm(grad)), 1.0)
        # Newton direction with step halving; near the optimum the true
        # decrease underflows, so accept any step within float resolution
        scale = 1.0
        for _ in range(60):
            na, nb = a + scale * step[0], b + scale * step[1]
            new_loss, new_grad, new_hess = _sigmoid_loss_grad_hess(na, nb, f, t)
            if new_loss <= loss + 1e-12 * (abs(loss) + 1.0):
                break
            scale *= 0.5
        else:
            gstep = -grad / max(float(np.linalg.norm(grad)), 1.0)
            na, nb = a + 1e-3 * gstep[0], b + 1e-3 * gstep[1]
            new_loss, new_grad, new_hess = _sigmoid_loss_grad_hess(na, nb, f, t)
        a, b, loss, grad, hess = na, nb, new_loss, new_grad, new_hess
    final_norm = abs(grad[1]) if pin_a else float(np.linalg.norm(grad))
    if final_norm <= tol:
        return SigmoidCalibrator(a=a, b=b)
    raise CalibrationFitError(
        f"sigmoid fit did not converge in {max_iter} iterations "
        f"(gradient norm {final_norm:.3e} > {tol:.1e})"
    )


def sigmoid_fit_gradient_norm(calibrator: SigmoidCalibrator, ls) -> float:
    """Gradient norm of the smoothed-target likelihood at the fitted (a, b)."""
    f, labels = _fitting_arrays(ls)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    t = np.where(labels == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    _, grad, _ = _sigmoid_loss_grad_hess(calibrator.a, calibrator.b, f, t)
    if np.all(f == f[0]):
        return abs(float(grad[1]))
    return float(np.linalg.norm(grad))


def _merge_tied_scores(scores: np.ndarray, targets: np.ndarray):
    """Weighted (score, mean target) pairs with exact score ties merged."""
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = targets[order]
    boundary = np.r_[True, s[1:] != s[:-1]]
    group = np.cumsum(boundary) - 1
    n_groups = group[-1] + 1
    weights = np.bincount(group, minlength=n_groups).astype(float)
    means = np.bincount(group, weights=y, minlength=n_groups) / weights
    return s[boundary], means, weights


def _pool_adjacent_violators(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted least-squares non-decreasing fit by block merging."""
    n = values.size
    block_value = np.empty(n)
    block_weight = np.empty(n)
    block_len = np.empty(n, dtype=np.int64)
    top = -1
    for i in range(n):
        top += 1
        block_value[top] = values[i]
        block_weight[top] = weights[i]
        block_len[top] = 1
        while top > 0 and block_value[top - 1] > block_value[top]:
            w = block_weight[top - 1] + block_weight[top]
            block_value[top - 1] = (
                block_weight[top - 1] * block_value[top - 1]
                + block_weight[top] * block_value[top]
            ) / w
            block_weight[top - 1] = w
            block_len[top - 1] += block_len[top]
            top -= 1
    return np.repeat(block_value[: top + 1], block_len[: top + 1])


def fit_isotonic(ls) -> IsotonicCalibrator:
    """Least-squares non-decreasing fit of outcomes against scores (PAVA).

    Tied scores are pre-merged into one weighted knot so the result is a
    well-defined function of the score.
    """
    scores, labels = _fitting_arrays(ls)
    _notify_fit("isotonic", scores, labels)
    if scores.size < 2:
        raise ValueError("isotonic calibration needs at least 2 points")
    thresholds, means, weights = _merge_tied_scores(scores, labels.astype(float))
    fitted = _pool_adjacent_violators(means, weights)
    # outcome averages land in [0, 1] up to roundoff
    fitted = np.clip(fitted, 0.0, 1.0)
    return IsotonicCalibrator(thresholds=thresholds, values=fitted)


def fit_calibrator(kind: str, ls: LabeledScores) -> Calibrator:
    """Fit by treatment name: 'none' (identity), 'sigmoid', or 'isotonic'."""
    if kind == "none":
        return IdentityCalibrator()
    if kind == "sigmoid":
        return fit_sigmoid(ls)
    if kind == "isotonic":
        return fit_isotonic(ls)
    raise ValueError(f"unknown calibrator kind: {kind!r}")


def calibrator_to_dict(calibrator: Calibrator) -> dict:
    if isinstance(calibrator, IdentityCalibrator):
        return {"type": "identity"}
    if isinstance(calibrator, SigmoidCalibrator):
        return {"type": "sigmoid", "a": calibrator.a, "b": calibrator.b}
    if isinstance(calibrator, IsotonicCalibrator):
        return {
            "type": "isotonic",
            "thresholds": calibrator.thresholds.tolist(),
            "values": calibrator.values.tolist(),
        }
    raise TypeError(f"not a calibrator: {calibrator!r}")


def calibrator_from_dict(payload: dict) -> Calibrator:
    kind = payload.get("type")
    if kind == "identity":
        return IdentityCalibrator()
    if kind == "sigmoid":
        return SigmoidCalibrator(a=float(payload["a"]), b=float(payload["b"]))
    if kind == "isotonic":
        return IsotonicCalibrator(
            thresholds=np.asarray(payload["thresholds"], dtype=float),
            values=np.asarray(payload["values"], dtype=float),
        )
    raise ValueError(f"unknown calibrator type: {kind!r}")
