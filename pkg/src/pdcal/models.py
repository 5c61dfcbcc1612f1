"""Reference classifiers: logistic regression, random forest, gradient boosting.

All three expose fit and predict-probability over a plain feature matrix.
Trees split on midpoints between sorted distinct feature values, minimizing
the within-child sum of squared deviations of the target (for 0/1 labels this
ranks splits identically to Gini impurity); ties are broken toward the lowest
feature index, then the lowest threshold.  Random-forest probabilities are
hard-vote fractions: each tree votes for its most probable class and the
forest reports the fraction of positive votes.  Gradient boosting fits each
stage's regression tree to the negative gradient of the log loss (the
residual y - p) and sets leaf values with a single Newton step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

_SCHEMA_VERSION = 1
# numerical guard for Newton leaf steps when every row is saturated
_MIN_HESSIAN = 1e-12
_MAX_LEAF_STEP = 100.0


class ModelFitError(RuntimeError):
    """Optimizer failed to reach its gradient tolerance."""


def _validate_training_inputs(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D feature matrix with at least 2 rows")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must match the feature-matrix row count")
    y = y.astype(np.int64)
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    if y.min() == y.max():
        raise ValueError("training data contains a single class")
    return X, y


def _validate_predict_inputs(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(
            f"feature-count mismatch: model expects {n_features} features, "
            f"got matrix of shape {X.shape}"
        )
    return X


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[neg])
    out[neg] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# decision trees


class DecisionTree:
    """Binary regression/classification tree stored as parallel node arrays.

    Node 0 is the root; `feature[i] < 0` marks a leaf whose payload is
    `value[i]` (the positive-class fraction for classification trees, the
    Newton leaf step for boosting stages).  Rows with value <= threshold go
    left.
    """

    __slots__ = ("feature", "threshold", "left", "right", "value", "max_depth")

    def __init__(self, feature, threshold, left, right, value, max_depth: int):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.value = np.asarray(value, dtype=float)
        self.max_depth = max_depth

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def predict_values(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int32)
        row = np.arange(n)
        for _ in range(self.max_depth + 1):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            col = X[row, np.where(internal, f, 0)]
            go_left = internal & (col <= self.threshold[node])
            node = np.where(go_left, self.left[node], np.where(internal, self.right[node], node))
        return self.value[node]

    def leaf_fractions(self, X: np.ndarray) -> np.ndarray:
        return self.predict_values(X)

    def to_dict(self) -> dict:
        def walk(i: int):
            if self.feature[i] < 0:
                return {"leaf": float(self.value[i])}
            return {
                "feature": int(self.feature[i]),
                "threshold": float(self.threshold[i]),
                "left": walk(int(self.left[i])),
                "right": walk(int(self.right[i])),
            }

        return walk(0)

    @classmethod
    def from_dict(cls, payload: dict, max_depth: int) -> "DecisionTree":
        feature, threshold, left, right, value = [], [], [], [], []

        def walk(node: dict) -> int:
            i = len(feature)
            if "leaf" in node:
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(float(node["leaf"]))
                return i
            feature.append(int(node["feature"]))
            threshold.append(float(node["threshold"]))
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            left[i] = walk(node["left"])
            right[i] = walk(node["right"])
            return i

        walk(payload)
        return cls(feature, threshold, left, right, value, max_depth)


class _TreeBuilder:
    """Grows one tree; split search is vectorized per (node, feature)."""

    def __init__(self, X, targets, max_depth, n_candidate_features, rng, leaf_value):
        self.X = X
        self.targets = targets
        self.max_depth = max_depth
        self.k = n_candidate_features
        self.d = X.shape[1]
        self.rng = rng
        self.leaf_value = leaf_value
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def build(self, rows: np.ndarray) -> DecisionTree:
        self._grow(rows, depth=0)
        return DecisionTree(
            self.feature, self.threshold, self.left, self.right, self.value, self.max_depth
        )

    def _emit_leaf(self, rows) -> int:
        i = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(self.leaf_value(rows))
        return i

    def _candidate_features(self) -> np.ndarray:
        if self.k >= self.d:
            return np.arange(self.d)
        return np.sort(self.rng.permutation(self.d)[: self.k])

    def _grow(self, rows: np.ndarray, depth: int) -> int:
        t = self.targets[rows]
        if depth >= self.max_depth or rows.size < 2 or t.min() == t.max():
            return self._emit_leaf(rows)

        best_sse = math.inf
        best_feature = -1
        best_threshold = 0.0
        n = rows.size
        k_arr = np.arange(1, n)
        for f in self._candidate_features():
            v = self.X[rows, f]
            order = np.argsort(v, kind="stable")
            vs = v[order]
            if vs[0] == vs[-1]:
                continue
            ts = t[order]
            cum = np.cumsum(ts)
            cumsq = np.cumsum(ts * ts)
            total, total_sq = cum[-1], cumsq[-1]
            left_sum, left_sq = cum[:-1], cumsq[:-1]
            sse = (left_sq - left_sum**2 / k_arr) + (
                total_sq - left_sq - (total - left_sum) ** 2 / (n - k_arr)
            )
            sse[vs[1:] == vs[:-1]] = math.inf
            j = int(np.argmin(sse))  # first minimum -> lowest threshold
            if sse[j] < best_sse:
                best_sse = sse[j]
                best_feature = int(f)
                best_threshold = 0.5 * (vs[j] + vs[j + 1])

        if best_feature < 0:
            return self._emit_leaf(rows)
        go_left = self.X[rows, best_feature] <= best_threshold
        if not go_left.any() or go_left.all():
            # midpoint rounded onto a boundary value; nothing to split
            return self._emit_leaf(rows)

        i = len(self.feature)
        self.feature.append(best_feature)
        self.threshold.append(best_threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.left[i] = self._grow(rows[go_left], depth + 1)
        self.right[i] = self._grow(rows[~go_left], depth + 1)
        return i


def fit_decision_tree(X, y, max_depth: int = 12) -> DecisionTree:
    """Single classification tree; leaves hold positive-class fractions."""
    X, y = _validate_training_inputs(X, y)
    targets = y.astype(float)
    builder = _TreeBuilder(
        X,
        targets,
        max_depth,
        n_candidate_features=X.shape[1],
        rng=None,
        leaf_value=lambda rows: float(targets[rows].mean()),
    )
    return builder.build(np.arange(X.shape[0]))


# ---------------------------------------------------------------------------
# logistic regression


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    l2_lambda: float

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or not np.all(np.isfinite(weights)) or not np.isfinite(self.intercept):
            raise ValueError("logistic parameters must be finite")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def predict_proba(self, X) -> np.ndarray:
        X = _validate_predict_inputs(X, self.weights.size)
        return _sigmoid(X @ self.weights + self.intercept)


def _logistic_objective(beta, X1, y, l2_lambda):
    z = X1 @ beta
    loss = float(np.sum(np.logaddexp(0.0, z)) - np.dot(y, z))
    loss += 0.5 * l2_lambda * float(np.dot(beta[:-1], beta[:-1]))
    p = _sigmoid(z)
    grad = X1.T @ (p - y)
    grad[:-1] += l2_lambda * beta[:-1]
    return loss, grad, p


def fit_logistic(
    X,
    y,
    l2_lambda: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> LogisticModel:
    """L2-regularized logistic regression by damped Newton.

    Minimizes the summed log loss plus (l2/2)*||w||^2 with an unpenalized
    intercept, down to gradient norm `tol`.
    """
    X, y = _validate_training_inputs(X, y)
    if l2_lambda < 0:
        raise ValueError("l2_lambda must be non-negative")
    yf = y.astype(float)
    n, d = X.shape
    X1 = np.hstack([X, np.ones((n, 1))])
    beta = np.zeros(d + 1)
    rate = yf.mean()
    beta[-1] = math.log(rate / (1.0 - rate))
    loss, grad, p = _logistic_objective(beta, X1, yf, l2_lambda)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol:
            return LogisticModel(weights=beta[:-1], intercept=float(beta[-1]), l2_lambda=l2_lambda)
        w = p * (1.0 - p)
        hess = (X1 * w[:, None]).T @ X1
        hess[np.arange(d), np.arange(d)] += l2_lambda
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        scale = 1.0
        for _ in range(60):
            candidate = beta + scale * step
            new_loss, new_grad, new_p = _logistic_objective(candidate, X1, yf, l2_lambda)
            if new_loss <= loss + 1e-12 * (abs(loss) + 1.0):
                break
            scale *= 0.5
        beta, loss, grad, p = candidate, new_loss, new_grad, new_p
    final = float(np.linalg.norm(grad))
    if final <= tol:
        return LogisticModel(weights=beta[:-1], intercept=float(beta[-1]), l2_lambda=l2_lambda)
    raise ModelFitError(
        f"logistic fit did not converge in {max_iter} iterations "
        f"(gradient norm {final:.3e} > {tol:.1e})"
    )


# ---------------------------------------------------------------------------
# random forest


@dataclass(frozen=True)
class RandomForestModel:
    trees: tuple
    n_features: int
    n_trees: int
    max_depth: int
    max_features_fraction: float
    seed: int
    bootstrap: bool = True
    leaf_averaging: bool = False

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_rf(self, X)


def _features_per_split(fraction: Optional[float], d: int) -> tuple:
    if fraction is None:
        fraction = math.sqrt(d) / d
    if not 0.0 < fraction <= 1.0:
        raise ValueError("max_features_fraction must lie in (0, 1]")
    return fraction, max(1, min(d, int(fraction * d + 0.5)))


def fit_random_forest(
    X,
    y,
    n_trees: int = 200,
    max_depth: int = 12,
    max_features_fraction: Optional[float] = None,
    seed: int = 0,
    bootstrap: bool = True,
    leaf_averaging: bool = False,
) -> RandomForestModel:
    """Bootstrap ensemble of classification trees with per-split feature subsampling.

    `max_features_fraction=None` uses the sqrt(d)/d heuristic.  Deterministic
    for a given seed.
    """
    X, y = _validate_training_inputs(X, y)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n, d = X.shape
    fraction, k = _features_per_split(max_features_fraction, d)
    targets = y.astype(float)
    trees = []
    for seq in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(seq)
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        builder = _TreeBuilder(
            X,
            targets,
            max_depth,
            n_candidate_features=k,
            rng=rng,
            leaf_value=lambda r: float(targets[r].mean()),
        )
        trees.append(builder.build(rows))
    return RandomForestModel(
        trees=tuple(trees),
        n_features=d,
        n_trees=n_trees,
        max_depth=max_depth,
        max_features_fraction=fraction,
        seed=seed,
        bootstrap=bootstrap,
        leaf_averaging=leaf_averaging,
    )


def predict_proba_rf(model: RandomForestModel, X) -> np.ndarray:
    """Fraction of trees voting for the default class.

    Each tree votes for its most probable class; a reached-leaf fraction of
    exactly 0.5 counts as a positive vote.  With `leaf_averaging` the forest
    instead averages the raw leaf fractions.
    """
    X = _validate_predict_inputs(X, model.n_features)
    acc = np.zeros(X.shape[0])
    for tree in model.trees:
        fractions = tree.leaf_fractions(X)
        if model.leaf_averaging:
            acc += fractions
        else:
            acc += fractions >= 0.5
    return acc / model.n_trees


# ---------------------------------------------------------------------------
# gradient boosting


@dataclass(frozen=True)
class GradientBoostingModel:
    initial_log_odds: float
    stages: tuple
    n_features: int
    n_stages: int
    learning_rate: float
    max_depth: int
    train_loss_trace: Optional[tuple] = field(default=None, compare=False)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_gbc(self, X)


def _mean_log_loss(yf: np.ndarray, F: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, F) - yf * F))


def fit_gbc(
    X,
    y,
    n_stages: int = 200,
    learning_rate: float = 0.1,
    max_depth: int = 3,
) -> GradientBoostingModel:
    """Gradient boosting on the log loss.

    Starts from the base-rate log-odds; each stage fits a regression tree to
    the residual y - sigmoid(F) and sets each leaf with a single Newton step
    sum(residual) / sum(p * (1 - p)) over its rows.  The fitted model keeps a
    per-stage trace of the training log loss.
    """
    X, y = _validate_training_inputs(X, y)
    if n_stages < 1:
        raise ValueError("n_stages must be >= 1")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    yf = y.astype(float)
    n, d = X.shape
    rate = yf.mean()
    f0 = math.log(rate / (1.0 - rate))
    F = np.full(n, f0)
    trace = [_mean_log_loss(yf, F)]
    all_rows = np.arange(n)
    stages = []
    for _ in range(n_stages):
        p = _sigmoid(F)
        residual = yf - p
        hess_weight = p * (1.0 - p)

        def newton_leaf(rows):
            denom = max(float(hess_weight[rows].sum()), _MIN_HESSIAN)
            step = float(residual[rows].sum()) / denom
            return float(np.clip(step, -_MAX_LEAF_STEP, _MAX_LEAF_STEP))

        builder = _TreeBuilder(
            X,
            residual,
            max_depth,
            n_candidate_features=d,
            rng=None,
            leaf_value=newton_leaf,
        )
        tree = builder.build(all_rows)
        stages.append(tree)
        F = F + learning_rate * tree.predict_values(X)
        trace.append(_mean_log_loss(yf, F))
    return GradientBoostingModel(
        initial_log_odds=f0,
        stages=tuple(stages),
        n_features=d,
        n_stages=n_stages,
        learning_rate=learning_rate,
        max_depth=max_depth,
        train_loss_trace=tuple(trace),
    )


def predict_proba_gbc(model: GradientBoostingModel, X) -> np.ndarray:
    """Sigmoid of the initial log-odds plus the rate-scaled stage sum."""
    X = _validate_predict_inputs(X, model.n_features)
    F = np.full(X.shape[0], model.initial_log_odds)
    for tree in model.stages:
        F += model.learning_rate * tree.predict_values(X)
    return _sigmoid(F)


# ---------------------------------------------------------------------------
# serialization

Model = object  # LogisticModel | RandomForestModel | GradientBoostingModel


def model_to_dict(model) -> dict:
    if isinstance(model, LogisticModel):
        return {
            "schema_version": _SCHEMA_VERSION,
            "kind": "logit",
            "weights": model.weights.tolist(),
            "intercept": model.intercept,
            "l2_lambda": model.l2_lambda,
        }
    if isinstance(model, RandomForestModel):
        return {
            "schema_version": _SCHEMA_VERSION,
            "kind": "rf",
            "n_features": model.n_features,
            "n_trees": model.n_trees,
            "max_depth": model.max_depth,
            "max_features_fraction": model.max_features_fraction,
            "seed": model.seed,
            "bootstrap": model.bootstrap,
            "leaf_averaging": model.leaf_averaging,
            "trees": [tree.to_dict() for tree in model.trees],
        }
    if isinstance(model, GradientBoostingModel):
        return {
            "schema_version": _SCHEMA_VERSION,
            "kind": "gbc",
            "n_features": model.n_features,
            "initial_log_odds": model.initial_log_odds,
            "learning_rate": model.learning_rate,
            "n_stages": model.n_stages,
            "max_depth": model.max_depth,
            "stages": [tree.to_dict() for tree in model.stages],
        }
    raise TypeError(f"not a model: {model!r}")


def model_from_dict(payload: dict):
    kind = payload.get("kind")
    if kind == "logit":
        return LogisticModel(
            weights=np.asarray(payload["weights"], dtype=float),
            intercept=float(payload["intercept"]),
            l2_lambda=float(payload["l2_lambda"]),
        )
    if kind == "rf":
        depth = int(payload["max_depth"])
        return RandomForestModel(
            trees=tuple(DecisionTree.from_dict(t, depth) for t in payload["trees"]),
            n_features=int(payload["n_features"]),
            n_trees=int(payload["n_trees"]),
            max_depth=depth,
            max_features_fraction=float(payload["max_features_fraction"]),
            seed=int(payload["seed"]),
            bootstrap=bool(payload["bootstrap"]),
            leaf_averaging=bool(payload["leaf_averaging"]),
        )
    if kind == "gbc":
        depth = int(payload["max_depth"])
        return GradientBoostingModel(
            initial_log_odds=float(payload["initial_log_odds"]),
            stages=tuple(DecisionTree.from_dict(t, depth) for t in payload["stages"]),
            n_features=int(payload["n_features"]),
            n_stages=int(payload["n_stages"]),
            learning_rate=float(payload["learning_rate"]),
            max_depth=depth,
        )
    raise ValueError(f"unknown model kind: {kind!r}")
