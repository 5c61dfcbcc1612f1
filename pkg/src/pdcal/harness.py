"""Benchmark harness: the 3x3 model/calibrator grid over chronological splits.

Each cell of the grid runs the same nine-step protocol: split the dataset
60/20/20 in time order, train the model on the first slice, predict raw
probabilities on all three slices, fit the calibrator (if any) on the
calibration slice's predictions, re-predict calibrated probabilities on the
calibration and recent slices, and measure Brier/AUROC/Gini per slice.
Train-slice metrics are always computed on raw model output; the calibrator
never sees the training rows.  Recent-slice Brier scores are normalized by
the uncalibrated logistic regression's recent Brier to control for
per-dataset variation.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import calibrators as _calibrators
from .calibrators import apply as apply_calibrator
from .calibrators import fit_calibrator
from .dataset import SplitIndices, TimeOrderedDataset, chronological_split
from .metrics import DegenerateLabelsError, LabeledScores, auroc, brier_score, gini
from .models import fit_gbc, fit_logistic, fit_random_forest

MODEL_KINDS = ("logit", "rf", "gbc")
CALIBRATION_KINDS = ("none", "sigmoid", "isotonic")
SPLIT_NAMES = ("train", "calibration", "recent")

# grid nomenclature: rows are calibration treatments, columns are models
CELL_IDS = {
    ("logit", "none"): "E1",
    ("rf", "none"): "E2",
    ("gbc", "none"): "E3",
    ("logit", "sigmoid"): "E4",
    ("rf", "sigmoid"): "E5",
    ("gbc", "sigmoid"): "E6",
    ("logit", "isotonic"): "E7",
    ("rf", "isotonic"): "E8",
    ("gbc", "isotonic"): "E9",
}
GRID_ORDER = tuple(
    CELL_IDS[(model, cal)] for cal in CALIBRATION_KINDS for model in MODEL_KINDS
)
CELL_TO_KINDS = {cell: kinds for kinds, cell in CELL_IDS.items()}

DEFAULT_MODEL_CONFIG = {
    "logit": {"l2_lambda": 1.0},
    "rf": {
        "n_trees": 200,
        "max_depth": 12,
        "max_features_fraction": None,
        "bootstrap": True,
        "leaf_averaging": False,
    },
    "gbc": {"n_stages": 200, "learning_rate": 0.1, "max_depth": 3},
}


class ProtocolError(RuntimeError):
    """The benchmark protocol cannot proceed (e.g. zero normalization denominator)."""


def merge_model_config(overrides: Optional[dict]) -> dict:
    """Defaults overlaid with per-model overrides from a run config."""
    merged = {kind: dict(params) for kind, params in DEFAULT_MODEL_CONFIG.items()}
    for kind, params in (overrides or {}).items():
        if kind not in merged:
            raise ValueError(f"unknown model kind in config: {kind!r}")
        unknown = set(params) - set(merged[kind]) - {"seed"}
        if unknown:
            raise ValueError(f"unknown {kind} hyperparameters: {sorted(unknown)}")
        merged[kind].update(params)
    return merged


@dataclass(frozen=True)
class ExperimentSpec:
    """One grid cell: which model, which calibration treatment, which knobs."""

    dataset_id: str
    model_kind: str
    calibration_kind: str
    hyperparameters: Optional[dict] = None
    seed: int = 0

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
        if self.calibration_kind not in CALIBRATION_KINDS:
            raise ValueError(f"calibration_kind must be one of {CALIBRATION_KINDS}")

    @property
    def cell(self) -> str:
        return CELL_IDS[(self.model_kind, self.calibration_kind)]


@dataclass(frozen=True)
class SplitMetrics:
    brier: float
    auroc: Optional[float]
    gini: Optional[float]


@dataclass(frozen=True)
class ExperimentResult:
    dataset_id: str
    cell: str
    model_kind: str
    calibration_kind: str
    seed: int
    train: SplitMetrics
    calibration: SplitMetrics
    recent: SplitMetrics
    normalized_brier_recent: Optional[float] = None
    warnings: tuple = ()

    def split_metrics(self, split: str) -> SplitMetrics:
        if split not in SPLIT_NAMES:
            raise ValueError(f"split must be one of {SPLIT_NAMES}")
        return getattr(self, split)


@dataclass
class GridRun:
    """Full detail of one dataset's grid run, for reporting and audits."""

    dataset_id: str
    seed: int
    split: SplitIndices
    results: list
    models: dict
    raw_scores: dict  # model kind -> split name -> scores
    cell_scores: dict  # cell id -> split name -> final (calibrated) scores
    fitted_calibrators: dict  # cell id -> calibrator


def _fit_model(kind: str, X: np.ndarray, y: np.ndarray, config: dict, seed: int):
    params = dict(config[kind])
    if kind == "logit":
        return fit_logistic(X, y, **params)
    if kind == "rf":
        params.setdefault("seed", seed)
        return fit_random_forest(X, y, **params)
    if kind == "gbc":
        params.pop("seed", None)
        return fit_gbc(X, y, **params)
    raise ValueError(f"unknown model kind: {kind!r}")


def _measure(scores: np.ndarray, labels: np.ndarray, split_name: str, warnings: list) -> SplitMetrics:
    data = LabeledScores(scores=scores, labels=labels)
    b = brier_score(data)
    try:
        a = auroc(data)
        g = gini(data)
    except DegenerateLabelsError:
        warnings.append(
            f"{split_name} split has a single outcome class; auroc/gini recorded as missing"
        )
        a = None
        g = None
    return SplitMetrics(brier=b, auroc=a, gini=g)


def run_grid_detailed(
    ds: TimeOrderedDataset,
    dataset_id: str = "dataset",
    model_config: Optional[dict] = None,
    seed: int = 0,
) -> GridRun:
    """Run all nine cells, fitting each model once and calibrating three ways."""
    config = merge_model_config(model_config)
    split = chronological_split(ds)
    slices = {
        "train": split.train,
        "calibration": split.calibration,
        "recent": split.recent,
    }
    y = {name: ds.labels[s] for name, s in slices.items()}
    X = {name: ds.features[s] for name, s in slices.items()}
    if y["train"].min() == y["train"].max():
        raise ProtocolError("training slice has a single outcome class")

    models = {}
    raw = {}
    for kind in MODEL_KINDS:
        model = _fit_model(kind, X["train"], y["train"], config, seed)
        models[kind] = model
        raw[kind] = {name: model.predict_proba(X[name]) for name in SPLIT_NAMES}

    results = []
    cell_scores = {}
    fitted = {}
    for cal_kind in CALIBRATION_KINDS:
        for kind in MODEL_KINDS:
            cell = CELL_IDS[(kind, cal_kind)]
            warnings: list = []
            calibrator = fit_calibrator(
                cal_kind,
                LabeledScores(scores=raw[kind]["calibration"], labels=y["calibration"]),
            )
            final = {"train": raw[kind]["train"]}
            for name in ("calibration", "recent"):
                final[name] = apply_calibrator(calibrator, raw[kind][name])
            metrics = {
                name: _measure(
                    raw[kind][name] if name == "train" else final[name],
                    y[name],
                    name,
                    warnings,
                )
                for name in SPLIT_NAMES
            }
            results.append(
                ExperimentResult(
                    dataset_id=dataset_id,
                    cell=cell,
                    model_kind=kind,
                    calibration_kind=cal_kind,
                    seed=seed,
                    train=metrics["train"],
                    calibration=metrics["calibration"],
                    recent=metrics["recent"],
                    warnings=tuple(warnings),
                )
            )
            cell_scores[cell] = final
            fitted[cell] = calibrator

    return GridRun(
        dataset_id=dataset_id,
        seed=seed,
        split=split,
        results=results,
        models=models,
        raw_scores=raw,
        cell_scores=cell_scores,
        fitted_calibrators=fitted,
    )


def run_grid(
    ds: TimeOrderedDataset,
    model_config: Optional[dict] = None,
    dataset_id: str = "dataset",
    seed: int = 0,
) -> list:
    """The nine E1..E9 results for one dataset, normalization left blank."""
    return run_grid_detailed(ds, dataset_id, model_config, seed).results


def run_experiment(spec: ExperimentSpec, ds: TimeOrderedDataset) -> ExperimentResult:
    """Run a single grid cell from scratch (fits its own model)."""
    config = merge_model_config(spec.hyperparameters)
    split = chronological_split(ds)
    slices = {
        "train": split.train,
        "calibration": split.calibration,
        "recent": split.recent,
    }
    y = {name: ds.labels[s] for name, s in slices.items()}
    X = {name: ds.features[s] for name, s in slices.items()}
    if y["train"].min() == y["train"].max():
        raise ProtocolError("training slice has a single outcome class")
    model = _fit_model(spec.model_kind, X["train"], y["train"], config, spec.seed)
    raw = {name: model.predict_proba(X[name]) for name in SPLIT_NAMES}
    warnings: list = []
    calibrator = fit_calibrator(
        spec.calibration_kind,
        LabeledScores(scores=raw["calibration"], labels=y["calibration"]),
    )
    final = {
        "train": raw["train"],
        "calibration": apply_calibrator(calibrator, raw["calibration"]),
        "recent": apply_calibrator(calibrator, raw["recent"]),
    }
    metrics = {
        name: _measure(
            raw[name] if name == "train" else final[name], y[name], name, warnings
        )
        for name in SPLIT_NAMES
    }
    return ExperimentResult(
        dataset_id=spec.dataset_id,
        cell=spec.cell,
        model_kind=spec.model_kind,
        calibration_kind=spec.calibration_kind,
        seed=spec.seed,
        train=metrics["train"],
        calibration=metrics["calibration"],
        recent=metrics["recent"],
        warnings=tuple(warnings),
    )


def normalize_results(results: list) -> list:
    """Fill recent-Brier ratios against the uncalibrated logistic cell (E1).

    Every cell is normalized by E1's recent Brier, so E1 itself reads 1.0 and
    calibrated-logit cells show their relative gain too.
    """
    by_cell = {r.cell: r for r in results}
    if "E1" not in by_cell:
        raise ProtocolError("normalization needs the uncalibrated logit cell (E1)")
    denominator = by_cell["E1"].recent.brier
    if denominator <= 0.0:
        raise ProtocolError(
            "cannot normalize: uncalibrated logit recent Brier is zero (degenerate perfect model)"
        )
    return [
        dataclasses.replace(r, normalized_brier_recent=r.recent.brier / denominator)
        for r in results
    ]


@dataclass(frozen=True)
class FiveNumberSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float

    def as_tuple(self) -> tuple:
        return (self.minimum, self.q1, self.median, self.q3, self.maximum)


@dataclass(frozen=True)
class GridSummary:
    """Per-cell five-number summaries of one metric across datasets."""

    metric: str
    split: str
    cells: dict
    n_datasets: int
    missing: dict = field(default_factory=dict)


def _metric_value(result: ExperimentResult, metric: str, split: str) -> Optional[float]:
    if metric == "normalized_brier":
        if split != "recent":
            raise ValueError("normalized_brier is only defined on the recent split")
        return result.normalized_brier_recent
    sm = result.split_metrics(split)
    if metric not in ("brier", "auroc", "gini"):
        raise ValueError(f"unknown metric: {metric!r}")
    return getattr(sm, metric)


def summarize(results: list, metric: str = "brier", split: str = "recent") -> GridSummary:
    """Five-number summary per grid cell across datasets.

    Quartiles interpolate linearly between closest ranks.  Datasets with a
    missing value (degenerate split, blank normalization) are excluded from
    that cell and counted in `missing`.
    """
    values: dict = {}
    missing: dict = {}
    dataset_ids = set()
    for r in results:
        dataset_ids.add(r.dataset_id)
        v = _metric_value(r, metric, split)
        if v is None:
            missing[r.cell] = missing.get(r.cell, 0) + 1
        else:
            values.setdefault(r.cell, []).append(float(v))
    if not values:
        raise ValueError("no results to summarize")
    cells = {}
    for cell, vals in values.items():
        q = np.percentile(vals, [0, 25, 50, 75, 100], method="linear")
        cells[cell] = FiveNumberSummary(*(float(x) for x in q))
    return GridSummary(
        metric=metric,
        split=split,
        cells=cells,
        n_datasets=len(dataset_ids),
        missing=missing,
    )


def run_grids_parallel(named_datasets: list, model_config: Optional[dict], seed: int, workers: int = 1) -> list:
    """Grid runs for several datasets in a thread pool.

    Datasets are isolated (any failure is captured per dataset) and results
    come back in input order regardless of completion order.  Returns a list
    of (dataset_id, GridRun | None, error | None).
    """

    def one(item):
        dataset_id, ds = item
        try:
            detailed = run_grid_detailed(ds, dataset_id, model_config, seed)
            detailed.results = normalize_results(detailed.results)
            return dataset_id, detailed, None
        except Exception as exc:  # per-dataset isolation
            return dataset_id, None, exc

    if workers <= 1:
        return [one(item) for item in named_datasets]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, named_datasets))


class CalibrationFitAudit:
    """Records every sigmoid/isotonic fit for protocol verification.

    Use as a context manager around a grid run, then call
    `verify_against(grid_run)` to assert that each recorded fit consumed
    exactly the calibration slice's labels and one model's calibration-slice
    predictions (never the train or recent rows).
    """

    def __init__(self):
        self.events = []

    def __enter__(self):
        _calibrators.add_fit_listener(self._record)
        return self

    def __exit__(self, exc_type, exc, tb):
        _calibrators.remove_fit_listener(self._record)
        return False

    def _record(self, kind: str, scores: np.ndarray, labels: np.ndarray) -> None:
        self.events.append((kind, scores, labels))

    def verify_against(self, detailed: GridRun, ds: TimeOrderedDataset) -> None:
        expected_labels = ds.labels[detailed.split.calibration]
        expected_scores = [
            detailed.raw_scores[kind]["calibration"] for kind in MODEL_KINDS
        ]
        n_cal = expected_labels.size
        for kind, scores, labels in self.events:
            if labels.size != n_cal or not np.array_equal(labels, expected_labels):
                raise ProtocolError(
                    f"{kind} calibrator was fit on rows outside the calibration slice"
                )
            if not any(np.array_equal(scores, exp) for exp in expected_scores):
                raise ProtocolError(
                    f"{kind} calibrator was fit on scores that are not a model's "
                    "calibration-slice predictions"
                )
        # two fitted treatments per model
        expected_fits = 2 * len(MODEL_KINDS)
        if len(self.events) != expected_fits:
            raise ProtocolError(
                f"expected {expected_fits} calibrator fits, observed {len(self.events)}"
            )
