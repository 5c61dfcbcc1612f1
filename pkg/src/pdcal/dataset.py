"""Loading, validation, generation, and chronological splitting of labeled credit data.

Datasets are treated as time series: rows carry monotone timestamps and the
benchmark protocol trains on the chronologically first 60%, fits calibrators
on the next 20%, and holds out the most recent 20%.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .metrics import LabeledScores

_EPOCH = date(1970, 1, 1)
_MISSING_TOKENS = {"", "na", "nan", "null", "none"}


class DatasetError(ValueError):
    """Invalid dataset contents or construction arguments."""


class CsvFormatError(DatasetError):
    """Malformed CSV input; messages carry 1-based line numbers."""


@dataclass(frozen=True)
class TimeOrderedDataset:
    """Feature matrix, binary labels, and non-decreasing timestamps.

    Immutable after construction; arrays are safe to share across threads.
    """

    features: np.ndarray
    labels: np.ndarray
    timestamps: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        features = np.array(self.features, dtype=float)
        labels = np.asarray(self.labels)
        timestamps = np.array(self.timestamps, dtype=float)
        names = tuple(self.feature_names)
        if features.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        n = features.shape[0]
        if labels.shape != (n,) or timestamps.shape != (n,) or n < 1:
            raise DatasetError("features, labels, and timestamps must have matching row counts")
        labels = labels.astype(np.int8)
        if np.any((labels != 0) & (labels != 1)):
            raise DatasetError("labels must be 0 or 1")
        if np.any(np.diff(timestamps) < 0):
            raise DatasetError("timestamps must be non-decreasing")
        if np.any(np.isnan(features)):
            raise DatasetError("features contain NaN after ingestion")
        if len(names) != features.shape[1]:
            raise DatasetError("feature_names length must match feature columns")
        for arr in (features, labels, timestamps):
            arr.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def default_rate(self) -> float:
        return float(self.labels.mean())


@dataclass(frozen=True)
class SplitIndices:
    """Contiguous chronological train / calibration / recent index ranges."""

    train: slice
    calibration: slice
    recent: slice

    @classmethod
    def for_length(cls, n: int) -> "SplitIndices":
        if n < 10:
            raise DatasetError(f"dataset too small: need >= 10 rows, got {n}")
        train_end = math.floor(0.6 * n)
        calibration_end = math.floor(0.8 * n)
        return cls(
            train=slice(0, train_end),
            calibration=slice(train_end, calibration_end),
            recent=slice(calibration_end, n),
        )

    def as_dict(self) -> dict:
        return {
            "train": [self.train.start, self.train.stop],
            "calibration": [self.calibration.start, self.calibration.stop],
            "recent": [self.recent.start, self.recent.stop],
        }


def chronological_split(ds: TimeOrderedDataset) -> SplitIndices:
    """Partition rows into the first 60%, next 20%, and most recent 20%.

    Both cut points use floor, so the remainder rows land in the recent set
    and no shuffling ever occurs.
    """
    return SplitIndices.for_length(ds.n_rows)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic consumer-credit generator."""

    n_rows: int
    n_features: int = 5
    base_default_rate: float = 0.06
    noise_scale: float = 1.0
    drift_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 10:
            raise DatasetError("n_rows must be >= 10")
        if self.n_features < 1:
            raise DatasetError("n_features must be >= 1")
        if not 0.0 <= self.base_default_rate <= 1.0:
            raise DatasetError("base_default_rate must lie in [0, 1]")
        if self.noise_scale < 0.0:
            raise DatasetError("noise_scale must be non-negative")
        if not np.isfinite(self.drift_rate):
            raise DatasetError("drift_rate must be finite")


def generate_synthetic(spec: SyntheticSpec, return_latent: bool = False):
    """Draw a deterministic synthetic time-ordered credit dataset.

    Each row's latent score is a unit-variance linear combination of its
    standard-normal features plus a per-row drift term; outcomes follow a
    latent-threshold logistic model, so the true per-row PD is the logistic
    of the shifted, noise-scaled latent score and the threshold is placed to
    hit the requested base default rate.  `noise_scale = 0` degenerates to a
    hard threshold of the latent score.

    With `return_latent=True` the true per-row PDs are returned alongside
    the dataset (a debug channel for calibration-quality checks; the PDs are
    never part of the dataset itself).
    """
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n_rows, spec.n_features
    features = rng.standard_normal((n, d))
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    drift = spec.drift_rate * (np.arange(n) / n)
    latent = features @ direction + drift
    noise = rng.logistic(loc=0.0, scale=1.0, size=n)
    perturbed = latent + spec.noise_scale * noise

    if spec.base_default_rate >= 1.0:
        threshold = -np.inf
    elif spec.base_default_rate <= 0.0:
        threshold = np.inf
    else:
        threshold = float(np.quantile(perturbed, 1.0 - spec.base_default_rate))
    labels = (perturbed > threshold).astype(np.int8)

    ds = TimeOrderedDataset(
        features=features,
        labels=labels,
        timestamps=np.arange(n, dtype=float),
        feature_names=tuple(f"x{j}" for j in range(d)),
    )
    if not return_latent:
        return ds
    if spec.noise_scale == 0.0:
        latent_pd = (latent > threshold).astype(float)
    else:
        with np.errstate(over="ignore"):
            latent_pd = 1.0 / (1.0 + np.exp(-(latent - threshold) / spec.noise_scale))
    return ds, latent_pd


def make_rank_demo_scores(n: int, seed: int) -> LabeledScores:
    """Well-calibrated, strongly ranking toy predictions.

    Scores come from a bimodal Beta mixture (low-risk and high-risk modes)
    and each label is drawn with probability exactly equal to its score, so
    the predictions are perfectly calibrated by construction while keeping
    plenty of rank power.
    """
    if n < 100:
        raise DatasetError("rank demo needs n >= 100")
    rng = np.random.default_rng(seed)
    high = rng.random(n) < 0.5
    scores = np.where(high, rng.beta(8.0, 2.0, n), rng.beta(2.0, 8.0, n))
    labels = (rng.random(n) < scores).astype(np.int8)
    return LabeledScores(scores=scores, labels=labels)


def demo_score_mixture_moments() -> dict:
    """Analytic mean / second moment / Brier floor of the demo score mixture."""
    # equal mixture of Beta(2, 8) and Beta(8, 2)
    second = 0.5 * (2 * 3 + 8 * 9) / (10 * 11)
    mean = 0.5
    return {"mean": mean, "second_moment": second, "expected_brier": mean - second}


def _parse_time_cell(cell: str, line_no: int) -> float:
    text = cell.strip()
    try:
        return float(int(text))
    except ValueError:
        pass
    try:
        return float((date.fromisoformat(text) - _EPOCH).days)
    except ValueError:
        raise CsvFormatError(
            f"line {line_no}: time value {text!r} is neither an integer ordinal "
            "nor an ISO-8601 date"
        ) from None


def load_csv(
    path,
    label_column: str,
    time_column: str,
    impute_missing: bool = False,
) -> TimeOrderedDataset:
    """Load a labeled credit dataset from CSV and sort it by time.

    Expects UTF-8, comma-delimited text with a mandatory header row and `.`
    decimal separators.  Label values must be exactly "0" or "1"; the time
    column holds integer ordinals or ISO-8601 dates (converted to days since
    epoch).  Rows with missing feature values are rejected unless
    `impute_missing` is set, in which case column medians are substituted.
    Ties in the time column keep file order.
    """
    path = Path(path)
    if not path.exists():
        raise CsvFormatError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file: header row is mandatory") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise CsvFormatError(f"duplicate column names: {', '.join(dupes)}")
        for required in (label_column, time_column):
            if required not in header:
                raise CsvFormatError(f"missing column: {required!r}")
        if label_column == time_column:
            raise CsvFormatError("label and time columns must differ")
        label_idx = header.index(label_column)
        time_idx = header.index(time_column)
        feature_names = tuple(
            name for i, name in enumerate(header) if i not in (label_idx, time_idx)
        )
        feature_idx = [i for i in range(len(header)) if i not in (label_idx, time_idx)]

        labels = []
        times = []
        rows = []
        missing_cells = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise CsvFormatError(
                    f"line {line_no}: expected {len(header)} cells, got {len(record)}"
                )
            label_text = record[label_idx].strip()
            if label_text not in ("0", "1"):
                raise CsvFormatError(
                    f"line {line_no}: label value {label_text!r} is not 0 or 1"
                )
            labels.append(int(label_text))
            times.append(_parse_time_cell(record[time_idx], line_no))
            row = np.empty(len(feature_idx))
            for out_col, i in enumerate(feature_idx):
                text = record[i].strip()
                if text.lower() in _MISSING_TOKENS:
                    row[out_col] = np.nan
                    missing_cells.append((line_no, header[i]))
                    continue
                try:
                    row[out_col] = float(text)
                except ValueError:
                    raise CsvFormatError(
                        f"line {line_no}: unparseable numeric cell {text!r} "
                        f"in column {header[i]!r}"
                    ) from None
            rows.append(row)

    if not rows:
        raise CsvFormatError("no data rows")
    features = np.vstack(rows)
    if missing_cells:
        if not impute_missing:
            line_no, column = missing_cells[0]
            raise CsvFormatError(
                f"line {line_no}: missing value in column {column!r} "
                f"({len(missing_cells)} missing cells total; pass impute_missing "
                "to substitute column medians)"
            )
        medians = np.nanmedian(features, axis=0)
        if np.any(np.isnan(medians)):
            bad = feature_names[int(np.flatnonzero(np.isnan(medians))[0])]
            raise CsvFormatError(f"column {bad!r} has no values to impute from")
        nan_rows, nan_cols = np.nonzero(np.isnan(features))
        features[nan_rows, nan_cols] = medians[nan_cols]

    order = np.argsort(np.asarray(times), kind="stable")
    return TimeOrderedDataset(
        features=features[order],
        labels=np.asarray(labels)[order],
        timestamps=np.asarray(times, dtype=float)[order],
        feature_names=feature_names,
    )


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def save_csv(ds: TimeOrderedDataset, path, label_column: str = "default", time_column: str = "t") -> None:
    """Write a dataset back to CSV; numeric formatting round-trips exactly."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow([time_column, label_column, *ds.feature_names])
        for i in range(ds.n_rows):
            writer.writerow(
                [
                    _format_number(ds.timestamps[i]),
                    int(ds.labels[i]),
                    *(_format_number(v) for v in ds.features[i]),
                ]
            )
