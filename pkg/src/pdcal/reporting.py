"""Report assembly and emission: JSON reports, JSONL/CSV result tables, SVG figures.

A report bundles, per dataset and grid cell, the metrics table plus the
recent-slice diagnostic series (reliability bins, ROC points, score
histogram).  Figures are rendered with matplotlib straight to self-contained
SVG files alongside the delimited exports; plotted elements carry stable SVG
group ids so the output stays machine-checkable.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataset import TimeOrderedDataset
from .harness import CELL_TO_KINDS, GridRun, GridSummary
from .metrics import DegenerateLabelsError, LabeledScores, reliability_bins, roc_curve

plt.rcParams["svg.hashsalt"] = "pdcal"

REPORT_SCHEMA_VERSION = 1
RESULTS_SCHEMA_VERSION = 1

_METRIC_BLOCK = {
    "type": "object",
    "properties": {
        "brier": {"type": "number", "minimum": 0, "maximum": 1},
        "auroc": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
        "gini": {"type": ["number", "null"], "minimum": -1, "maximum": 1},
    },
    "required": ["brier", "auroc", "gini"],
    "additionalProperties": False,
}

REPORT_JSON_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": REPORT_SCHEMA_VERSION},
        "dataset_id": {"type": "string"},
        "seed": {"type": "integer"},
        "n_rows": {"type": "integer", "minimum": 1},
        "n_bins": {"type": "integer", "minimum": 2},
        "split": {
            "type": "object",
            "properties": {
                "train": {"type": "array", "items": {"type": "integer"}},
                "calibration": {"type": "array", "items": {"type": "integer"}},
                "recent": {"type": "array", "items": {"type": "integer"}},
            },
            "required": ["train", "calibration", "recent"],
        },
        "cells": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "cell": {"type": "string"},
                    "model": {"type": "string"},
                    "calibrator": {"type": "string"},
                    "metrics": {
                        "type": "object",
                        "properties": {
                            "train": _METRIC_BLOCK,
                            "calibration": _METRIC_BLOCK,
                            "recent": _METRIC_BLOCK,
                            "normalized_brier_recent": {"type": ["number", "null"]},
                        },
                        "required": ["train", "calibration", "recent"],
                    },
                    "warnings": {"type": "array", "items": {"type": "string"}},
                    "recent_reliability": {
                        "type": "object",
                        "properties": {
                            "bins": {
                                "type": "array",
                                "items": {
                                    "type": "object",
                                    "properties": {
                                        "mean_predicted": {"type": ["number", "null"]},
                                        "observed_rate": {"type": ["number", "null"]},
                                        "count": {"type": "integer", "minimum": 0},
                                    },
                                    "required": ["mean_predicted", "observed_rate", "count"],
                                },
                            }
                        },
                        "required": ["bins"],
                    },
                    "recent_roc": {
                        "type": ["object", "null"],
                        "properties": {
                            "fpr": {"type": "array", "items": {"type": "number"}},
                            "tpr": {"type": "array", "items": {"type": "number"}},
                        },
                        "required": ["fpr", "tpr"],
                    },
                    "recent_histogram": {
                        "type": "object",
                        "properties": {
                            "edges": {"type": "array", "items": {"type": "number"}},
                            "counts": {"type": "array", "items": {"type": "integer"}},
                        },
                        "required": ["edges", "counts"],
                    },
                },
                "required": [
                    "cell",
                    "model",
                    "calibrator",
                    "metrics",
                    "recent_reliability",
                    "recent_roc",
                    "recent_histogram",
                ],
            },
        },
    },
    "required": ["schema_version", "dataset_id", "n_bins", "cells"],
}


def validate_report(report: dict) -> None:
    jsonschema.validate(report, REPORT_JSON_SCHEMA)


def _float_or_none(value):
    return None if value is None or (isinstance(value, float) and np.isnan(value)) else float(value)


def series_payload(scores: np.ndarray, labels: np.ndarray, n_bins: int) -> dict:
    """Reliability bins, ROC points, and score histogram for one score set."""
    data = LabeledScores(scores=scores, labels=labels)
    bins = reliability_bins(data, n_bins)
    reliability = {
        "bins": [
            {
                "mean_predicted": _float_or_none(bins.mean_predicted[i]),
                "observed_rate": _float_or_none(bins.observed_rate[i]),
                "count": int(bins.count[i]),
            }
            for i in range(n_bins)
        ]
    }
    try:
        curve = roc_curve(data)
        roc = {"fpr": curve.fpr.tolist(), "tpr": curve.tpr.tolist()}
    except DegenerateLabelsError:
        roc = None
    counts, edges = np.histogram(scores, bins=n_bins, range=(0.0, 1.0))
    histogram = {"edges": edges.tolist(), "counts": [int(c) for c in counts]}
    return {
        "recent_reliability": reliability,
        "recent_roc": roc,
        "recent_histogram": histogram,
    }


def _metrics_payload(result) -> dict:
    payload = {}
    for split in ("train", "calibration", "recent"):
        sm = result.split_metrics(split)
        payload[split] = {
            "brier": float(sm.brier),
            "auroc": _float_or_none(sm.auroc),
            "gini": _float_or_none(sm.gini),
        }
    payload["normalized_brier_recent"] = _float_or_none(result.normalized_brier_recent)
    return payload


def build_report(detailed: GridRun, ds: TimeOrderedDataset, n_bins: int = 10) -> dict:
    """Assemble and validate the per-dataset report from a grid run."""
    recent_labels = ds.labels[detailed.split.recent]
    cells = []
    for result in detailed.results:
        payload = {
            "cell": result.cell,
            "model": result.model_kind,
            "calibrator": result.calibration_kind,
            "metrics": _metrics_payload(result),
            "warnings": list(result.warnings),
        }
        payload.update(
            series_payload(detailed.cell_scores[result.cell]["recent"], recent_labels, n_bins)
        )
        cells.append(payload)
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "dataset_id": detailed.dataset_id,
        "seed": detailed.seed,
        "n_rows": ds.n_rows,
        "n_bins": n_bins,
        "split": detailed.split.as_dict(),
        "cells": cells,
    }
    validate_report(report)
    return report


def dumps_deterministic(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# result tables


def result_to_payload(result) -> dict:
    return {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "dataset_id": result.dataset_id,
        "cell": result.cell,
        "model": result.model_kind,
        "calibrator": result.calibration_kind,
        "seed": result.seed,
        "metrics": _metrics_payload(result),
        "warnings": list(result.warnings),
    }


def write_results_jsonl(results, path) -> None:
    """One schema-versioned JSON document per experiment result, one per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for result in results:
            handle.write(dumps_deterministic(result_to_payload(result)))
            handle.write("\n")


WIDE_CSV_COLUMNS = (
    "dataset_id",
    "cell",
    "model",
    "calibrator",
    "seed",
    "brier_train",
    "auroc_train",
    "gini_train",
    "brier_calibration",
    "auroc_calibration",
    "gini_calibration",
    "brier_recent",
    "auroc_recent",
    "gini_recent",
    "normalized_brier_recent",
    "warnings",
)


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(results, path) -> None:
    """Wide table: one row per dataset x cell for external analysis."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(WIDE_CSV_COLUMNS)
        for r in results:
            row = [r.dataset_id, r.cell, r.model_kind, r.calibration_kind, r.seed]
            for split in ("train", "calibration", "recent"):
                sm = r.split_metrics(split)
                row.extend([_cell_text(sm.brier), _cell_text(sm.auroc), _cell_text(sm.gini)])
            row.append(_cell_text(r.normalized_brier_recent))
            row.append("; ".join(r.warnings))
            writer.writerow(row)


def write_summary_csv(summary: GridSummary, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["metric", "split", "cell", "model", "calibrator", "min", "q1", "median", "q3", "max", "n_missing"]
        )
        for cell in sorted(summary.cells):
            model, calibrator = CELL_TO_KINDS[cell]
            five = summary.cells[cell]
            writer.writerow(
                [
                    summary.metric,
                    summary.split,
                    cell,
                    model,
                    calibrator,
                    *(repr(v) for v in five.as_tuple()),
                    summary.missing.get(cell, 0),
                ]
            )


# ---------------------------------------------------------------------------
# series CSV exports


def write_roc_csv(roc: dict, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["fpr", "tpr"])
        for f, t in zip(roc["fpr"], roc["tpr"]):
            writer.writerow([repr(float(f)), repr(float(t))])


def write_reliability_csv(reliability: dict, path) -> None:
    path = Path(path)
    n = len(reliability["bins"])
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "mean_predicted", "observed_rate", "count"])
        for i, b in enumerate(reliability["bins"]):
            writer.writerow(
                [
                    repr(i / n),
                    repr((i + 1) / n),
                    _cell_text(b["mean_predicted"]),
                    _cell_text(b["observed_rate"]),
                    b["count"],
                ]
            )


def write_histogram_csv(histogram: dict, path) -> None:
    path = Path(path)
    edges = histogram["edges"]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, count in enumerate(histogram["counts"]):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), count])


# ---------------------------------------------------------------------------
# figures


def _save_figure(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_reliability_figure(reliability: dict, path, title: str) -> None:
    """Reliability diagram: occupied-bin markers against the diagonal.

    Bins with count 0 are omitted from the markers; the legend notes how
    many were dropped.
    """
    bins = reliability["bins"]
    xs = [b["mean_predicted"] for b in bins if b["count"] > 0]
    ys = [b["observed_rate"] for b in bins if b["count"] > 0]
    n_empty = sum(1 for b in bins if b["count"] == 0)
    fig, ax = plt.subplots(figsize=(5, 5))
    diagonal = ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=1)[0]
    diagonal.set_gid("diagonal-reference")
    label = f"{len(xs)} occupied bins"
    if n_empty:
        label += f" ({n_empty} empty omitted)"
    markers = ax.scatter(xs, ys, color="tab:blue", zorder=3, label=label)
    markers.set_gid("reliability-markers")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("Mean predicted PD")
    ax.set_ylabel("Observed default rate")
    ax.set_title(title)
    ax.legend(loc="upper left")
    _save_figure(fig, Path(path))


def render_roc_figure(roc: dict, path, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=1)
    if roc is not None:
        line = ax.plot(roc["fpr"], roc["tpr"], color="tab:blue")[0]
        line.set_gid("roc-curve")
    else:
        ax.text(0.5, 0.5, "degenerate labels", ha="center", va="center")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title(title)
    _save_figure(fig, Path(path))


def render_histogram_figure(histogram: dict, path, title: str) -> None:
    edges = np.asarray(histogram["edges"], dtype=float)
    counts = np.asarray(histogram["counts"], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(
        edges[:-1], counts, width=np.diff(edges), align="edge",
        color="tab:blue", edgecolor="white",
    )
    for patch in bars:
        patch.set_gid("histogram-bar")
    ax.set_xlim(0, 1)
    ax.set_xlabel("Predicted PD")
    ax.set_ylabel("Count")
    ax.set_title(title)
    _save_figure(fig, Path(path))


def render_boxplot_figure(summary: GridSummary, path, title: str) -> None:
    """Five-number boxes per grid cell, whiskers at min/max."""
    cells = sorted(summary.cells)
    stats = []
    for cell in cells:
        five = summary.cells[cell]
        model, calibrator = CELL_TO_KINDS[cell]
        stats.append(
            {
                "label": f"{cell}\n{model}/{calibrator}",
                "whislo": five.minimum,
                "q1": five.q1,
                "med": five.median,
                "q3": five.q3,
                "whishi": five.maximum,
                "fliers": [],
            }
        )
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(cells)), 4.5))
    ax.bxp(stats, showfliers=False)
    ax.set_ylabel(f"{summary.metric} ({summary.split} split)")
    ax.set_title(title)
    ax.grid(axis="y", alpha=0.3)
    _save_figure(fig, Path(path))


def emit_plots(report: dict, out_dir, formats=("svg",)) -> list:
    """Per-cell figures and/or delimited series from a validated report.

    For each cell: a reliability diagram, a ROC curve, and a prediction
    histogram, one file per figure ("svg" renders, "csv" exports the series).
    Returns the written paths.
    """
    validate_report(report)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    dataset_id = report["dataset_id"]
    for cell_payload in report["cells"]:
        stem = f"{dataset_id}_{cell_payload['cell']}"
        title = f"{dataset_id} {cell_payload['cell']} ({cell_payload['model']}/{cell_payload['calibrator']})"
        if "svg" in formats:
            targets = [
                (render_reliability_figure, cell_payload["recent_reliability"], f"{stem}_reliability.svg"),
                (render_roc_figure, cell_payload["recent_roc"], f"{stem}_roc.svg"),
                (render_histogram_figure, cell_payload["recent_histogram"], f"{stem}_histogram.svg"),
            ]
            for render, payload, name in targets:
                target = out_dir / name
                render(payload, target, title)
                written.append(target)
        if "csv" in formats:
            reliability_path = out_dir / f"{stem}_reliability.csv"
            write_reliability_csv(cell_payload["recent_reliability"], reliability_path)
            written.append(reliability_path)
            if cell_payload["recent_roc"] is not None:
                roc_path = out_dir / f"{stem}_roc.csv"
                write_roc_csv(cell_payload["recent_roc"], roc_path)
                written.append(roc_path)
            histogram_path = out_dir / f"{stem}_histogram.csv"
            write_histogram_csv(cell_payload["recent_histogram"], histogram_path)
            written.append(histogram_path)
    return written
