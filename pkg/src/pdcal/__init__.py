"""Probability-of-default calibration toolkit.

Calibration metrics (Brier, pooled Brier, reliability bins), discrimination
metrics (ROC, AUROC, Gini), Platt and isotonic recalibration, reference
classifiers (logistic regression, random forest, gradient boosting), and a
chronological benchmark harness with CSV/JSONL/SVG reporting.
"""

from .calibrators import (
    IdentityCalibrator,
    IsotonicCalibrator,
    SigmoidCalibrator,
    apply,
    fit_calibrator,
    fit_isotonic,
    fit_sigmoid,
)
from .dataset import (
    SplitIndices,
    SyntheticSpec,
    TimeOrderedDataset,
    chronological_split,
    generate_synthetic,
    load_csv,
    make_rank_demo_scores,
    save_csv,
)
from .harness import (
    ExperimentResult,
    ExperimentSpec,
    GridSummary,
    normalize_results,
    run_experiment,
    run_grid,
    summarize,
)
from .metrics import (
    GradePool,
    LabeledScores,
    ReliabilityBins,
    RocCurve,
    auroc,
    brier_score,
    brier_score_pooled,
    gini,
    reliability_bins,
    roc_curve,
)
from .models import (
    fit_gbc,
    fit_logistic,
    fit_random_forest,
    predict_proba_gbc,
    predict_proba_rf,
)

__version__ = "0.1.0"

__all__ = [
    "IdentityCalibrator",
    "IsotonicCalibrator",
    "SigmoidCalibrator",
    "apply",
    "fit_calibrator",
    "fit_isotonic",
    "fit_sigmoid",
    "SplitIndices",
    "SyntheticSpec",
    "TimeOrderedDataset",
    "chronological_split",
    "generate_synthetic",
    "load_csv",
    "make_rank_demo_scores",
    "save_csv",
    "ExperimentResult",
    "ExperimentSpec",
    "GridSummary",
    "normalize_results",
    "run_experiment",
    "run_grid",
    "summarize",
    "GradePool",
    "LabeledScores",
    "ReliabilityBins",
    "RocCurve",
    "auroc",
    "brier_score",
    "brier_score_pooled",
    "gini",
    "reliability_bins",
    "roc_curve",
    "fit_gbc",
    "fit_logistic",
    "fit_random_forest",
    "predict_proba_gbc",
    "predict_proba_rf",
    "__version__",
]
