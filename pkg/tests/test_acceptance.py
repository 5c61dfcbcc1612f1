"""Acceptance suite: one test per acceptance criterion, tolerances pinned.

Run with `pytest -v -rA tests/test_acceptance.py` to see one pass/fail line
plus the measured values per criterion.
"""

import statistics

import numpy as np
import pytest
from click.testing import CliRunner

from pdcal.calibrators import apply, fit_isotonic, fit_sigmoid, sigmoid_fit_gradient_norm
from pdcal.cli import main as cli_main
from pdcal.dataset import SyntheticSpec, generate_synthetic, make_rank_demo_scores
from pdcal.harness import (
    CalibrationFitAudit,
    normalize_results,
    run_grid_detailed,
)
from pdcal.metrics import (
    GradePool,
    LabeledScores,
    auroc,
    brier_score,
    brier_score_pooled,
    gini,
)

from oracles import brute_force_isotonic_sse, pair_counting_auroc


def announce(number: int, name: str, detail: str = "") -> None:
    suffix = f" [{detail}]" if detail else ""
    print(f"[ACCEPTANCE] criterion {number} ({name}): PASS{suffix}")


def random_labeled_scores(rng, max_n: int, tie_prone: bool):
    n = int(rng.integers(2, max_n + 1))
    labels = rng.integers(0, 2, n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    if tie_prone:
        scores = rng.integers(0, 8, n) / 7.0
    else:
        scores = rng.random(n)
    return LabeledScores(scores=scores, labels=labels)


class TestCriterion1MetricIdentities:
    def test_gini_identity_exact(self):
        rng = np.random.default_rng(1001)
        worst = 0.0
        for i in range(1000):
            data = random_labeled_scores(rng, 60, tie_prone=i % 3 == 0)
            worst = max(worst, abs(gini(data) - (2.0 * auroc(data) - 1.0)))
        assert worst <= 1e-12

    def test_trapezoid_matches_pair_counting(self):
        rng = np.random.default_rng(1002)
        worst = 0.0
        for i in range(120):
            data = random_labeled_scores(rng, 1000, tie_prone=i % 2 == 0)
            gap = abs(auroc(data) - pair_counting_auroc(data.scores, data.labels))
            worst = max(worst, gap)
        assert worst <= 1e-12

    def test_pooled_singleton_matches_unpooled(self):
        rng = np.random.default_rng(1003)
        worst = 0.0
        for _ in range(300):
            n = int(rng.integers(1, 50))
            data = LabeledScores(scores=rng.random(n), labels=rng.integers(0, 2, n))
            pooled = brier_score_pooled(GradePool.singleton_grades(data))
            worst = max(worst, abs(pooled - brier_score(data)))
        assert worst <= 1e-12
        announce(1, "metric identities", f"max deviation {worst:.2e}")


class TestCriterion2RankLimitsDemo:
    def test_halving_preserves_auroc_and_degrades_brier(self):
        data = make_rank_demo_scores(10_000, seed=0)
        halved = data.with_scores(data.scores / 2.0)
        auroc_before = auroc(data)
        auroc_after = auroc(halved)
        assert auroc_after == auroc_before  # bit-identical
        brier_before = brier_score(data)
        brier_after = brier_score(halved)
        assert brier_after > brier_before
        announce(
            2,
            "rank-only evaluation limits",
            f"auroc {auroc_before:.4f} unchanged; brier {brier_before:.4f} -> {brier_after:.4f}",
        )


class TestCriterion3PavaCorrectness:
    def test_matches_brute_force_and_never_hurts_training_brier(self):
        rng = np.random.default_rng(1005)
        worst_gap = 0.0
        for i in range(500):
            n = int(rng.integers(2, 9))
            scores = rng.integers(0, 5, n) / 4.0 if i % 2 == 0 else rng.random(n)
            labels = rng.integers(0, 2, n)
            calibrator = fit_isotonic((scores, labels))
            fitted = apply(calibrator, scores)
            sse = float(np.sum((fitted - labels) ** 2))
            best = brute_force_isotonic_sse(scores, labels)
            worst_gap = max(worst_gap, abs(sse - best))
            assert sse <= best + 1e-5
            data = LabeledScores(scores=np.clip(scores, 0, 1), labels=labels)
            recal = data.with_scores(apply(fit_isotonic(data), data.scores))
            assert brier_score(recal) <= brier_score(data) + 1e-12
        assert worst_gap <= 1e-5
        announce(3, "isotonic least-squares optimality", f"max objective gap {worst_gap:.2e}")


class TestCriterion4PlattRecovery:
    def test_recovers_known_distortion(self):
        rng = np.random.default_rng(1007)
        n = 50_000
        f = rng.uniform(-3.0, 3.0, n)
        truth_a, truth_b = -2.0, 1.0
        p = 1.0 / (1.0 + np.exp(truth_a * f + truth_b))
        labels = (rng.random(n) < p).astype(int)
        calibrator = fit_sigmoid((f, labels))
        grad_norm = sigmoid_fit_gradient_norm(calibrator, (f, labels))
        assert abs(calibrator.a - truth_a) <= 0.1
        assert abs(calibrator.b - truth_b) <= 0.1
        assert grad_norm <= 1e-8
        announce(
            4,
            "sigmoid-map recovery",
            f"a={calibrator.a:.3f} b={calibrator.b:.3f} grad={grad_norm:.1e}",
        )


class TestCriterion5ProtocolFidelity:
    def test_grid_protocol_on_18_datasets(self):
        tiny = {
            "rf": {"n_trees": 4, "max_depth": 3},
            "gbc": {"n_stages": 5, "learning_rate": 0.2, "max_depth": 2},
        }
        total = 0
        for i in range(18):
            n_rows = 240 + 7 * i  # exercise the floor arithmetic on many N
            ds = generate_synthetic(SyntheticSpec(n_rows=n_rows, seed=2000 + i))
            with CalibrationFitAudit() as audit:
                detailed = run_grid_detailed(ds, f"proto-{i}", tiny, seed=1)
            audit.verify_against(detailed, ds)
            split = detailed.split
            assert split.train.stop == int(np.floor(0.6 * n_rows))
            assert split.calibration.stop == int(np.floor(0.8 * n_rows))
            assert split.recent.stop == n_rows
            assert len(detailed.results) == 9
            assert sorted(r.cell for r in detailed.results) == [f"E{k}" for k in range(1, 10)]
            total += len(detailed.results)
        assert total == 162
        announce(5, "protocol fidelity", "162 cells, calibrators saw only calibration rows")


@pytest.fixture(scope="module")
def drift_family():
    """Ten synthetic datasets with strengthening population drift."""
    datasets = [
        generate_synthetic(
            SyntheticSpec(
                n_rows=8000,
                n_features=5,
                base_default_rate=0.06,
                noise_scale=1.0,
                drift_rate=2.5 + 0.25 * i,
                seed=100 + i,
            )
        )
        for i in range(10)
    ]
    by_cell = {}
    for i, ds in enumerate(datasets):
        detailed = run_grid_detailed(ds, f"drift-{i}", None, seed=7)
        for r in normalize_results(detailed.results):
            by_cell.setdefault(r.cell, []).append(r)
    return by_cell


class TestCriterion6QualitativeReplication:
    def test_a_recalibrated_nonparametrics_beat_raw_logit(self, drift_family):
        rf_iso = statistics.median(
            r.normalized_brier_recent for r in drift_family["E8"]
        )
        gbc_iso = statistics.median(
            r.normalized_brier_recent for r in drift_family["E9"]
        )
        assert rf_iso < 1.0
        assert gbc_iso < 1.0
        announce(
            6,
            "a: isotonic rf/gbc beat raw logit on recent brier",
            f"median normalized rf={rf_iso:.3f} gbc={gbc_iso:.3f}",
        )

    def test_b_rf_training_brier_is_misleading(self, drift_family):
        train = [r.train.brier for r in drift_family["E2"]]
        ratios = [r.recent.brier / r.train.brier for r in drift_family["E2"]]
        assert max(train) < 0.02
        assert min(ratios) >= 5.0
        announce(
            6,
            "b: rf train-set brier does not transfer",
            f"max train {max(train):.4f}, min recent/train ratio {min(ratios):.1f}",
        )

    def test_c_isotonic_helps_logit_more_than_sigmoid(self, drift_family):
        pairs = zip(drift_family["E7"], drift_family["E4"])
        wins = sum(1 for iso, sig in pairs if iso.recent.brier <= sig.recent.brier)
        assert wins >= 7
        announce(6, "c: isotonic vs sigmoid on the logit", f"{wins}/10 datasets")


class TestCriterion7Determinism:
    def test_benchmark_rerun_is_byte_identical(self, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text(
            "seed: 13\n"
            "datasets:\n"
            "  - id: det-0\n"
            "    synthetic: {rows: 400, seed: 5, drift_rate: 1.0}\n"
            "  - id: det-1\n"
            "    synthetic: {rows: 350, seed: 6, drift_rate: 1.5}\n"
            "models:\n"
            "  rf: {n_trees: 6, max_depth: 4}\n"
            "  gbc: {n_stages: 8, max_depth: 2}\n",
            encoding="utf-8",
        )
        runner = CliRunner()
        payloads = []
        for sub in ("r1", "r2"):
            out = tmp_path / sub
            result = runner.invoke(
                cli_main,
                ["benchmark", str(config), "-o", str(out), "--figures", "none"],
                catch_exceptions=False,
            )
            assert result.exit_code == 0
            payloads.append((out / "results.jsonl").read_bytes())
        assert payloads[0] == payloads[1]
        assert len(payloads[0].splitlines()) == 18
        announce(7, "benchmark determinism", "rerun JSONL byte-identical")
