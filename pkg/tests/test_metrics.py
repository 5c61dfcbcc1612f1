import numpy as np
import pytest

from pdcal.metrics import (
    DegenerateLabelsError,
    Grade,
    GradePool,
    LabeledScores,
    auroc,
    brier_score,
    brier_score_pooled,
    gini,
    reliability_bins,
    roc_curve,
)

from oracles import pair_counting_auroc


def ls(scores, labels):
    return LabeledScores(scores=np.asarray(scores, float), labels=np.asarray(labels))


class TestLabeledScores:
    def test_rejects_out_of_range_scores(self):
        with pytest.raises(ValueError):
            ls([0.5, 1.2], [0, 1])

    def test_rejects_non_binary_labels(self):
        with pytest.raises(ValueError):
            ls([0.5, 0.5], [0, 2])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            ls([0.5], [0, 1])

    def test_arrays_are_immutable(self):
        data = ls([0.2, 0.8], [0, 1])
        with pytest.raises(ValueError):
            data.scores[0] = 0.9


class TestBrierScore:
    def test_perfect_predictions(self):
        assert brier_score(ls([1, 0, 1], [1, 0, 1])) == 0.0

    def test_symmetric_half(self):
        assert brier_score(ls([0.5, 0.5], [0, 1])) == 0.25

    def test_hand_arithmetic(self):
        # (0.04 + 0.16 + 0.01 + 0.01) / 4
        got = brier_score(ls([0.8, 0.4, 0.9, 0.1], [1, 0, 1, 0]))
        assert got == pytest.approx(0.055, abs=1e-15)

    def test_bounds_and_base_rate_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            n = rng.integers(2, 60)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            scores = rng.random(n)
            b = brier_score(ls(scores, labels))
            assert 0.0 <= b <= 1.0
            r = labels.mean()
            constant = brier_score(ls(np.full(n, r), labels))
            assert constant == pytest.approx(r * (1 - r), abs=1e-12)


class TestPooledBrier:
    def test_single_grade_hand_arithmetic(self):
        pool = GradePool([Grade(pd_assigned=0.2, observed_rate=0.2, count=10)])
        assert brier_score_pooled(pool) == pytest.approx(0.16, abs=1e-15)

    def test_perfect_grade(self):
        pool = GradePool([Grade(pd_assigned=0.0, observed_rate=0.0, count=5)])
        assert brier_score_pooled(pool) == 0.0

    def test_singleton_grades_match_unpooled(self):
        data = ls([0.8, 0.4, 0.9, 0.1], [1, 0, 1, 0])
        pooled = brier_score_pooled(GradePool.singleton_grades(data))
        assert pooled == pytest.approx(0.055, abs=1e-15)
        assert abs(pooled - brier_score(data)) <= 1e-12

    def test_singleton_equivalence_random(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(1, 40))
            data = ls(rng.random(n), rng.integers(0, 2, n))
            assert abs(
                brier_score_pooled(GradePool.singleton_grades(data)) - brier_score(data)
            ) <= 1e-12


class TestRocCurve:
    def test_perfect_separation(self):
        curve = roc_curve(ls([0.1, 0.9], [0, 1]))
        assert curve.points == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]

    def test_perfect_anti_separation(self):
        curve = roc_curve(ls([0.9, 0.1], [0, 1]))
        assert curve.points == [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]

    def test_tied_scores_collapse_to_diagonal_step(self):
        curve = roc_curve(ls([0.5, 0.5], [0, 1]))
        assert curve.points == [(0.0, 0.0), (1.0, 1.0)]
        assert auroc(ls([0.5, 0.5], [0, 1])) == pytest.approx(
            pair_counting_auroc([0.5, 0.5], [0, 1]), abs=1e-15
        )

    def test_degenerate_labels_raise(self):
        with pytest.raises(DegenerateLabelsError):
            roc_curve(ls([0.2, 0.8], [1, 1]))
        with pytest.raises(DegenerateLabelsError):
            auroc(ls([0.2, 0.8], [0, 0]))

    def test_curve_invariants_random(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            n = int(rng.integers(2, 80))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            # coarse grid scores force plenty of ties
            scores = rng.integers(0, 6, n) / 5.0
            curve = roc_curve(ls(scores, labels))
            assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
            assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
            assert np.all(np.diff(curve.fpr) >= 0)
            assert np.all(np.diff(curve.tpr) >= 0)


class TestAuroc:
    def test_perfect_ranking(self):
        assert auroc(ls([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])) == 1.0

    def test_tie_half_credit(self):
        assert auroc(ls([0.4, 0.4, 0.6], [0, 1, 1])) == pytest.approx(0.75, abs=1e-15)

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(17)
        n = 100_000
        data = ls(rng.random(n), rng.integers(0, 2, n))
        assert auroc(data) == pytest.approx(0.5, abs=0.01)

    def test_trapezoid_matches_pair_counting(self):
        rng = np.random.default_rng(29)
        for _ in range(60):
            n = int(rng.integers(2, 1000))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            if rng.random() < 0.5:
                scores = rng.random(n)
            else:
                scores = rng.integers(0, 10, n) / 9.0
            data = ls(scores, labels)
            assert abs(auroc(data) - pair_counting_auroc(scores, labels)) <= 1e-12


class TestGini:
    def test_conversion_table_anchor_09(self):
        # pair count: 4 clear positives beat all 5 negatives (20), the last
        # positive beats two and ties one (2.5) -> 22.5 / 25 = 0.9 -> Gini 0.8
        scores = [0.1, 0.2, 0.3, 0.4, 0.45, 0.9, 0.8, 0.7, 0.6, 0.3]
        labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]
        data = ls(scores, labels)
        assert auroc(data) == pytest.approx(0.9, abs=1e-12)
        assert gini(data) == pytest.approx(0.8, abs=1e-12)

    def test_random_ranking_scores_zero(self):
        # one tied block: AUROC 0.5 by construction -> Gini 0
        data = ls([0.3, 0.3, 0.3, 0.3], [0, 1, 0, 1])
        assert auroc(data) == 0.5
        assert gini(data) == 0.0

    def test_perfect_model(self):
        data = ls([0.1, 0.9], [0, 1])
        assert gini(data) == 1.0

    def test_identity_property(self):
        rng = np.random.default_rng(41)
        for _ in range(200):
            n = int(rng.integers(2, 50))
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            data = ls(rng.random(n), labels)
            assert gini(data) == 2.0 * auroc(data) - 1.0


class TestRankInvariance:
    def test_halving_preserves_curve_and_auroc(self):
        rng = np.random.default_rng(53)
        scores = rng.random(500)
        labels = rng.integers(0, 2, 500)
        data = ls(scores, labels)
        halved = ls(scores / 2.0, labels)
        assert auroc(data) == auroc(halved)
        assert np.array_equal(roc_curve(data).fpr, roc_curve(halved).fpr)
        assert np.array_equal(roc_curve(data).tpr, roc_curve(halved).tpr)

    def test_strictly_increasing_transforms(self):
        # grid scores make g(x) = x**2 exact in binary floating point
        rng = np.random.default_rng(59)
        base = rng.integers(0, 65, 300) / 64.0
        labels = rng.integers(0, 2, 300)
        reference = auroc(ls(base, labels))
        for transform in (lambda x: x / 2, lambda x: x / 4, lambda x: x * x):
            transformed = ls(transform(base), labels)
            assert auroc(transformed) == reference


class TestReliabilityBins:
    def test_one_point_per_extreme_bin(self):
        bins = reliability_bins(ls([0.05, 0.95], [0, 1]), n_bins=10)
        assert bins.count[0] == 1 and bins.count[9] == 1
        assert bins.mean_predicted[0] == pytest.approx(0.05)
        assert bins.observed_rate[0] == 0.0
        assert bins.mean_predicted[9] == pytest.approx(0.95)
        assert bins.observed_rate[9] == 1.0
        assert bins.count[1:9].sum() == 0
        assert not bins.occupied[1:9].any()
        assert np.isnan(bins.mean_predicted[3])

    def test_constant_predictor_single_bin(self):
        bins = reliability_bins(ls([0.5, 0.5, 0.5, 0.5], [0, 1, 1, 1]), n_bins=10)
        assert bins.occupied.sum() == 1
        occupied = int(np.flatnonzero(bins.occupied)[0])
        assert bins.observed_rate[occupied] == pytest.approx(0.75)
        assert bins.count.sum() == 4

    def test_counts_partition_input(self):
        rng = np.random.default_rng(61)
        data = ls(rng.random(1000), rng.integers(0, 2, 1000))
        for n_bins in (2, 5, 10, 17):
            assert reliability_bins(data, n_bins).count.sum() == 1000

    def test_rejects_small_bin_count(self):
        with pytest.raises(ValueError):
            reliability_bins(ls([0.5], [1]), n_bins=1)

    def test_score_of_one_lands_in_last_bin(self):
        bins = reliability_bins(ls([1.0], [1]), n_bins=10)
        assert bins.count[9] == 1

    def test_calibrated_by_construction_generator(self):
        from pdcal.dataset import make_rank_demo_scores

        data = make_rank_demo_scores(100_000, seed=71)
        bins = reliability_bins(data, n_bins=10)
        big = bins.count >= 1000
        assert big.any()
        assert np.all(np.abs(bins.observed_rate[big] - bins.mean_predicted[big]) <= 0.02)
