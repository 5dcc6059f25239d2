"""Metrics, breakout assessment, ranking metrics, and report formatting."""

import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from breakoutcast.evaluate import (
    assess_breakout,
    build_report,
    format_report_csv,
    format_report_text,
    mae_rmse,
    parse_report_csv,
    precision_at_k,
    ranking_table,
    recall_all_positives,
    recall_at_k,
)
from breakoutcast.errors import ValidationError
from breakoutcast.preprocess import WindowSample


def make_sample(entity_id, gamma, target, window=4):
    return WindowSample(
        entity_id=entity_id,
        input_social=np.full(window, float(gamma)),
        input_broadcast=np.zeros(window),
        target=float(target),
        window_end_week=window,
    )


def assess(entity_id, gamma, actual, predicted, threshold=1.2):
    return assess_breakout(make_sample(entity_id, gamma, actual), predicted,
                           threshold=threshold)


class TestMaeRmse:
    def test_identical_inputs_give_zero(self):
        assert mae_rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 0.0)

    def test_hand_computed_values(self):
        mae, rmse = mae_rmse([0.0, 0.0], [3.0, 4.0])
        assert mae == pytest.approx(3.5)
        assert rmse == pytest.approx(math.sqrt(12.5))

    def test_errors_scale_with_inputs(self):
        rng = np.random.default_rng(0)
        p, a = rng.uniform(0, 10, 50), rng.uniform(0, 10, 50)
        mae, rmse = mae_rmse(p, a)
        mae7, rmse7 = mae_rmse(7.3 * p, 7.3 * a)
        assert mae7 == pytest.approx(7.3 * mae)
        assert rmse7 == pytest.approx(7.3 * rmse)

    def test_bad_inputs_rejected(self):
        with pytest.raises(ValueError):
            mae_rmse([1.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            mae_rmse([], [])

    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1,
                    max_size=40),
           st.integers(min_value=0, max_value=2**32 - 1))
    def test_rmse_never_below_mae(self, values, seed):
        rng = np.random.default_rng(seed)
        actual = rng.uniform(-1e6, 1e6, size=len(values))
        mae, rmse = mae_rmse(values, actual)
        assert rmse >= mae - 1e-9


class TestAssessBreakout:
    def test_ratio_at_threshold_is_breakout(self):
        a = assess("e1", gamma=100.0, actual=120.0, predicted=120.0)
        assert a.ratio_actual == pytest.approx(1.2)
        assert a.label_actual and a.label_predicted

    def test_ratio_below_threshold_is_not(self):
        a = assess("e1", gamma=100.0, actual=119.0, predicted=119.0)
        assert not a.label_actual and not a.label_predicted

    def test_zero_gamma_has_undefined_ratios(self):
        a = assess("e1", gamma=0.0, actual=5.0, predicted=5.0)
        assert a.ratio_actual is None and a.ratio_predicted is None
        assert not a.label_actual and not a.label_predicted

    def test_negative_prediction_clamped_to_zero(self):
        a = assess("e1", gamma=10.0, actual=5.0, predicted=-3.0)
        assert a.beta_predicted == 0.0
        assert a.ratio_predicted == 0.0

    def test_labels_invariant_to_count_scale(self):
        c = 7.3
        for gamma, actual, predicted in ((10, 13, 11), (10, 11, 13), (4, 30, 2)):
            plain = assess("e", gamma, actual, predicted)
            scaled = assess("e", c * gamma, c * actual, c * predicted)
            assert scaled.label_actual == plain.label_actual
            assert scaled.label_predicted == plain.label_predicted
            assert scaled.ratio_actual == pytest.approx(plain.ratio_actual)

    def test_raising_threshold_never_adds_breakouts(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            gamma = rng.uniform(0, 20)
            actual, predicted = rng.uniform(0, 40, 2)
            low = assess("e", gamma, actual, predicted, threshold=1.2)
            high = assess("e", gamma, actual, predicted, threshold=1.5)
            assert low.label_actual or not high.label_actual
            assert low.label_predicted or not high.label_predicted


def ranked_fixture():
    """Four entities with predicted ratios 4, 3, 2, 1.5; actual T, F, T, F."""
    rows = [("a", 20.0, 40.0), ("b", 5.0, 30.0), ("c", 20.0, 20.0),
            ("d", 5.0, 15.0)]
    return [assess(eid, 10.0, actual, predicted)
            for eid, actual, predicted in rows]


class TestRankingMetrics:
    def test_precision_counts_actual_breakouts_in_top_k(self):
        assert precision_at_k(ranked_fixture(), 4) == pytest.approx(0.5)
        assert precision_at_k(ranked_fixture(), 2) == pytest.approx(0.5)
        assert precision_at_k(ranked_fixture(), 1) == pytest.approx(1.0)

    def test_precision_all_true(self):
        rows = [assess(f"e{i}", 10.0, 20.0, 20.0 + i) for i in range(5)]
        assert precision_at_k(rows, 5) == 1.0

    def test_recall_counts_predictions_in_top_actual(self):
        # 10 entities with actual ratios 10..1; only the top-2 actual
        # entities are predicted breakouts -> 2 hits in the actual top-5
        rows = []
        for i in range(10):
            predicted = 50.0 if i < 2 else 0.0
            rows.append(assess(f"e{i}", 10.0, 10.0 * (10 - i), predicted))
        assert recall_at_k(rows, 5) == pytest.approx(0.4)

    def test_recall_extremes(self):
        flagged = [assess(f"e{i}", 10.0, 20.0, 30.0) for i in range(4)]
        assert recall_at_k(flagged, 4) == 1.0
        silent = [assess(f"e{i}", 10.0, 20.0, 1.0) for i in range(4)]
        assert recall_at_k(silent, 4) == 0.0

    def test_recall_all_positives(self):
        rows = [assess("a", 10.0, 20.0, 20.0), assess("b", 10.0, 20.0, 1.0),
                assess("c", 10.0, 20.0, 30.0), assess("d", 10.0, 5.0, 30.0)]
        assert recall_all_positives(rows) == pytest.approx(2.0 / 3.0)

    def test_recall_all_positives_without_positives(self):
        rows = [assess("a", 10.0, 5.0, 30.0)]
        assert recall_all_positives(rows) == 0.0

    def test_metrics_invariant_to_input_order(self):
        rows = ranked_fixture() + [assess(f"x{i}", 10.0, (i % 3) * 8.0,
                                          (i % 4) * 6.0) for i in range(20)]
        shuffled = rows[:]
        random.Random(3).shuffle(shuffled)
        assert precision_at_k(rows, 6) == precision_at_k(shuffled, 6)
        assert recall_at_k(rows, 6) == recall_at_k(shuffled, 6)

    def test_gamma_zero_entities_are_excluded_from_ranking(self):
        rows = ranked_fixture() + [assess("z", 0.0, 50.0, 50.0)]
        assert precision_at_k(rows, 4) == pytest.approx(0.5)

    def test_invalid_k_and_empty_pool_rejected(self):
        with pytest.raises(ValueError):
            precision_at_k(ranked_fixture(), 0)
        with pytest.raises(ValueError):
            precision_at_k([assess("z", 0.0, 5.0, 5.0)], 3)

    def test_ranking_table_orders_by_predicted_ratio(self):
        rows = ranked_fixture() + [assess("z", 0.0, 5.0, 5.0)]
        table = ranking_table(rows)
        assert [r[0] for r in table] == ["a", "b", "c", "d", "z"]
        assert table[0][1] == pytest.approx(4.0)
        assert table[-1][1] is None

    def test_ranking_table_breaks_ties_by_entity_id(self):
        rows = [assess("b", 10.0, 5.0, 30.0), assess("a", 10.0, 5.0, 30.0)]
        assert [r[0] for r in ranking_table(rows)] == ["a", "b"]


class TestReports:
    def samples_and_results(self):
        rng = np.random.default_rng(4)
        samples = [make_sample(f"e{i:03d}", rng.uniform(1, 20),
                               rng.uniform(0, 40)) for i in range(30)]
        samples.append(make_sample("zero", 0.0, 9.0))
        targets = np.array([s.target for s in samples])
        noisy = targets + rng.normal(0, 2, size=targets.shape)
        return samples, {"M1": noisy, "M2": noisy.copy()}

    def test_identical_predictions_give_identical_rows(self):
        samples, results = self.samples_and_results()
        report = build_report(results, samples, k=10)
        first, second = report.rows
        assert first.model_name == "M1" and second.model_name == "M2"
        assert (first.mae, first.rmse) == (second.mae, second.rmse)
        assert first.precision_at_k == second.precision_at_k
        assert first.n_excluded_gamma_zero == 1

    def test_text_report_formatting(self):
        samples, results = self.samples_and_results()
        report = build_report({"M1": results["M1"]}, samples, k=10)
        text = format_report_text(report)
        assert "Precision top 10" in text
        assert "Recall top 10" in text
        assert f"{report.rows[0].mae:.2f}" in text
        assert text.endswith("\n")

    def test_two_decimal_style(self):
        samples = [make_sample("a", 10.0, 30.0), make_sample("b", 10.0, 10.0)]
        report = build_report({"M": [18.2, 21.8]}, samples, k=2)
        assert report.rows[0].mae == pytest.approx(11.8)
        assert "11.80" in format_report_text(report)

    def test_truncation_note_when_k_exceeds_pool(self):
        samples, results = self.samples_and_results()
        report = build_report(results, samples, k=500)
        assert report.k_truncated and report.k_used == 30
        assert "only 30 entities had defined ratios" in format_report_text(report)

    def test_csv_round_trip_is_exact(self):
        samples, results = self.samples_and_results()
        report = build_report(results, samples, k=10)
        parsed = parse_report_csv(format_report_csv(report))
        assert len(parsed) == 2
        for row, want in zip(parsed, report.rows):
            assert row["model"] == want.model_name
            assert row["mae"] == want.mae
            assert row["rmse"] == want.rmse
            assert row["precision_at_k"] == want.precision_at_k
            assert row["n_excluded"] == want.n_excluded_gamma_zero

    def test_parse_rejects_foreign_csv(self):
        with pytest.raises(ValidationError):
            parse_report_csv("model,mae\nM,1.0\n")
        with pytest.raises(ValidationError):
            parse_report_csv("")

    def test_prediction_count_mismatch_names_model(self):
        samples, results = self.samples_and_results()
        results["M2"] = results["M2"][:-1]
        with pytest.raises(ValueError, match="M2"):
            build_report(results, samples, k=10)

    def test_all_zero_gamma_rejected(self):
        samples = [make_sample("a", 0.0, 5.0), make_sample("b", 0.0, 7.0)]
        with pytest.raises(ValueError):
            build_report({"M": [5.0, 7.0]}, samples, k=2)

    def test_recall_mode_all_positives(self):
        samples, results = self.samples_and_results()
        report = build_report(results, samples, k=10,
                              recall_mode="all-positives")
        assert "Recall (all positives)" in format_report_text(report)
        with pytest.raises(ValueError):
            build_report(results, samples, recall_mode="bogus")
