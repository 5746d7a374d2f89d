import math

import numpy as np
import pytest

import setu.evaluation as evaluation
from setu.corpus import GroundTruth, ground_truth_from_labels
from setu.errors import EvaluationError
from setu.evaluation import (
    PreparedProject,
    average_precision,
    default_threshold_grid,
    evaluate_project,
    improvement,
    leave_one_out,
    recall_at_k,
    reciprocal_rank,
    tune_threshold,
)
from setu.ranker import Combiner

from conftest import make_bundle
from test_corpus import make_project


class TestRecallAtK:
    def test_hit_at_rank_one(self):
        assert recall_at_k(["g", "x"], {"g"}, 1) == 1

    def test_all_beyond_k(self):
        assert recall_at_k(["x", "y", "g"], {"g"}, 2) == 0

    def test_window_inspection(self):
        ranked = ["x", "g", "y", "g2"]
        assert recall_at_k(ranked, {"g", "g2"}, 5) == 1
        assert recall_at_k(ranked, {"g", "g2"}, 1) == 0

    def test_empty_gt_rejected(self):
        with pytest.raises(EvaluationError):
            recall_at_k(["x"], set(), 1)

    def test_k_must_be_positive(self):
        with pytest.raises(EvaluationError):
            recall_at_k(["x"], {"x"}, 0)


class TestAveragePrecision:
    def test_single_gt_at_rank_one(self):
        assert average_precision(["g", "x", "y"], {"g"}) == 1.0

    def test_two_gt_at_ranks_one_and_three(self):
        got = average_precision(["g1", "x", "g2"], {"g1", "g2"})
        assert got == pytest.approx((1 / 1 + 2 / 3) / 2, abs=1e-12)
        assert got == pytest.approx(0.83333333, abs=1e-7)

    def test_three_gt_at_ranks_two_three_four(self):
        got = average_precision(["x", "g1", "g2", "g3"], {"g1", "g2", "g3"})
        assert got == pytest.approx((1 / 2 + 2 / 3 + 3 / 4) / 3, abs=1e-12)
        assert got == pytest.approx(0.6389, abs=1e-4)

    def test_perfect_iff_gt_occupies_top_ranks(self):
        assert average_precision(["g1", "g2", "x"], {"g1", "g2"}) == 1.0
        assert average_precision(["g1", "x", "g2"], {"g1", "g2"}) < 1.0

    def test_missing_gt_members_contribute_zero(self):
        got = average_precision(["g1", "x"], {"g1", "gone"})
        assert got == pytest.approx(0.5)

    def test_empty_gt_rejected(self):
        with pytest.raises(EvaluationError):
            average_precision(["x"], set())


class TestReciprocalRank:
    def test_first_hit_rank_four(self):
        assert reciprocal_rank(["a", "b", "c", "g"], {"g"}) == 0.25

    def test_first_hit_rank_one(self):
        assert reciprocal_rank(["g", "b"], {"g"}) == 1.0

    def test_mid_list(self):
        assert reciprocal_rank(["x", "g", "y"], {"g"}) == 0.5

    def test_zero_when_absent(self):
        assert reciprocal_rank(["x", "y"], {"g"}) == 0.0


class TestImprovement:
    def test_mrr_spot_check(self):
        assert round(improvement(0.831, 0.576) * 100) == 44

    def test_map_spot_check(self):
        assert round(improvement(0.280, 0.151) * 100) == 85

    def test_equal_is_zero(self):
        assert improvement(0.5, 0.5) == 0.0

    def test_positive_iff_better(self):
        assert improvement(0.6, 0.5) > 0
        assert improvement(0.4, 0.5) < 0

    def test_zero_baseline_rejected(self):
        with pytest.raises(EvaluationError):
            improvement(0.5, 0.0)


def cluster_bundles(labels, seed=0):
    """One bundle per report; same-label reports share similar features."""
    rng = np.random.default_rng(seed)
    directions = {}
    bundles = []
    for label in labels:
        if label not in directions:
            directions[label] = rng.random(6) + 0.1
        base = directions[label]
        jitter = base + rng.normal(0, 0.02, 6)
        bundles.append(
            make_bundle(
                structure=jitter,
                color=jitter,
                tfidf={int(i): float(v) for i, v in enumerate(jitter)},
                embedding=jitter,
            )
        )
    return bundles


class TestEvaluateProject:
    def test_two_report_mutual_duplicates_all_ones(self):
        project = make_project(["A", "A"])
        gt = ground_truth_from_labels(project.report_ids(), ["A", "A"])
        bundles = [make_bundle(), make_bundle()]
        report = evaluate_project(project, gt, bundles, Combiner.hierarchical(0.5))
        assert report.recall_at_1 == 1.0
        assert report.recall_at_5 == 1.0
        assert report.recall_at_10 == 1.0
        assert report.map == 1.0
        assert report.mrr == 1.0
        assert len(report.per_query) == 2

    def test_no_eligible_queries_rejected(self):
        project = make_project(["A", "B"])
        gt = ground_truth_from_labels(project.report_ids(), ["A", "B"])
        with pytest.raises(EvaluationError, match="eligible"):
            evaluate_project(
                project, gt, [make_bundle(), make_bundle()], Combiner.onlytext()
            )

    def test_singletons_stay_in_candidate_pool(self):
        labels = ["A", "A", "UNIQUE"]
        project = make_project(labels)
        gt = ground_truth_from_labels(project.report_ids(), labels)
        bundles = cluster_bundles(labels)
        prepared = PreparedProject(project, gt, bundles)
        rankings = prepared.rankings(Combiner.onlytext())
        assert len(rankings) == 2  # only the two A reports are queries
        for _, ids in rankings:
            assert len(ids) == 2  # but the UNIQUE report is still ranked

    def test_aggregates_are_means(self):
        labels = ["A", "A", "B", "B", "B"]
        project = make_project(labels)
        gt = ground_truth_from_labels(project.report_ids(), labels)
        report = evaluate_project(
            project, gt, cluster_bundles(labels, seed=4), Combiner.addcmb()
        )
        n = len(report.per_query)
        assert report.map == pytest.approx(sum(q.ap for q in report.per_query) / n)
        assert report.mrr == pytest.approx(sum(q.rr for q in report.per_query) / n)

    def test_per_query_monotone_recall(self):
        labels = ["A", "A", "B", "B", "C", "C", "C"]
        project = make_project(labels)
        gt = ground_truth_from_labels(project.report_ids(), labels)
        report = evaluate_project(
            project, gt, cluster_bundles(labels, seed=9), Combiner.onlytext()
        )
        for q in report.per_query:
            assert q.recall_at_1 <= q.recall_at_5 <= q.recall_at_10

    def test_matches_metric_functions_on_rankings(self):
        labels = ["A", "A", "B", "B", "B", "UNIQUE"]
        project = make_project(labels)
        gt = ground_truth_from_labels(project.report_ids(), labels)
        prepared = PreparedProject(project, gt, cluster_bundles(labels, seed=5))
        combiner = Combiner.hierarchical(0.3)
        report = prepared.evaluate(combiner)
        by_query = {q.query_id: q for q in report.per_query}
        for query_id, ids in prepared.rankings(combiner):
            q = by_query[query_id]
            assert q.recall_at_1 == recall_at_k(ids, gt[query_id], 1)
            assert q.ap == pytest.approx(average_precision(ids, gt[query_id]), abs=1e-12)
            assert q.rr == pytest.approx(reciprocal_rank(ids, gt[query_id]), abs=1e-12)


class TestThresholdGrid:
    def test_default_grid(self):
        grid = default_threshold_grid()
        assert len(grid) == 101
        assert grid[0] == 0.0
        assert grid[-1] == 1.0
        assert grid[94] == pytest.approx(0.94)

    def test_coarse_grid(self):
        assert default_threshold_grid(0.25) == (0.0, 0.25, 0.5, 0.75, 1.0)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            default_threshold_grid(0.0)


def planted_peak_project(project_id="P1"):
    """Cluster (q, d) + confusable c with a MAP plateau on thres in [0.46, 0.80).

    s_screenshot(q,d)=0.8, s_textual(q,d)=0.6; s_screenshot(q,c)=0.453,
    s_textual(q,c)=1.0. Below the plateau the confusable enters q's first
    class and outranks d textually; at 0.80 and above everything is second
    class and the confusable's higher total wins again. 0.453 sits strictly
    between grid points so float noise cannot flip the strict > filter.
    """
    labels = ["A", "A", "UNIQUE"]
    project = make_project(labels, project_id=project_id)
    gt = ground_truth_from_labels(project.report_ids(), labels)
    low = 0.453
    q = make_bundle(structure=(1, 0), color=(1, 0), tfidf={0: 1.0}, embedding=(1, 0))
    d = make_bundle(
        structure=(0.8, 0.6),
        color=(0.8, 0.6),
        tfidf={0: 0.6, 1: 0.8},
        embedding=(0.6, 0.8),
    )
    c = make_bundle(
        structure=(low, math.sqrt(1 - low * low)),
        color=(low, math.sqrt(1 - low * low)),
        tfidf={0: 1.0},
        embedding=(1, 0),
    )
    return PreparedProject(project, gt, [q, d, c])


class TestTuneThreshold:
    def test_planted_plateau_recovered_at_smallest_maximizer(self):
        prepared = planted_peak_project()
        result = tune_threshold([prepared])
        assert result.thres == pytest.approx(0.46)
        assert result.training_map == pytest.approx(1.0)

    def test_grid_curve_shape(self):
        prepared = planted_peak_project()
        result = tune_threshold([prepared], grid=[0.0, 0.3, 0.6, 0.9])
        curve = dict(result.grid)
        assert curve[0.0] < 1.0
        assert curve[0.6] == pytest.approx(1.0)
        assert curve[0.9] < 1.0

    def test_flat_curve_ties_to_zero(self):
        labels = ["A", "A", "A"]
        project = make_project(labels)
        gt = ground_truth_from_labels(project.report_ids(), labels)
        bundles = [make_bundle(), make_bundle(), make_bundle()]  # identical
        result = tune_threshold([PreparedProject(project, gt, bundles)])
        curve_values = {m for _, m in result.grid}
        assert len(curve_values) == 1
        assert result.thres == 0.0

    def test_empty_training_rejected(self):
        with pytest.raises(EvaluationError):
            tune_threshold([])

    def test_exhaustive_grid_oracle_agreement(self):
        prepared = [planted_peak_project("P1"), planted_peak_project("P2")]
        grid = default_threshold_grid(0.05)
        result = tune_threshold(prepared, grid=grid)
        best_thres, best_map = None, -1.0
        for thres in grid:
            mean_map = sum(
                p.evaluate(Combiner.hierarchical(thres)).map for p in prepared
            ) / len(prepared)
            if mean_map > best_map:
                best_thres, best_map = thres, mean_map
        assert result.thres == best_thres
        assert result.training_map == pytest.approx(best_map)


class CountingGroundTruth(GroundTruth):
    """Access-auditing double: counts every duplicate-set lookup."""

    def __init__(self, inner: GroundTruth):
        super().__init__(dict(inner))
        self.lookups = 0

    def __getitem__(self, report_id):
        self.lookups += 1
        return super().__getitem__(report_id)


def spied_project(project_id):
    labels = ["A", "A", "B", "B"]
    project = make_project(labels, project_id=project_id)
    spy = CountingGroundTruth(
        ground_truth_from_labels(project.report_ids(), labels)
    )
    prepared = PreparedProject(project, spy, cluster_bundles(labels, seed=7))
    return prepared, spy


class TestLeaveOneOut:
    def test_needs_two_projects(self):
        prepared, _ = spied_project("P1")
        with pytest.raises(EvaluationError):
            leave_one_out([prepared])

    def test_holdout_labels_untouched_during_tuning(self, monkeypatch):
        items = [spied_project(f"P{i}") for i in range(3)]
        prepared = [p for p, _ in items]
        spies = {p.project_id: spy for p, spy in items}

        original = evaluation.tune_threshold
        audited = []

        def audited_tune(training, grid=None, holdout_project_id=None):
            before = spies[holdout_project_id].lookups
            result = original(
                training, grid=grid, holdout_project_id=holdout_project_id
            )
            after = spies[holdout_project_id].lookups
            audited.append((holdout_project_id, before, after))
            return result

        monkeypatch.setattr(evaluation, "tune_threshold", audited_tune)
        outcomes = leave_one_out(prepared, grid=[0.0, 0.5, 1.0])
        assert len(audited) == 3
        for holdout_id, before, after in audited:
            assert after == before, f"{holdout_id} labels read during tuning"
        # the final evaluation does read every project's labels
        for spy in spies.values():
            assert spy.lookups > 0
        assert [o.tuning.holdout_project_id for o in outcomes] == ["P0", "P1", "P2"]

    def test_outcome_metrics_use_tuned_threshold(self):
        prepared = [planted_peak_project(f"P{i}") for i in range(2)]
        outcomes = leave_one_out(prepared, grid=default_threshold_grid(0.1))
        for outcome in outcomes:
            assert outcome.tuning.thres == pytest.approx(0.5)
            assert outcome.holdout_metrics.map == pytest.approx(1.0)
