"""Ranking metrics, significance testing, and threshold tuning.

Eligible evaluation queries are reports with at least one ground-truth
duplicate; each is ranked against the rest of its project and scored with
recall@{1,5,10}, average precision, and reciprocal rank. Aggregates are
unweighted means over queries.

The one-tailed Mann-Whitney U test (alternative: the second sample is
stochastically smaller than the first) uses exact enumeration of group
assignments for combined sample sizes up to 12 and a tie-corrected,
continuity-corrected normal approximation above that. Cliff's delta is
interpreted through the |delta| bands 0.147 / 0.33 / 0.474.

Threshold tuning sweeps a grid, picks the threshold with the largest mean
MAP over the training projects (smallest threshold on ties), and the
leave-one-out driver repeats that with each project held out.
"""

from __future__ import annotations

import math
from collections.abc import Sequence, Set
from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .corpus import GroundTruth, Project
from .errors import EvaluationError
from .ranker import Combiner, QueryResult, order_candidates
from .similarity import FULL_MASK, FeatureBundle, FeatureMask, compute_project_scores

EXACT_TEST_MAX_N = 12
DEFAULT_GRID_STEP = 0.01

CLIFFS_NEGLIGIBLE = 0.147
CLIFFS_SMALL = 0.33
CLIFFS_MEDIUM = 0.474


def _ranked_ids(result: QueryResult | Sequence[str]) -> list[str]:
    if isinstance(result, QueryResult):
        return [e.report_id for e in result.entries]
    return list(result)


def _require_gt(gt: Set[str]) -> None:
    if not gt:
        raise EvaluationError("query has no ground-truth duplicates")


def recall_at_k(result: QueryResult | Sequence[str], gt: Set[str], k: int) -> int:
    """1 iff at least one ground-truth duplicate appears in the top k."""
    _require_gt(gt)
    if k < 1:
        raise EvaluationError("k must be >= 1")
    ids = _ranked_ids(result)
    return int(any(rid in gt for rid in ids[:k]))


def average_precision(result: QueryResult | Sequence[str], gt: Set[str]) -> float:
    """Mean of precision at each relevant rank, normalized by |gt|."""
    _require_gt(gt)
    ids = _ranked_ids(result)
    hits = 0
    total = 0.0
    for rank, rid in enumerate(ids, start=1):
        if rid in gt:
            hits += 1
            total += hits / rank
    return total / len(gt)


def reciprocal_rank(result: QueryResult | Sequence[str], gt: Set[str]) -> float:
    """1 / rank of the first ground-truth duplicate; 0 when none is retrieved."""
    _require_gt(gt)
    for rank, rid in enumerate(_ranked_ids(result), start=1):
        if rid in gt:
            return 1.0 / rank
    return 0.0


@dataclass(frozen=True)
class QueryEval:
    query_id: str
    recall_at_1: int
    recall_at_5: int
    recall_at_10: int
    ap: float
    rr: float


@dataclass(frozen=True)
class MetricsReport:
    project_id: str
    method: str
    per_query: tuple[QueryEval, ...]
    recall_at_1: float
    recall_at_5: float
    recall_at_10: float
    map: float
    mrr: float

    @classmethod
    def from_query_evals(
        cls, project_id: str, method: str, per_query: Sequence[QueryEval]
    ) -> "MetricsReport":
        if not per_query:
            raise EvaluationError(f"project {project_id!r} has no eligible queries")
        n = len(per_query)
        return cls(
            project_id=project_id,
            method=method,
            per_query=tuple(per_query),
            recall_at_1=sum(q.recall_at_1 for q in per_query) / n,
            recall_at_5=sum(q.recall_at_5 for q in per_query) / n,
            recall_at_10=sum(q.recall_at_10 for q in per_query) / n,
            map=sum(q.ap for q in per_query) / n,
            mrr=sum(q.rr for q in per_query) / n,
        )

    def per_query_values(self, metric: str) -> list[float]:
        return [float(getattr(q, metric)) for q in self.per_query]


METRIC_FIELDS = ("recall_at_1", "recall_at_5", "recall_at_10", "ap", "rr")
AGGREGATE_FIELDS = ("recall_at_1", "recall_at_5", "recall_at_10", "map", "mrr")


class PreparedProject:
    """Cached all-pairs scores for one project under one mask.

    Building the score matrices once lets the threshold grid sweep re-rank
    cheaply. Ground truth is consulted lazily, only when a ranking is
    actually scored, so tuning drivers provably never touch the labels of a
    project they do not evaluate.
    """

    def __init__(
        self,
        project: Project,
        gt: GroundTruth,
        bundles: Sequence[FeatureBundle],
        mask: FeatureMask = FULL_MASK,
    ):
        self._init(project.project_id, project.report_ids(), gt, bundles, mask)

    @classmethod
    def from_ids(
        cls,
        project_id: str,
        report_ids: Sequence[str],
        gt: GroundTruth,
        bundles: Sequence[FeatureBundle],
        mask: FeatureMask = FULL_MASK,
    ) -> "PreparedProject":
        obj = cls.__new__(cls)
        obj._init(project_id, list(report_ids), gt, bundles, mask)
        return obj

    def _init(
        self,
        project_id: str,
        ids: list[str],
        gt: GroundTruth,
        bundles: Sequence[FeatureBundle],
        mask: FeatureMask,
    ) -> None:
        if len(bundles) != len(ids):
            raise EvaluationError(
                f"project {project_id!r}: {len(ids)} reports but "
                f"{len(bundles)} feature bundles"
            )
        self.project_id = project_id
        self.ids = ids
        self.mask = mask
        self.scores = compute_project_scores(bundles, mask)
        self._gt = gt
        self._gt_positions_cache: list[tuple[int, np.ndarray]] | None = None

    def _gt_positions(self) -> list[tuple[int, np.ndarray]]:
        if self._gt_positions_cache is None:
            pos_of = {rid: i for i, rid in enumerate(self.ids)}
            positions = []
            for rid in self.ids:
                dup = self._gt[rid]
                if dup:
                    gt_pos = np.array(sorted(pos_of[d] for d in dup), dtype=np.int64)
                    positions.append((pos_of[rid], gt_pos))
            self._gt_positions_cache = positions
        return self._gt_positions_cache

    @property
    def n_eligible(self) -> int:
        return len(self._gt_positions())

    def rankings(self, combiner: Combiner) -> list[tuple[str, list[str]]]:
        """The full ranked candidate id list per eligible query."""
        n = len(self.ids)
        all_positions = np.arange(n, dtype=np.int64)
        out = []
        for q_pos, _ in self._gt_positions():
            candidates = all_positions[all_positions != q_pos]
            ordered, _tags = order_candidates(
                candidates,
                self.scores.s_screenshot[q_pos],
                self.scores.s_textual[q_pos],
                self.scores.s_total[q_pos],
                combiner,
            )
            out.append((self.ids[q_pos], [self.ids[p] for p in ordered.tolist()]))
        return out

    def evaluate(self, combiner: Combiner, method: str | None = None) -> MetricsReport:
        if not self._gt_positions():
            raise EvaluationError(
                f"project {self.project_id!r} has no eligible queries"
            )
        n = len(self.ids)
        all_positions = np.arange(n, dtype=np.int64)
        per_query: list[QueryEval] = []
        for q_pos, gt_pos in self._gt_positions():
            candidates = all_positions[all_positions != q_pos]
            ordered, _ = order_candidates(
                candidates,
                self.scores.s_screenshot[q_pos],
                self.scores.s_textual[q_pos],
                self.scores.s_total[q_pos],
                combiner,
            )
            inv = np.empty(n, dtype=np.int64)
            inv[ordered] = np.arange(1, len(ordered) + 1)
            gt_ranks = np.sort(inv[gt_pos])
            first = int(gt_ranks[0])
            ap = float(
                (np.arange(1, len(gt_ranks) + 1) / gt_ranks).sum() / len(gt_ranks)
            )
            per_query.append(
                QueryEval(
                    query_id=self.ids[q_pos],
                    recall_at_1=int(first <= 1),
                    recall_at_5=int(first <= 5),
                    recall_at_10=int(first <= 10),
                    ap=ap,
                    rr=1.0 / first,
                )
            )
        return MetricsReport.from_query_evals(
            self.project_id, method or combiner.label(), per_query
        )


def evaluate_project(
    project: Project,
    gt: GroundTruth,
    bundles: Sequence[FeatureBundle],
    combiner: Combiner,
    mask: FeatureMask = FULL_MASK,
    method: str | None = None,
) -> MetricsReport:
    return PreparedProject(project, gt, bundles, mask).evaluate(combiner, method)


def improvement(ours: float, baseline: float) -> float:
    """(ours - baseline) / baseline; requires a strictly positive baseline."""
    if baseline <= 0:
        raise EvaluationError("improvement needs a strictly positive baseline")
    return (ours - baseline) / baseline


class MannWhitneyResult(NamedTuple):
    u_statistic: float
    p_value: float
    method: str


def _u_statistic(xs: np.ndarray, ys: np.ndarray) -> float:
    gt = (xs[:, None] > ys[None, :]).sum()
    eq = (xs[:, None] == ys[None, :]).sum()
    return float(gt) + 0.5 * float(eq)


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled), dtype=np.float64)
    sorted_vals = pooled[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _validated_samples(
    xs: Sequence[float], ys: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(list(xs), dtype=np.float64)
    ys = np.asarray(list(ys), dtype=np.float64)
    if xs.size == 0 or ys.size == 0:
        raise EvaluationError("both samples must be non-empty")
    return xs, ys


def mann_whitney_exact(xs: Sequence[float], ys: Sequence[float]) -> MannWhitneyResult:
    """Exact one-tailed p by enumerating all group assignments of the pool."""
    xs, ys = _validated_samples(xs, ys)
    n_x = xs.size
    u_obs = _u_statistic(xs, ys)
    pooled = np.concatenate([xs, ys])
    ranks = _midranks(pooled)
    offset = n_x * (n_x + 1) / 2.0
    total = 0
    at_least = 0
    for subset in combinations(range(pooled.size), n_x):
        total += 1
        u = ranks[list(subset)].sum() - offset
        if u >= u_obs - 1e-12:
            at_least += 1
    return MannWhitneyResult(u_obs, at_least / total, "exact")


def mann_whitney_normal(xs: Sequence[float], ys: Sequence[float]) -> MannWhitneyResult:
    """Tie-corrected normal approximation with continuity correction."""
    xs, ys = _validated_samples(xs, ys)
    n_x, n_y = xs.size, ys.size
    u_obs = _u_statistic(xs, ys)
    pooled = np.concatenate([xs, ys])
    n = pooled.size
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float((counts.astype(np.float64) ** 3 - counts).sum())
    sigma_sq = n_x * n_y / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if sigma_sq <= 0.0:
        return MannWhitneyResult(u_obs, 1.0, "normal")
    z = (u_obs - n_x * n_y / 2.0 - 0.5) / math.sqrt(sigma_sq)
    p = 0.5 * math.erfc(z / math.sqrt(2.0))
    return MannWhitneyResult(u_obs, min(1.0, max(p, 0.0)), "normal")


def mann_whitney_one_tailed(
    xs: Sequence[float], ys: Sequence[float]
) -> MannWhitneyResult:
    """Test whether ys is stochastically smaller than xs.

    Returns the U statistic of xs (pairwise wins plus half-ties) and the
    one-tailed p-value: exact by enumeration when len(xs)+len(ys) <= 12,
    otherwise the tie-corrected normal approximation with continuity
    correction.
    """
    xs, ys = _validated_samples(xs, ys)
    if xs.size + ys.size <= EXACT_TEST_MAX_N:
        return mann_whitney_exact(xs, ys)
    return mann_whitney_normal(xs, ys)


def bonferroni(p_values: Sequence[float], m: int) -> list[float]:
    """Multiply each p by the test count m and clamp at 1."""
    if m < len(p_values):
        raise ValueError(f"m={m} is smaller than the number of p-values ({len(p_values)})")
    return [min(1.0, p * m) for p in p_values]


def interpret_cliffs_delta(delta: float) -> str:
    a = abs(delta)
    if a < CLIFFS_NEGLIGIBLE:
        return "negligible"
    if a < CLIFFS_SMALL:
        return "small"
    if a < CLIFFS_MEDIUM:
        return "medium"
    return "large"


def cliffs_delta(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, str]:
    """Pairwise dominance effect size in [-1, 1] plus its interpretation band."""
    xs = np.asarray(list(xs), dtype=np.float64)
    ys = np.asarray(list(ys), dtype=np.float64)
    if xs.size == 0 or ys.size == 0:
        raise EvaluationError("both samples must be non-empty")
    gt = int((xs[:, None] > ys[None, :]).sum())
    lt = int((xs[:, None] < ys[None, :]).sum())
    delta = (gt - lt) / (xs.size * ys.size)
    return delta, interpret_cliffs_delta(delta)


@dataclass(frozen=True)
class StatTestResult:
    u_statistic: float
    p_value: float
    p_adjusted: float
    cliffs_delta: float
    interpretation: str


def default_threshold_grid(step: float = DEFAULT_GRID_STEP) -> tuple[float, ...]:
    if not 0.0 < step <= 1.0:
        raise ValueError("grid step must lie in (0, 1]")
    n_steps = int(round(1.0 / step))
    values = [round(i * step, 12) for i in range(n_steps + 1)]
    return tuple(v for v in values if v <= 1.0 + 1e-12)


@dataclass(frozen=True)
class TuningResult:
    holdout_project_id: str | None
    thres: float
    training_map: float
    grid: tuple[tuple[float, float], ...]


def tune_threshold(
    training: Sequence[PreparedProject],
    grid: Sequence[float] | None = None,
    holdout_project_id: str | None = None,
) -> TuningResult:
    """Pick the threshold maximizing mean MAP over the training projects.

    Ties resolve to the smallest threshold. Only the training projects are
    touched; the holdout id is carried through for reporting.
    """
    if not training:
        raise EvaluationError("threshold tuning needs at least one training project")
    grid = tuple(grid) if grid is not None else default_threshold_grid()
    curve: list[tuple[float, float]] = []
    best_thres: float | None = None
    best_map = -1.0
    for thres in grid:
        combiner = Combiner.hierarchical(thres)
        mean_map = sum(p.evaluate(combiner).map for p in training) / len(training)
        curve.append((thres, mean_map))
        if mean_map > best_map:
            best_map = mean_map
            best_thres = thres
    assert best_thres is not None
    return TuningResult(
        holdout_project_id=holdout_project_id,
        thres=best_thres,
        training_map=best_map,
        grid=tuple(curve),
    )


@dataclass(frozen=True)
class LooOutcome:
    tuning: TuningResult
    holdout_metrics: MetricsReport


def leave_one_out(
    prepared: Sequence[PreparedProject],
    grid: Sequence[float] | None = None,
) -> list[LooOutcome]:
    """Tune on all-but-one project and evaluate the held-out one, per project."""
    if len(prepared) < 2:
        raise EvaluationError("leave-one-out needs at least two projects")
    outcomes = []
    for i, holdout in enumerate(prepared):
        training = [p for j, p in enumerate(prepared) if j != i]
        tuning = tune_threshold(
            training, grid=grid, holdout_project_id=holdout.project_id
        )
        metrics = holdout.evaluate(Combiner.hierarchical(tuning.thres), method="setu")
        outcomes.append(LooOutcome(tuning=tuning, holdout_metrics=metrics))
    return outcomes
