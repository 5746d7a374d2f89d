"""Hierarchical duplicate ranking plus the alternative combiners.

The hierarchical combiner partitions the pending reports of the query's
project by screenshot similarity: candidates strictly above the threshold
form the first class (sorted by textual similarity), the rest form the
second class (sorted by total similarity, placed after the first class).
``textfirst`` swaps the roles of the two modalities for the first class;
``addcmb``/``multiplycmb`` rank one flat list by the sum/product of the two
group scores; ``onlytext``/``onlyimage`` rank by a single group score.

Ties are always broken by canonical report order (ingestion order), which
makes every ranking deterministic.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .similarity import FULL_MASK, FeatureBundle, FeatureMask, SimilarityScores, score_pair

COMBINER_KINDS = (
    "hierarchical",
    "addcmb",
    "multiplycmb",
    "textfirst",
    "onlytext",
    "onlyimage",
)
_NEEDS_THRESHOLD = ("hierarchical", "textfirst")

CLASS_FIRST = "first"
CLASS_SECOND = "second"
CLASS_UNCLASSED = "unclassed"


@dataclass(frozen=True)
class Combiner:
    """A ranking strategy; ``thres`` is set exactly for the two-class kinds."""

    kind: str
    thres: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in COMBINER_KINDS:
            raise ConfigurationError(
                f"unknown combiner {self.kind!r}; expected one of {COMBINER_KINDS}"
            )
        if self.kind in _NEEDS_THRESHOLD:
            if self.thres is None:
                raise ConfigurationError(f"combiner {self.kind!r} requires a threshold")
            if not 0.0 <= self.thres <= 1.0:
                raise ConfigurationError("threshold must lie in [0, 1]")
        elif self.thres is not None:
            raise ConfigurationError(f"combiner {self.kind!r} takes no threshold")

    @classmethod
    def hierarchical(cls, thres: float) -> "Combiner":
        return cls("hierarchical", thres)

    @classmethod
    def textfirst(cls, thres: float) -> "Combiner":
        return cls("textfirst", thres)

    @classmethod
    def addcmb(cls) -> "Combiner":
        return cls("addcmb")

    @classmethod
    def multiplycmb(cls) -> "Combiner":
        return cls("multiplycmb")

    @classmethod
    def onlytext(cls) -> "Combiner":
        return cls("onlytext")

    @classmethod
    def onlyimage(cls) -> "Combiner":
        return cls("onlyimage")

    def label(self) -> str:
        if self.thres is not None:
            return f"{self.kind}:{self.thres:g}"
        return self.kind


@dataclass(frozen=True)
class RankedEntry:
    report_id: str
    class_tag: str
    scores: SimilarityScores
    rank: int


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    entries: tuple[RankedEntry, ...]


def _check_mask(combiner: Combiner, mask: FeatureMask) -> None:
    needs_screenshot = combiner.kind != "onlytext"
    needs_textual = combiner.kind != "onlyimage"
    if needs_screenshot and mask.screenshot_members == 0:
        raise ConfigurationError(
            f"combiner {combiner.kind!r} needs screenshot similarity but the mask "
            "disables both screenshot features"
        )
    if needs_textual and mask.textual_members == 0:
        raise ConfigurationError(
            f"combiner {combiner.kind!r} needs textual similarity but the mask "
            "disables both textual features"
        )


def _descending(keys: np.ndarray, positions: np.ndarray) -> np.ndarray:
    # lexsort: primary key last; ties fall back to canonical position order.
    return positions[np.lexsort((positions, -keys))]


def order_candidates(
    candidates: np.ndarray,
    s_screenshot: np.ndarray,
    s_textual: np.ndarray,
    s_total: np.ndarray,
    combiner: Combiner,
) -> tuple[np.ndarray, np.ndarray]:
    """Order candidate positions under a combiner.

    ``candidates`` holds canonical positions; the three score arrays are
    indexed by position. Returns (ordered positions, parallel class tags).
    """
    kind = combiner.kind
    if kind == "hierarchical" or kind == "textfirst":
        filter_scores = s_screenshot if kind == "hierarchical" else s_textual
        first_key = s_textual if kind == "hierarchical" else s_screenshot
        in_first = filter_scores[candidates] > combiner.thres
        first = candidates[in_first]
        second = candidates[~in_first]
        first_sorted = _descending(first_key[first], first)
        second_sorted = _descending(s_total[second], second)
        ordered = np.concatenate([first_sorted, second_sorted])
        tags = np.array(
            [CLASS_FIRST] * len(first_sorted) + [CLASS_SECOND] * len(second_sorted),
            dtype=object,
        )
        return ordered, tags
    if kind == "addcmb":
        key = s_screenshot[candidates] + s_textual[candidates]
    elif kind == "multiplycmb":
        key = s_screenshot[candidates] * s_textual[candidates]
    elif kind == "onlytext":
        key = s_textual[candidates]
    else:  # onlyimage
        key = s_screenshot[candidates]
    ordered = candidates[np.lexsort((candidates, -key))]
    tags = np.array([CLASS_UNCLASSED] * len(ordered), dtype=object)
    return ordered, tags


def rank_duplicates(
    query_id: str,
    features: Mapping[str, FeatureBundle],
    combiner: Combiner,
    mask: FeatureMask = FULL_MASK,
) -> QueryResult:
    """Rank all other reports of the project as duplicate candidates.

    ``features`` maps report_id to FeatureBundle in canonical (ingestion)
    order; that order breaks ties. Raises KeyError when the query is absent
    and ConfigurationError when the mask disables a required group.
    """
    if query_id not in features:
        raise KeyError(f"query report {query_id!r} not present in project features")
    _check_mask(combiner, mask)

    ids = list(features.keys())
    query_bundle = features[query_id]
    candidate_positions = []
    scores: list[SimilarityScores] = []
    for pos, rid in enumerate(ids):
        if rid == query_id:
            continue
        candidate_positions.append(pos)
        scores.append(score_pair(query_bundle, features[rid], mask))

    if not candidate_positions:
        return QueryResult(query_id=query_id, entries=())

    n = len(ids)
    by_pos = dict(zip(candidate_positions, scores))
    s_scr = np.zeros(n)
    s_txt = np.zeros(n)
    s_tot = np.zeros(n)
    for pos, s in by_pos.items():
        s_scr[pos] = s.s_screenshot
        s_txt[pos] = s.s_textual
        s_tot[pos] = s.s_total

    ordered, tags = order_candidates(
        np.array(candidate_positions, dtype=np.int64), s_scr, s_txt, s_tot, combiner
    )
    entries = tuple(
        RankedEntry(
            report_id=ids[pos],
            class_tag=tag,
            scores=by_pos[pos],
            rank=rank,
        )
        for rank, (pos, tag) in enumerate(zip(ordered.tolist(), tags.tolist()), start=1)
    )
    return QueryResult(query_id=query_id, entries=entries)
