"""Per-feature cosine similarities and their fused group scores.

Every pair of reports yields seven scalars: the four per-feature cosines,
the screenshot score (mean of structure and color cosines), the textual
score (mean of TF-IDF and embedding cosines), and the total score (mean of
the two group scores). Ablation masks drop a feature from its group mean;
group means re-normalize over the enabled members so scores stay in [0, 1].

Cosine against a zero-norm vector is 0, and the embedding cosine (the only
one that can go negative) is clamped to [0, 1].
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import images

# Above this many dense cells the TF-IDF cosine matrix falls back to
# pairwise sparse dot products instead of materializing a dense matrix.
_DENSE_TFIDF_LIMIT = 50_000_000


@dataclass(frozen=True)
class FeatureMask:
    """Which of the four features participate in scoring."""

    use_structure: bool = True
    use_color: bool = True
    use_tfidf: bool = True
    use_embedding: bool = True

    @classmethod
    def from_name(cls, name: str) -> "FeatureMask":
        try:
            return _MASKS[name.lower()]
        except KeyError:
            raise ValueError(
                f"unknown mask {name!r}; expected one of {sorted(_MASKS)}"
            ) from None

    @property
    def screenshot_members(self) -> int:
        return int(self.use_structure) + int(self.use_color)

    @property
    def textual_members(self) -> int:
        return int(self.use_tfidf) + int(self.use_embedding)


_MASKS = {
    "full": FeatureMask(),
    "notf": FeatureMask(use_tfidf=False),
    "noemb": FeatureMask(use_embedding=False),
    "noclr": FeatureMask(use_color=False),
    "nostrc": FeatureMask(use_structure=False),
}

FULL_MASK = _MASKS["full"]


@dataclass(frozen=True)
class SimilarityScores:
    s_structure: float
    s_color: float
    s_tfidf: float
    s_embedding: float
    s_screenshot: float
    s_textual: float
    s_total: float


@dataclass(frozen=True)
class FeatureBundle:
    """The four per-report vectors; blanks fill in for missing screenshots."""

    structure: np.ndarray
    color: np.ndarray
    tfidf: dict[int, float]
    embedding: np.ndarray

    def __post_init__(self) -> None:
        if self.structure.shape != (images.STRUCTURE_DIM,):
            raise ValueError(
                f"structure vector must have {images.STRUCTURE_DIM} dimensions"
            )
        if self.color.shape != (images.COLOR_DIM,):
            raise ValueError(f"color vector must have {images.COLOR_DIM} dimensions")
        if self.embedding.ndim != 1:
            raise ValueError("embedding must be a 1-d vector")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a||b|); 0 when either norm is 0; error on dimension mismatch."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def sparse_cosine(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    """Cosine between sparse index->weight mappings (indices align the axes)."""
    if not a or not b:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    dot = 0.0
    for idx, wa in a.items():
        wb = b.get(idx)
        if wb is not None:
            dot += wa * wb
    na = np.sqrt(sum(w * w for w in a.values()))
    nb = np.sqrt(sum(w * w for w in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(dot / (na * nb))


def _group_mean(values: list[float]) -> float:
    if not values:
        return 0.0
    return sum(values) / len(values)


def score_pair(
    a: FeatureBundle, b: FeatureBundle, mask: FeatureMask = FULL_MASK
) -> SimilarityScores:
    """All seven similarity scalars for one report pair under a mask."""
    s_structure = cosine(a.structure, b.structure) if mask.use_structure else 0.0
    s_color = cosine(a.color, b.color) if mask.use_color else 0.0
    s_tfidf = sparse_cosine(a.tfidf, b.tfidf) if mask.use_tfidf else 0.0
    s_embedding = (
        max(0.0, cosine(a.embedding, b.embedding)) if mask.use_embedding else 0.0
    )

    screenshot_parts = []
    if mask.use_structure:
        screenshot_parts.append(s_structure)
    if mask.use_color:
        screenshot_parts.append(s_color)
    textual_parts = []
    if mask.use_tfidf:
        textual_parts.append(s_tfidf)
    if mask.use_embedding:
        textual_parts.append(s_embedding)

    s_screenshot = _group_mean(screenshot_parts)
    s_textual = _group_mean(textual_parts)
    return SimilarityScores(
        s_structure=s_structure,
        s_color=s_color,
        s_tfidf=s_tfidf,
        s_embedding=s_embedding,
        s_screenshot=s_screenshot,
        s_textual=s_textual,
        s_total=(s_screenshot + s_textual) / 2.0,
    )


@dataclass(frozen=True)
class ProjectScores:
    """Symmetric n x n similarity matrices for one project's reports."""

    s_structure: np.ndarray
    s_color: np.ndarray
    s_tfidf: np.ndarray
    s_embedding: np.ndarray
    s_screenshot: np.ndarray
    s_textual: np.ndarray
    s_total: np.ndarray

    def pair(self, i: int, j: int) -> SimilarityScores:
        return SimilarityScores(
            s_structure=float(self.s_structure[i, j]),
            s_color=float(self.s_color[i, j]),
            s_tfidf=float(self.s_tfidf[i, j]),
            s_embedding=float(self.s_embedding[i, j]),
            s_screenshot=float(self.s_screenshot[i, j]),
            s_textual=float(self.s_textual[i, j]),
            s_total=float(self.s_total[i, j]),
        )


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.sqrt((matrix * matrix).sum(axis=1))
    safe = np.where(norms == 0.0, 1.0, norms)
    return matrix / safe[:, None]


def _nonneg_cosine_matrix(matrix: np.ndarray) -> np.ndarray:
    # For componentwise non-negative features cosines are >= 0 already;
    # the clip only absorbs float overshoot above 1.
    unit = _unit_rows(matrix)
    sims = unit @ unit.T
    sims = (sims + sims.T) * 0.5
    return np.clip(sims, 0.0, 1.0)


def _tfidf_matrix(bundles: Sequence[FeatureBundle]) -> np.ndarray:
    n = len(bundles)
    max_idx = -1
    for b in bundles:
        if b.tfidf:
            max_idx = max(max_idx, max(b.tfidf))
    vocab_size = max_idx + 1
    if vocab_size and n * vocab_size <= _DENSE_TFIDF_LIMIT:
        dense = np.zeros((n, vocab_size), dtype=np.float64)
        for row, b in enumerate(bundles):
            for idx, w in b.tfidf.items():
                dense[row, idx] = w
        return _nonneg_cosine_matrix(dense)
    sims = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        sims[i, i] = 1.0 if bundles[i].tfidf else 0.0
        for j in range(i + 1, n):
            s = sparse_cosine(bundles[i].tfidf, bundles[j].tfidf)
            sims[i, j] = s
            sims[j, i] = s
    return sims


def compute_project_scores(
    bundles: Sequence[FeatureBundle], mask: FeatureMask = FULL_MASK
) -> ProjectScores:
    """Vectorized all-pairs scores; agrees with score_pair up to float noise."""
    n = len(bundles)
    zeros = np.zeros((n, n), dtype=np.float64)

    if mask.use_structure:
        s_structure = _nonneg_cosine_matrix(
            np.stack([b.structure for b in bundles]) if n else zeros
        )
    else:
        s_structure = zeros
    if mask.use_color:
        s_color = _nonneg_cosine_matrix(
            np.stack([b.color for b in bundles]) if n else zeros
        )
    else:
        s_color = zeros
    s_tfidf = _tfidf_matrix(bundles) if mask.use_tfidf and n else zeros
    if mask.use_embedding and n:
        unit = _unit_rows(np.stack([b.embedding for b in bundles]))
        sims = unit @ unit.T
        s_embedding = np.clip((sims + sims.T) * 0.5, 0.0, 1.0)
    else:
        s_embedding = zeros

    scr_parts = ([s_structure] if mask.use_structure else []) + (
        [s_color] if mask.use_color else []
    )
    txt_parts = ([s_tfidf] if mask.use_tfidf else []) + (
        [s_embedding] if mask.use_embedding else []
    )
    s_screenshot = sum(scr_parts) / len(scr_parts) if scr_parts else zeros
    s_textual = sum(txt_parts) / len(txt_parts) if txt_parts else zeros
    return ProjectScores(
        s_structure=s_structure,
        s_color=s_color,
        s_tfidf=s_tfidf,
        s_embedding=s_embedding,
        s_screenshot=s_screenshot,
        s_textual=s_textual,
        s_total=(s_screenshot + s_textual) / 2.0,
    )
