"""Text featurization: segmentation, normalization, TF-IDF, embedding average.

The default segmenter splits on Unicode whitespace and punctuation,
lowercases ASCII letters, and emits CJK ideographs as single-character
tokens; an optional lexicon of multi-character CJK words switches CJK runs
to greedy longest-match segmentation. Normalization removes stopwords,
applies a variant-to-canonical synonym map, then removes stopwords again in
case a canonical form is itself a stopword.

IDF is plain division (document count over document frequency, no
logarithm), so idf(t) >= 1 with equality exactly when t occurs everywhere.
The report embedding is the mean of in-vocabulary token vectors, counting
repeats; reports with no in-vocabulary token map to the zero vector.
"""

from __future__ import annotations

import unicodedata
import warnings
from collections import Counter
from collections.abc import Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ResourceFormatError

DEFAULT_EMBEDDING_DIM = 100

_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
    (0x2F800, 0x2FA1F),
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def _is_separator(ch: str) -> bool:
    return ch.isspace() or unicodedata.category(ch).startswith("P")


@dataclass(frozen=True)
class Segmenter:
    """Tokenizer config; ``lexicon`` lists multi-character CJK words."""

    lexicon: frozenset[str] = frozenset()

    @property
    def max_word_len(self) -> int:
        return max((len(w) for w in self.lexicon), default=1)

    def segment_cjk(self, run: str) -> list[str]:
        if not self.lexicon:
            return list(run)
        tokens: list[str] = []
        i = 0
        while i < len(run):
            match = run[i]
            for length in range(min(self.max_word_len, len(run) - i), 1, -1):
                candidate = run[i : i + length]
                if candidate in self.lexicon:
                    match = candidate
                    break
            tokens.append(match)
            i += len(match)
        return tokens

    def tokenize(self, text: str) -> list[str]:
        tokens: list[str] = []
        word: list[str] = []
        cjk_run: list[str] = []

        def flush_word() -> None:
            if word:
                tokens.append("".join(word))
                word.clear()

        def flush_cjk() -> None:
            if cjk_run:
                tokens.extend(self.segment_cjk("".join(cjk_run)))
                cjk_run.clear()

        for ch in text:
            if _is_separator(ch):
                flush_word()
                flush_cjk()
            elif _is_cjk(ch):
                flush_word()
                cjk_run.append(ch)
            else:
                flush_cjk()
                if "A" <= ch <= "Z":
                    ch = ch.lower()
                word.append(ch)
        flush_word()
        flush_cjk()
        return tokens


DEFAULT_SEGMENTER = Segmenter()


def tokenize(text: str, segmenter: Segmenter = DEFAULT_SEGMENTER) -> list[str]:
    return segmenter.tokenize(text)


def normalize(
    tokens: Iterable[str],
    stopwords: Collection[str] = frozenset(),
    synonyms: Mapping[str, str] | None = None,
) -> list[str]:
    """Drop stopwords, canonicalize synonyms, drop stopwords once more."""
    synonyms = synonyms or {}
    out = [t for t in tokens if t not in stopwords]
    out = [synonyms.get(t, t) for t in out]
    return [t for t in out if t not in stopwords]


def load_stopwords(path: str | Path) -> frozenset[str]:
    """One token per line; blank lines ignored."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            token = line.strip()
            if token:
                words.add(token)
    return frozenset(words)


def load_synonyms(path: str | Path) -> dict[str, str]:
    """Parse lines of ``canonical<TAB>variant1<TAB>variant2...``.

    Chains (a canonical form that is itself listed as a variant elsewhere)
    are resolved to their final canonical form; cycles are an error.
    """
    mapping: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            canonical = parts[0].strip()
            if not canonical:
                raise ResourceFormatError(f"{path}:{lineno}: empty canonical form")
            for variant in parts[1:]:
                variant = variant.strip()
                if not variant or variant == canonical:
                    continue
                if variant in mapping and mapping[variant] != canonical:
                    raise ResourceFormatError(
                        f"{path}:{lineno}: variant {variant!r} mapped to both "
                        f"{mapping[variant]!r} and {canonical!r}"
                    )
                mapping[variant] = canonical
    return resolve_synonym_chains(mapping, source=str(path))


def resolve_synonym_chains(mapping: Mapping[str, str], source: str = "<map>") -> dict[str, str]:
    """Follow variant -> canonical chains to a fixed point; reject cycles."""
    resolved: dict[str, str] = {}
    for variant in mapping:
        seen = {variant}
        target = mapping[variant]
        while target in mapping:
            if target in seen:
                raise ResourceFormatError(f"{source}: synonym cycle through {target!r}")
            seen.add(target)
            target = mapping[target]
        resolved[variant] = target
    return resolved


@dataclass(frozen=True)
class TfIdfModel:
    """Vocabulary with plain-division IDF over one project's reports."""

    vocabulary: dict[str, int]
    idf: np.ndarray
    n_documents: int

    def __post_init__(self) -> None:
        if len(self.vocabulary) != len(self.idf):
            raise ValueError("vocabulary and idf table sizes differ")


def build_tfidf_model(documents: Sequence[Sequence[str]]) -> TfIdfModel:
    """Build the vocabulary and IDF table; requires at least one document."""
    if len(documents) == 0:
        raise ValueError("cannot build a TF-IDF model from an empty document collection")
    n = len(documents)
    df: Counter[str] = Counter()
    for doc in documents:
        df.update(set(doc))
    vocabulary = {term: idx for idx, term in enumerate(sorted(df))}
    idf = np.empty(len(vocabulary), dtype=np.float64)
    for term, idx in vocabulary.items():
        idf[idx] = n / df[term]
    return TfIdfModel(vocabulary=vocabulary, idf=idf, n_documents=n)


def tfidf_vector(tokens: Iterable[str], model: TfIdfModel) -> dict[int, float]:
    """Sparse weights: raw term frequency times IDF; OOV tokens are ignored."""
    counts: Counter[str] = Counter(tokens)
    vec: dict[int, float] = {}
    for term, tf in counts.items():
        idx = model.vocabulary.get(term)
        if idx is not None:
            vec[idx] = tf * float(model.idf[idx])
    return vec


@dataclass(frozen=True)
class EmbeddingTable:
    """Word vectors of uniform dimension."""

    vectors: dict[str, np.ndarray]
    dim: int = field(default=DEFAULT_EMBEDDING_DIM)

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def get(self, word: str) -> np.ndarray | None:
        return self.vectors.get(word)


def load_embeddings(path: str | Path) -> EmbeddingTable:
    """Load a text embedding file: ``word v1 v2 ... vd`` per line.

    An optional first line ``word_count d`` (two integer fields) is accepted
    as a header. Duplicate words keep the last occurrence with a warning;
    inconsistent dimensions or non-numeric fields raise ResourceFormatError.
    """
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and _both_ints(parts):
                declared = int(parts[1])
                if declared < 1:
                    raise ResourceFormatError(f"{path}:1: declared dimension must be >= 1")
                dim = declared
                continue
            word = parts[0]
            try:
                values = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ResourceFormatError(
                    f"{path}:{lineno}: non-numeric embedding value"
                ) from None
            if values.size == 0:
                raise ResourceFormatError(f"{path}:{lineno}: no embedding values")
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise ResourceFormatError(
                    f"{path}:{lineno}: expected {dim} values, got {values.size}"
                )
            if word in vectors:
                warnings.warn(
                    f"{path}:{lineno}: duplicate embedding for {word!r}; keeping the last",
                    stacklevel=2,
                )
            vectors[word] = values
    if dim is None:
        raise ResourceFormatError(f"{path}: embedding file contains no vectors")
    return EmbeddingTable(vectors=vectors, dim=dim)


def write_embeddings(path: str | Path, table: EmbeddingTable) -> None:
    """Write the text format read by load_embeddings, with a header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.vectors)} {table.dim}\n")
        for word in sorted(table.vectors):
            values = " ".join(repr(float(v)) for v in table.vectors[word])
            fh.write(f"{word} {values}\n")


def embed_report(tokens: Iterable[str], table: EmbeddingTable) -> np.ndarray:
    """Mean of in-vocabulary token vectors (repeats counted each occurrence)."""
    total = np.zeros(table.dim, dtype=np.float64)
    n = 0
    for token in tokens:
        vec = table.vectors.get(token)
        if vec is not None:
            total += vec
            n += 1
    if n == 0:
        return total
    return total / n


def _both_ints(parts: list[str]) -> bool:
    try:
        int(parts[0])
        int(parts[1])
    except ValueError:
        return False
    return True
