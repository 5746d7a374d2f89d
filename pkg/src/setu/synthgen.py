"""Seeded synthetic report corpora with controllable duplicate structure.

Reports are grouped into labeled clusters. Each cluster owns a token pool
and a rendered UI layout; a report's text mixes cluster-pool tokens,
globally shared tokens, and report-unique tokens according to the overlap
rates, and its screenshot reuses the cluster layout with per-report pixel
noise. Two kinds of confusable reports can be planted next to an anchor
report that has true duplicates:

* pattern 1: identical token multiset, different layout, different label
  (text alone ranks it above the true duplicates);
* pattern 2: identical screenshot pixels, disjoint tokens, different label
  (screenshots alone rank it above the true duplicates).

Generation is fully deterministic: the same spec and seed produce
byte-identical corpus files, images, and resource files. The generator
writes exactly the corpus format the loader reads, plus the stopword,
synonym, and embedding resource files the featurizer consumes.
"""

from __future__ import annotations

import colorsys
import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import DEFAULT_SINGLETON_LABEL, Project, Report, Assessment
from .errors import GeneratorSpecError
from .text import EmbeddingTable, write_embeddings

_LAYOUT_SALT = 7130
_SIZES_STREAM = 1
_DECISIONS_STREAM = 2
_TEXT_STREAM = 3
_NOISE_STREAM = 4
_ASSESS_STREAM = 5
_EMB_SALT = 9205

_GOLDEN = 0.6180339887498949
_HUE_BINS = 16

FILLER_WORDS = ("filler0", "filler1", "filler2", "filler3", "filler4")


@dataclass(frozen=True)
class GeneratorSpec:
    """Knobs for one synthetic project."""

    seed: int
    n_clusters: int
    cluster_size_min: int = 2
    cluster_size_max: int = 4
    cluster_sizes: tuple[int, ...] | None = None
    vocab_size: int = 600
    intra_overlap: float = 0.7
    cross_overlap: float = 0.0
    screenshot_reuse: float = 1.0
    screenshot_coverage: float = 1.0
    n_pattern1: int = 0
    n_pattern2: int = 0
    n_singletons: int = 0
    tokens_per_report: int = 12
    embedding_dim: int = 16
    image_size: int = 160
    filler_rate: float = 0.0
    variant_rate: float = 0.0
    project_id: str = "SYNTH"

    def __post_init__(self) -> None:
        rates = {
            "intra_overlap": self.intra_overlap,
            "cross_overlap": self.cross_overlap,
            "screenshot_reuse": self.screenshot_reuse,
            "screenshot_coverage": self.screenshot_coverage,
            "filler_rate": self.filler_rate,
            "variant_rate": self.variant_rate,
        }
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                raise GeneratorSpecError(f"{name} must lie in [0, 1], got {value}")
        if self.seed < 0:
            raise GeneratorSpecError("seed must be >= 0")
        counts = {
            "n_clusters": self.n_clusters,
            "n_pattern1": self.n_pattern1,
            "n_pattern2": self.n_pattern2,
            "n_singletons": self.n_singletons,
        }
        for name, value in counts.items():
            if value < 0:
                raise GeneratorSpecError(f"{name} must be >= 0, got {value}")
        if self.n_clusters == 0 and self.n_singletons == 0:
            raise GeneratorSpecError("corpus would contain no reports")
        if self.tokens_per_report < 2:
            raise GeneratorSpecError("tokens_per_report must be >= 2")
        if self.image_size < 16:
            raise GeneratorSpecError("image_size must be >= 16")
        if self.embedding_dim < 1:
            raise GeneratorSpecError("embedding_dim must be >= 1")
        if self.cluster_sizes is None:
            if not 1 <= self.cluster_size_min <= self.cluster_size_max:
                raise GeneratorSpecError("cluster size range must satisfy 1 <= min <= max")
        elif len(self.cluster_sizes) != self.n_clusters:
            raise GeneratorSpecError(
                f"cluster_sizes lists {len(self.cluster_sizes)} sizes for "
                f"{self.n_clusters} clusters"
            )
        n_core, n_shared, n_unique = self.token_split()
        if n_core + n_shared > self.tokens_per_report:
            raise GeneratorSpecError(
                "intra_overlap + cross_overlap exceed the token budget per report"
            )
        if self.n_pattern1 > 0 and n_unique == 0:
            raise GeneratorSpecError(
                "pattern-1 confusables need report-unique tokens; lower "
                "intra_overlap/cross_overlap so the split leaves room"
            )
        if self.n_pattern1 + self.n_pattern2 > self.n_clusters:
            raise GeneratorSpecError(
                "not enough clusters to anchor the requested confusable pairs"
            )

    def token_split(self) -> tuple[int, int, int]:
        n_core = int(round(self.tokens_per_report * self.intra_overlap))
        n_shared = int(round(self.tokens_per_report * self.cross_overlap))
        n_unique = self.tokens_per_report - n_core - n_shared
        return n_core, n_shared, max(n_unique, 0)

    @classmethod
    def from_json(cls, raw: dict) -> "GeneratorSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise GeneratorSpecError(f"unknown spec keys: {sorted(unknown)}")
        if "cluster_sizes" in raw and raw["cluster_sizes"] is not None:
            raw = dict(raw, cluster_sizes=tuple(raw["cluster_sizes"]))
        try:
            return cls(**raw)
        except TypeError as exc:
            raise GeneratorSpecError(str(exc)) from None

    def to_json(self) -> dict:
        data = asdict(self)
        if data["cluster_sizes"] is not None:
            data["cluster_sizes"] = list(data["cluster_sizes"])
        return data


@dataclass(frozen=True)
class ConfusablePlant:
    pattern: int
    query_id: str
    confusable_id: str


@dataclass
class GeneratedCorpus:
    """A generated project plus everything needed to run the pipeline on it."""

    spec: GeneratorSpec
    project: Project
    images: dict[str, np.ndarray]
    layout_of: dict[str, int | None]
    confusables: tuple[ConfusablePlant, ...]
    stopwords: tuple[str, ...]
    synonyms: dict[str, str]
    used_words: tuple[str, ...]

    def embedding_table(self) -> EmbeddingTable:
        vectors = {
            w: word_vector(w, self.spec.embedding_dim) for w in self.used_words
        }
        return EmbeddingTable(vectors=vectors, dim=self.spec.embedding_dim)

    def write(self, out_dir: str | Path) -> Path:
        return write_corpora([self], out_dir)


def word_vector(word: str, dim: int) -> np.ndarray:
    """Unit embedding vector derived from the word itself (corpus-independent)."""
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "big")
    rng = np.random.default_rng([_EMB_SALT, seed])
    vec = rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)


def _hue_bin_center(h: float) -> float:
    return (math.floor((h % 1.0) * _HUE_BINS) + 0.5) / _HUE_BINS


def _hsv_u8(h: float, s: float, v: float) -> np.ndarray:
    r, g, b = colorsys.hsv_to_rgb(h % 1.0, s, v)
    return np.array([round(r * 255), round(g * 255), round(b * 255)], dtype=np.uint8)


def render_layout(layout_id: int, size: int = 160, noise_seed: int | None = 0) -> np.ndarray:
    """Render one synthetic UI layout: per-cell oriented stripes over a 4x4
    grid, a near-white status bar, and a layout-specific 3-hue palette.

    Renders of the same layout differ only by the +-1 pixel noise drawn from
    ``noise_seed``; pass None to skip the noise.
    """
    params = np.random.default_rng([_LAYOUT_SALT, layout_id])
    orientations = params.integers(0, 8, size=(4, 4))
    freqs = params.integers(3, 7, size=(4, 4))
    hue_choice = params.integers(0, 3, size=(4, 4))
    base_hue = (layout_id * _GOLDEN) % 1.0
    hues = [_hue_bin_center(base_hue + k / 3.0) for k in range(3)]

    img = np.zeros((size, size, 3), dtype=np.uint8)
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    bounds = [(i * size) // 4 for i in range(5)]
    for r in range(4):
        for c in range(4):
            y0, y1 = bounds[r], bounds[r + 1]
            x0, x1 = bounds[c], bounds[c + 1]
            hue = hues[int(hue_choice[r, c])]
            # Same hue, strongly different value: edges carry luma contrast
            # while the cell stays within one hue bin.
            bright = _hsv_u8(hue, 0.8, 0.92)
            dark = _hsv_u8(hue, 0.8, 0.38)
            theta = (float(orientations[r, c]) + 0.5) * math.pi / 8.0
            u = xs[y0:y1, x0:x1] * math.cos(theta) + ys[y0:y1, x0:x1] * math.sin(theta)
            period = max((y1 - y0), 1) / float(freqs[r, c])
            stripe = np.mod(u / period, 1.0) < 0.5
            cell = np.where(stripe[..., None], bright[None, None, :], dark[None, None, :])
            img[y0:y1, x0:x1] = cell
    bar = max(2, size // 16)
    img[:bar, :] = 246

    if noise_seed is not None:
        noise_rng = np.random.default_rng([_NOISE_STREAM, int(noise_seed)])
        noisy = img.astype(np.int16) + noise_rng.integers(-1, 2, size=img.shape)
        img = np.clip(noisy, 0, 255).astype(np.uint8)
    return img


@dataclass
class _DraftReport:
    report_id: str
    tokens: list[str]
    label: str
    layout_id: int | None
    noise_key: int | None
    copy_image_of: str | None = None


def _sample_tokens(
    rng: np.random.Generator,
    cluster_pool: list[str] | None,
    shared_pool: list[str],
    alloc: "_WordAllocator",
    spec: GeneratorSpec,
) -> list[str]:
    n_core, n_shared, n_unique = spec.token_split()
    tokens: list[str] = []
    if cluster_pool is not None and n_core > 0:
        if spec.intra_overlap >= 1.0:
            tokens.extend(cluster_pool[: spec.tokens_per_report])
        else:
            picks = rng.choice(len(cluster_pool), size=n_core, replace=False)
            tokens.extend(cluster_pool[i] for i in sorted(picks.tolist()))
    elif cluster_pool is None:
        # singleton: core share becomes extra unique tokens
        n_unique += n_core
    if n_shared > 0:
        picks = rng.choice(len(shared_pool), size=n_shared, replace=False)
        tokens.extend(shared_pool[i] for i in sorted(picks.tolist()))
    tokens.extend(alloc.take(n_unique))
    return tokens


class _WordAllocator:
    def __init__(self, vocab_size: int):
        self.words = [f"w{i:05d}" for i in range(vocab_size)]
        self.cursor = 0

    def take(self, n: int) -> list[str]:
        if self.cursor + n > len(self.words):
            raise GeneratorSpecError(
                f"vocabulary exhausted: needs more than {len(self.words)} words; "
                "increase vocab_size"
            )
        out = self.words[self.cursor : self.cursor + n]
        self.cursor += n
        return out


def _decorate(
    tokens: list[str],
    rng: np.random.Generator,
    spec: GeneratorSpec,
    synonyms: dict[str, str],
    used_fillers: set[str],
) -> list[str]:
    """Apply variant spellings and filler insertions to an emitted token list."""
    out: list[str] = []
    for tok in tokens:
        if spec.variant_rate > 0.0 and rng.random() < spec.variant_rate:
            variant = tok + "x"
            synonyms[variant] = tok
            out.append(variant)
        else:
            out.append(tok)
        if spec.filler_rate > 0.0 and rng.random() < spec.filler_rate:
            filler = FILLER_WORDS[int(rng.integers(0, len(FILLER_WORDS)))]
            used_fillers.add(filler)
            out.append(filler)
    return out


def generate_corpus(spec: GeneratorSpec) -> GeneratedCorpus:
    """Build the project, its screenshots, and the resource tables."""
    alloc = _WordAllocator(spec.vocab_size)
    n_core, n_shared, _ = spec.token_split()

    sizes_rng = np.random.default_rng([spec.seed, _SIZES_STREAM])
    if spec.cluster_sizes is not None:
        sizes = list(spec.cluster_sizes)
    else:
        sizes = sizes_rng.integers(
            spec.cluster_size_min, spec.cluster_size_max + 1, size=spec.n_clusters
        ).tolist()

    pattern1_clusters = list(range(spec.n_pattern1))
    pattern2_clusters = list(range(spec.n_pattern1, spec.n_pattern1 + spec.n_pattern2))
    for anchor_cluster in pattern1_clusters + pattern2_clusters:
        if sizes[anchor_cluster] < 2:
            raise GeneratorSpecError(
                f"cluster {anchor_cluster} anchors a confusable pair but has fewer "
                "than 2 reports; confusable anchors need a true duplicate"
            )

    shared_pool = alloc.take(spec.tokens_per_report) if n_shared > 0 else []
    cluster_pools = [alloc.take(spec.tokens_per_report) for _ in range(spec.n_clusters)]

    decisions = np.random.default_rng([spec.seed, _DECISIONS_STREAM])
    next_layout = spec.n_clusters
    drafts: list[_DraftReport] = []
    report_index = 0
    synonyms: dict[str, str] = {}
    used_fillers: set[str] = set()

    def next_id() -> str:
        nonlocal report_index
        rid = f"{spec.project_id}-r{report_index:04d}"
        report_index += 1
        return rid

    anchors: dict[int, _DraftReport] = {}
    for cluster, size in enumerate(sizes):
        forced = cluster in pattern1_clusters or cluster in pattern2_clusters
        for member in range(size):
            rid = next_id()
            text_rng = np.random.default_rng([spec.seed, _TEXT_STREAM, report_index])
            tokens = _sample_tokens(text_rng, cluster_pools[cluster], shared_pool, alloc, spec)
            tokens = _decorate(tokens, text_rng, spec, synonyms, used_fillers)
            if forced:
                has_shot, layout = True, cluster
            else:
                has_shot = decisions.random() < spec.screenshot_coverage
                if has_shot and decisions.random() >= spec.screenshot_reuse:
                    layout = next_layout
                    next_layout += 1
                else:
                    layout = cluster
            draft = _DraftReport(
                report_id=rid,
                tokens=tokens,
                label=f"bug-{cluster:03d}",
                layout_id=layout if has_shot else None,
                noise_key=report_index if has_shot else None,
            )
            drafts.append(draft)
            if member == 0:
                anchors[cluster] = draft

    confusables: list[ConfusablePlant] = []
    for cluster in pattern1_clusters:
        anchor = anchors[cluster]
        rid = next_id()
        drafts.append(
            _DraftReport(
                report_id=rid,
                tokens=list(anchor.tokens),
                label=DEFAULT_SINGLETON_LABEL,
                layout_id=next_layout,
                noise_key=report_index,
            )
        )
        next_layout += 1
        confusables.append(ConfusablePlant(1, anchor.report_id, rid))
    for cluster in pattern2_clusters:
        anchor = anchors[cluster]
        rid = next_id()
        text_rng = np.random.default_rng([spec.seed, _TEXT_STREAM, report_index])
        tokens = _decorate(
            alloc.take(spec.tokens_per_report), text_rng, spec, synonyms, used_fillers
        )
        drafts.append(
            _DraftReport(
                report_id=rid,
                tokens=tokens,
                label=DEFAULT_SINGLETON_LABEL,
                layout_id=anchor.layout_id,
                noise_key=anchor.noise_key,
                copy_image_of=anchor.report_id,
            )
        )
        confusables.append(ConfusablePlant(2, anchor.report_id, rid))

    for _ in range(spec.n_singletons):
        rid = next_id()
        text_rng = np.random.default_rng([spec.seed, _TEXT_STREAM, report_index])
        tokens = _sample_tokens(text_rng, None, shared_pool, alloc, spec)
        tokens = _decorate(tokens, text_rng, spec, synonyms, used_fillers)
        has_shot = decisions.random() < spec.screenshot_coverage
        if has_shot:
            layout, noise = next_layout, report_index
            next_layout += 1
        else:
            layout, noise = None, None
        drafts.append(
            _DraftReport(
                report_id=rid,
                tokens=tokens,
                label=DEFAULT_SINGLETON_LABEL,
                layout_id=layout,
                noise_key=noise,
            )
        )

    assess_rng = np.random.default_rng([spec.seed, _ASSESS_STREAM])
    images: dict[str, np.ndarray] = {}
    layout_of: dict[str, int | None] = {}
    reports: list[Report] = []
    used_words: set[str] = set()
    for draft in drafts:
        half = len(draft.tokens) // 2
        screenshot = None
        if draft.layout_id is not None:
            screenshot = f"{draft.report_id}.png"
            if draft.copy_image_of is not None:
                images[screenshot] = images[f"{draft.copy_image_of}.png"]
            else:
                images[screenshot] = render_layout(
                    draft.layout_id,
                    size=spec.image_size,
                    noise_seed=(spec.seed << 20) + int(draft.noise_key or 0),
                )
        layout_of[draft.report_id] = draft.layout_id
        assessment = Assessment.FAILED if assess_rng.random() < 0.9 else Assessment.PASSED
        reports.append(
            Report(
                report_id=draft.report_id,
                project_id=spec.project_id,
                environment=f"phone-{draft.noise_key or 0} os-sim wifi",
                input_steps=" ".join(draft.tokens[:half]),
                result_description=" ".join(draft.tokens[half:]),
                screenshot_path=screenshot,
                label=draft.label,
                assessment=assessment,
            )
        )
        used_words.update(synonyms.get(t, t) for t in draft.tokens)
    used_words -= used_fillers

    project = Project(project_id=spec.project_id, reports=tuple(reports))
    return GeneratedCorpus(
        spec=spec,
        project=project,
        images=images,
        layout_of=layout_of,
        confusables=tuple(confusables),
        stopwords=tuple(sorted(used_fillers)),
        synonyms=synonyms,
        used_words=tuple(sorted(used_words)),
    )


def _report_record(report: Report) -> dict:
    return {
        "report_id": report.report_id,
        "project_id": report.project_id,
        "environment": report.environment,
        "input_steps": report.input_steps,
        "result_description": report.result_description,
        "screenshot": report.screenshot_path,
        "label": report.label,
        "assessment": report.assessment.value,
    }


def write_corpora(corpora: list[GeneratedCorpus], out_dir: str | Path) -> Path:
    """Write one manifest covering all given projects, plus shared resources.

    Returns the manifest path. Report ids are project-prefixed, so image
    files never collide; embedding vectors are word-derived, so merged
    resource files stay consistent across projects.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "resources").mkdir(parents=True, exist_ok=True)

    dims = {c.spec.embedding_dim for c in corpora}
    if len(dims) != 1:
        raise GeneratorSpecError(f"embedding dims differ across projects: {sorted(dims)}")
    ids = [c.project.project_id for c in corpora]
    if len(set(ids)) != len(ids):
        raise GeneratorSpecError(f"duplicate project ids: {ids}")

    project_files = []
    for corpus in corpora:
        fname = f"{corpus.project.project_id}.jsonl"
        project_files.append(fname)
        with open(out / fname, "w", encoding="utf-8") as fh:
            for report in corpus.project.reports:
                fh.write(json.dumps(_report_record(report), sort_keys=True) + "\n")
        for name, pixels in corpus.images.items():
            Image.fromarray(pixels, mode="RGB").save(out / "images" / name, format="PNG")

    manifest = {"image_root": "images", "projects": project_files}
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    stopwords = sorted(set().union(*(set(c.stopwords) for c in corpora)))
    (out / "resources" / "stopwords.txt").write_text(
        "".join(w + "\n" for w in stopwords), encoding="utf-8"
    )

    merged_synonyms: dict[str, str] = {}
    for corpus in corpora:
        for variant, canonical in corpus.synonyms.items():
            if merged_synonyms.get(variant, canonical) != canonical:
                raise GeneratorSpecError(f"conflicting synonym mappings for {variant!r}")
            merged_synonyms[variant] = canonical
    by_canonical: dict[str, list[str]] = {}
    for variant, canonical in merged_synonyms.items():
        by_canonical.setdefault(canonical, []).append(variant)
    with open(out / "resources" / "synonyms.tsv", "w", encoding="utf-8") as fh:
        for canonical in sorted(by_canonical):
            variants = "\t".join(sorted(by_canonical[canonical]))
            fh.write(f"{canonical}\t{variants}\n")

    dim = corpora[0].spec.embedding_dim
    words = sorted(set().union(*(set(c.used_words) for c in corpora)))
    table = EmbeddingTable(
        vectors={w: word_vector(w, dim) for w in words}, dim=dim
    )
    write_embeddings(out / "resources" / "embeddings.txt", table)
    return manifest_path
