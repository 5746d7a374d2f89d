"""Feature store: featurize a corpus and persist the bundles to one file.

The on-disk format is a single binary container: an 8-byte magic, a
length-prefixed JSON header (format/descriptor versions, embedding
dimension, per-project report metadata and TF-IDF model), then one
length-prefixed binary record per report in header order. Vector payloads
are raw little-endian float64, so a round trip preserves every bit.

Loading refuses stores whose descriptor version or embedding dimension does
not match what the caller expects.
"""

from __future__ import annotations

import json
import struct
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Project, Report
from .errors import ImageDecodeError, StoreError, StoreVersionError
from .images import (
    DESCRIPTOR_VERSION,
    RasterImage,
    blank_descriptor,
    color_descriptor,
    load_image,
    structure_descriptor,
)
from .similarity import FeatureBundle
from .text import (
    EmbeddingTable,
    Segmenter,
    TfIdfModel,
    build_tfidf_model,
    embed_report,
    load_embeddings,
    load_stopwords,
    load_synonyms,
    normalize,
    tfidf_vector,
    tokenize,
)
from . import images as _images

MAGIC = b"SETUFS01"
FORMAT_VERSION = 1

ImageLoader = Callable[[Report], RasterImage | np.ndarray | None]


@dataclass(frozen=True)
class Resources:
    """Normalization and embedding resources used during featurization."""

    stopwords: frozenset[str]
    synonyms: dict[str, str]
    embeddings: EmbeddingTable
    segmenter: Segmenter = Segmenter()

    @classmethod
    def load(cls, stopwords_path, synonyms_path, embeddings_path) -> "Resources":
        return cls(
            stopwords=load_stopwords(stopwords_path),
            synonyms=load_synonyms(synonyms_path),
            embeddings=load_embeddings(embeddings_path),
        )


@dataclass(frozen=True)
class StoredProject:
    """Per-project report metadata and the TF-IDF model that produced it."""

    project_id: str
    report_ids: tuple[str, ...]
    labels: tuple[str, ...]
    has_screenshot: tuple[bool, ...]
    model: TfIdfModel


@dataclass
class FeatureStore:
    descriptor_version: str
    embedding_dim: int
    projects: tuple[StoredProject, ...]
    bundles: dict[str, FeatureBundle]

    def project_ids(self) -> list[str]:
        return [p.project_id for p in self.projects]

    def project(self, project_id: str) -> StoredProject:
        for p in self.projects:
            if p.project_id == project_id:
                return p
        raise KeyError(project_id)

    def project_bundles(self, project_id: str) -> list[FeatureBundle]:
        return [self.bundles[rid] for rid in self.project(project_id).report_ids]


def featurize_report(
    report: Report,
    model: TfIdfModel,
    resources: Resources,
    image: RasterImage | np.ndarray | None,
) -> FeatureBundle:
    tokens = normalize(
        tokenize(report.text, resources.segmenter),
        resources.stopwords,
        resources.synonyms,
    )
    if image is None:
        structure, color = blank_descriptor()
    else:
        structure = structure_descriptor(image)
        color = color_descriptor(image)
    return FeatureBundle(
        structure=structure,
        color=color,
        tfidf=tfidf_vector(tokens, model),
        embedding=embed_report(tokens, resources.embeddings),
    )


def featurize_project(
    project: Project,
    resources: Resources,
    image_loader: ImageLoader,
) -> tuple[list[FeatureBundle], TfIdfModel]:
    """Featurize one project. The TF-IDF model spans exactly this project."""
    docs = [
        normalize(
            tokenize(r.text, resources.segmenter),
            resources.stopwords,
            resources.synonyms,
        )
        for r in project.reports
    ]
    model = build_tfidf_model(docs)
    bundles = [
        featurize_report(r, model, resources, image_loader(r))
        for r in project.reports
    ]
    return bundles, model


def corpus_image_loader(corpus: Corpus) -> ImageLoader:
    def load(report: Report) -> RasterImage | None:
        if report.screenshot_path is None:
            return None
        try:
            return load_image(corpus.image_root / report.screenshot_path)
        except ImageDecodeError as exc:
            raise ImageDecodeError(
                f"report {report.report_id!r}: {exc}"
            ) from None

    return load


def build_store(corpus: Corpus, resources: Resources) -> FeatureStore:
    """Featurize every project of a corpus into one store."""
    loader = corpus_image_loader(corpus)
    projects: list[StoredProject] = []
    bundles: dict[str, FeatureBundle] = {}
    for project in corpus.projects:
        project_bundles, model = featurize_project(project, resources, loader)
        projects.append(
            StoredProject(
                project_id=project.project_id,
                report_ids=tuple(project.report_ids()),
                labels=tuple(r.label for r in project.reports),
                has_screenshot=tuple(r.has_screenshot for r in project.reports),
                model=model,
            )
        )
        bundles.update(zip(project.report_ids(), project_bundles))
    return FeatureStore(
        descriptor_version=DESCRIPTOR_VERSION,
        embedding_dim=resources.embeddings.dim,
        projects=tuple(projects),
        bundles=bundles,
    )


def _pack_record(bundle: FeatureBundle, embedding_dim: int) -> bytes:
    parts = [
        np.ascontiguousarray(bundle.structure, dtype="<f8").tobytes(),
        np.ascontiguousarray(bundle.color, dtype="<f8").tobytes(),
    ]
    indices = sorted(bundle.tfidf)
    parts.append(struct.pack("<I", len(indices)))
    parts.append(np.array(indices, dtype="<u4").tobytes())
    parts.append(np.array([bundle.tfidf[i] for i in indices], dtype="<f8").tobytes())
    emb = np.ascontiguousarray(bundle.embedding, dtype="<f8")
    if emb.size != embedding_dim:
        raise StoreError(
            f"embedding has {emb.size} dims, store expects {embedding_dim}"
        )
    parts.append(emb.tobytes())
    payload = b"".join(parts)
    return struct.pack("<I", len(payload)) + payload


def _unpack_record(payload: bytes, embedding_dim: int) -> FeatureBundle:
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(payload):
            raise StoreError("truncated feature record")
        chunk = payload[offset : offset + n]
        offset += n
        return chunk

    structure = np.frombuffer(take(_images.STRUCTURE_DIM * 8), dtype="<f8").copy()
    color = np.frombuffer(take(_images.COLOR_DIM * 8), dtype="<f8").copy()
    (nnz,) = struct.unpack("<I", take(4))
    indices = np.frombuffer(take(nnz * 4), dtype="<u4")
    values = np.frombuffer(take(nnz * 8), dtype="<f8")
    embedding = np.frombuffer(take(embedding_dim * 8), dtype="<f8").copy()
    if offset != len(payload):
        raise StoreError("trailing bytes in feature record")
    tfidf = {int(i): float(v) for i, v in zip(indices, values)}
    return FeatureBundle(
        structure=structure, color=color, tfidf=tfidf, embedding=embedding
    )


def save_store(store: FeatureStore, path: str | Path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "descriptor_version": store.descriptor_version,
        "embedding_dim": store.embedding_dim,
        "projects": [
            {
                "project_id": p.project_id,
                "report_ids": list(p.report_ids),
                "labels": list(p.labels),
                "has_screenshot": list(p.has_screenshot),
                "vocabulary": p.model.vocabulary,
                "idf": p.model.idf.tolist(),
                "n_documents": p.model.n_documents,
            }
            for p in store.projects
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for p in store.projects:
            for rid in p.report_ids:
                fh.write(_pack_record(store.bundles[rid], store.embedding_dim))


def load_store(
    path: str | Path,
    expect_descriptor_version: str | None = DESCRIPTOR_VERSION,
    expect_embedding_dim: int | None = None,
) -> FeatureStore:
    """Load a store, refusing version or dimension mismatches.

    Pass ``expect_descriptor_version=None`` to accept any producer version
    (used only by tooling that merely inspects a store).
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise StoreError(f"{path}: not a feature store (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise StoreError(f"{path}: corrupt store header: {exc}") from None
        if header.get("format_version") != FORMAT_VERSION:
            raise StoreVersionError(
                f"{path}: store format {header.get('format_version')} is not "
                f"supported (expected {FORMAT_VERSION})"
            )
        if (
            expect_descriptor_version is not None
            and header["descriptor_version"] != expect_descriptor_version
        ):
            raise StoreVersionError(
                f"{path}: store was produced by descriptor version "
                f"{header['descriptor_version']!r}, expected "
                f"{expect_descriptor_version!r}"
            )
        embedding_dim = int(header["embedding_dim"])
        if expect_embedding_dim is not None and embedding_dim != expect_embedding_dim:
            raise StoreVersionError(
                f"{path}: store embeddings have {embedding_dim} dimensions, "
                f"expected {expect_embedding_dim}"
            )

        projects = []
        bundles: dict[str, FeatureBundle] = {}
        for raw in header["projects"]:
            model = TfIdfModel(
                vocabulary={str(k): int(v) for k, v in raw["vocabulary"].items()},
                idf=np.array(raw["idf"], dtype=np.float64),
                n_documents=int(raw["n_documents"]),
            )
            projects.append(
                StoredProject(
                    project_id=raw["project_id"],
                    report_ids=tuple(raw["report_ids"]),
                    labels=tuple(raw["labels"]),
                    has_screenshot=tuple(bool(x) for x in raw["has_screenshot"]),
                    model=model,
                )
            )
        for p in projects:
            for rid in p.report_ids:
                size_bytes = fh.read(4)
                if len(size_bytes) != 4:
                    raise StoreError(f"{path}: truncated store (missing record for {rid})")
                (size,) = struct.unpack("<I", size_bytes)
                payload = fh.read(size)
                if len(payload) != size:
                    raise StoreError(f"{path}: truncated record for {rid}")
                bundles[rid] = _unpack_record(payload, embedding_dim)
        if fh.read(1):
            raise StoreError(f"{path}: trailing bytes after the last record")
    return FeatureStore(
        descriptor_version=header["descriptor_version"],
        embedding_dim=embedding_dim,
        projects=tuple(projects),
        bundles=bundles,
    )
