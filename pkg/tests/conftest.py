import json

import numpy as np
import pytest
from hypothesis import settings

from setu.corpus import ground_truth
from setu.images import COLOR_DIM, STRUCTURE_DIM
from setu.similarity import FeatureBundle
from setu.store import Resources, featurize_project

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")


def make_record(
    report_id,
    project_id="P1",
    label="bug-1",
    screenshot=None,
    input_steps="tap the share button",
    result_description="nothing happens",
    assessment="failed",
):
    return {
        "report_id": report_id,
        "project_id": project_id,
        "environment": "phone-x os-y wifi",
        "input_steps": input_steps,
        "result_description": result_description,
        "screenshot": screenshot,
        "label": label,
        "assessment": assessment,
    }


def write_corpus(tmp_path, records_by_file, images=None):
    """Write a manifest + JSONL project files (+ optional PNG images)."""
    from PIL import Image

    image_dir = tmp_path / "images"
    image_dir.mkdir(exist_ok=True)
    for name, pixels in (images or {}).items():
        Image.fromarray(pixels, mode="RGB").save(image_dir / name, format="PNG")
    files = []
    for fname, records in records_by_file.items():
        files.append(fname)
        with open(tmp_path / fname, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(
        json.dumps({"image_root": "images", "projects": files}), encoding="utf-8"
    )
    return manifest


def unit(values, dim):
    vec = np.zeros(dim, dtype=np.float64)
    vals = np.asarray(values, dtype=np.float64)
    vec[: len(vals)] = vals
    norm = np.linalg.norm(vec)
    return vec / norm if norm else vec


def make_bundle(structure=(1.0,), color=(1.0,), tfidf=None, embedding=(1.0,), dim=4):
    """Bundle whose per-feature cosines are easy to control from the prefixes."""
    vals = np.asarray(embedding, dtype=np.float64)
    emb = np.zeros(max(dim, len(vals)), dtype=np.float64)
    emb[: len(vals)] = vals
    return FeatureBundle(
        structure=unit(structure, STRUCTURE_DIM),
        color=unit(color, COLOR_DIM),
        tfidf=dict(tfidf or {0: 1.0}),
        embedding=emb,
    )


def featurize_generated(generated):
    """In-memory featurization of a synthgen corpus (no disk round trip)."""
    resources = Resources(
        stopwords=frozenset(generated.stopwords),
        synonyms=dict(generated.synonyms),
        embeddings=generated.embedding_table(),
    )
    def image_loader(report):
        if report.screenshot_path is None:
            return None
        return generated.images[report.screenshot_path]

    bundles, _ = featurize_project(generated.project, resources, image_loader)
    return generated.project, ground_truth(generated.project), bundles


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # First numba call compiles; keep that out of timed acceptance checks.
    from setu.images import blank_descriptor, color_descriptor, structure_descriptor

    img = np.zeros((8, 8, 3), dtype=np.uint8)
    structure_descriptor(img)
    color_descriptor(img)
    blank_descriptor()
