"""Corpus loading, validation, ground truth and corpus statistics.

A corpus is a set of projects, each stored as a UTF-8 JSONL file (one report
per line) plus a shared image directory. A manifest JSON ties them together:

    {"image_root": "images", "projects": ["p1.jsonl", "p2.jsonl", ...]}

Paths in the manifest are resolved relative to the manifest's directory, and
``screenshot`` fields inside records are resolved relative to ``image_root``.
Reports with the same ``label`` inside one project are duplicates of each
other; a configurable sentinel label (default ``"UNIQUE"``) marks reports
that have no duplicates without forcing corpora to invent fresh labels.
"""

from __future__ import annotations

import enum
import json
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusFormatError, ValidationError

DEFAULT_SINGLETON_LABEL = "UNIQUE"

_RECORD_KEYS = frozenset(
    {
        "report_id",
        "project_id",
        "environment",
        "input_steps",
        "result_description",
        "screenshot",
        "label",
        "assessment",
    }
)


class Assessment(enum.Enum):
    PASSED = "passed"
    FAILED = "failed"


@dataclass(frozen=True)
class Report:
    """One crowdtesting report. Immutable after load."""

    report_id: str
    project_id: str
    environment: str
    input_steps: str
    result_description: str
    screenshot_path: str | None
    label: str
    assessment: Assessment

    def __post_init__(self) -> None:
        if not self.report_id:
            raise ValidationError("report_id must be non-empty")
        if not self.label:
            raise ValidationError(f"report {self.report_id!r}: label must be non-empty")

    @property
    def text(self) -> str:
        """Featurized text: operation steps plus result description."""
        return f"{self.input_steps} {self.result_description}".strip()

    @property
    def has_screenshot(self) -> bool:
        return self.screenshot_path is not None


@dataclass(frozen=True)
class Project:
    """An ordered, immutable collection of reports sharing one project_id.

    Report order is ingestion order and defines the canonical tie-breaking
    order used by the ranker.
    """

    project_id: str
    reports: tuple[Report, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for r in self.reports:
            if r.project_id != self.project_id:
                raise ValidationError(
                    f"report {r.report_id!r} carries project_id {r.project_id!r}, "
                    f"expected {self.project_id!r}"
                )
            if r.report_id in seen:
                raise ValidationError(
                    f"duplicate report_id {r.report_id!r} in project {self.project_id!r}"
                )
            seen.add(r.report_id)

    def __len__(self) -> int:
        return len(self.reports)

    def __iter__(self) -> Iterator[Report]:
        return iter(self.reports)

    def report_ids(self) -> list[str]:
        return [r.report_id for r in self.reports]


class GroundTruth(Mapping[str, frozenset[str]]):
    """Per report, the set of other reports sharing its label in the project."""

    def __init__(self, duplicates: dict[str, frozenset[str]]):
        self._duplicates = dict(duplicates)

    def __getitem__(self, report_id: str) -> frozenset[str]:
        return self._duplicates[report_id]

    def __iter__(self) -> Iterator[str]:
        return iter(self._duplicates)

    def __len__(self) -> int:
        return len(self._duplicates)

    def n_with_duplicates(self) -> int:
        return sum(1 for dups in self._duplicates.values() if dups)


@dataclass(frozen=True)
class CorpusStats:
    """Project-level counts in the shape of the usual corpus summary table."""

    n_reports: int
    n_with_screenshot: int
    pct_screenshot: float
    n_with_duplicates: int
    pct_duplicates: float
    total_pairs: int
    dup_pairs: int
    pct_dup_pairs: float


def ground_truth(
    project: Project, singleton_label: str = DEFAULT_SINGLETON_LABEL
) -> GroundTruth:
    """Derive duplicate sets from label equality within the project.

    Reports labeled with ``singleton_label`` are treated as singleton
    clusters: they are never duplicates of each other.
    """
    return ground_truth_from_labels(
        [r.report_id for r in project.reports],
        [r.label for r in project.reports],
        singleton_label,
    )


def ground_truth_from_labels(
    report_ids: list[str],
    labels: list[str],
    singleton_label: str = DEFAULT_SINGLETON_LABEL,
) -> GroundTruth:
    by_label: dict[str, list[str]] = {}
    for rid, label in zip(report_ids, labels):
        by_label.setdefault(label, []).append(rid)

    duplicates: dict[str, frozenset[str]] = {}
    for label, ids in by_label.items():
        if label == singleton_label:
            for rid in ids:
                duplicates[rid] = frozenset()
            continue
        members = frozenset(ids)
        for rid in ids:
            duplicates[rid] = members - {rid}
    return GroundTruth(duplicates)


def corpus_stats(project: Project, gt: GroundTruth) -> CorpusStats:
    """Populate the summary counts for one project."""
    n = len(project)
    n_scr = sum(1 for r in project.reports if r.has_screenshot)
    n_dup = gt.n_with_duplicates()
    total_pairs = n * (n - 1) // 2
    # dup_pairs = sum over duplicate sets / 2, i.e. sum over labels of c*(c-1)/2
    dup_pairs = sum(len(gt[r.report_id]) for r in project.reports) // 2
    return CorpusStats(
        n_reports=n,
        n_with_screenshot=n_scr,
        pct_screenshot=n_scr / n if n else 0.0,
        n_with_duplicates=n_dup,
        pct_duplicates=n_dup / n if n else 0.0,
        total_pairs=total_pairs,
        dup_pairs=dup_pairs,
        pct_dup_pairs=dup_pairs / total_pairs if total_pairs else 0.0,
    )


@dataclass(frozen=True)
class Corpus:
    """All projects of a manifest plus the resolved image root."""

    projects: tuple[Project, ...]
    image_root: Path
    manifest_path: Path = field(compare=False)

    def project(self, project_id: str) -> Project:
        for p in self.projects:
            if p.project_id == project_id:
                return p
        raise KeyError(project_id)

    def project_ids(self) -> list[str]:
        return [p.project_id for p in self.projects]


def _parse_record(raw: dict, path: Path, lineno: int) -> Report:
    missing = _RECORD_KEYS - raw.keys()
    if missing:
        raise CorpusFormatError(
            f"{path}:{lineno}: record missing keys {sorted(missing)}"
        )
    unknown = raw.keys() - _RECORD_KEYS
    if unknown:
        raise CorpusFormatError(
            f"{path}:{lineno}: record has unknown keys {sorted(unknown)}"
        )
    screenshot = raw["screenshot"]
    if screenshot is not None and not isinstance(screenshot, str):
        raise CorpusFormatError(f"{path}:{lineno}: screenshot must be a path or null")
    try:
        assessment = Assessment(raw["assessment"])
    except ValueError:
        raise CorpusFormatError(
            f"{path}:{lineno}: assessment must be 'passed' or 'failed', "
            f"got {raw['assessment']!r}"
        ) from None
    try:
        return Report(
            report_id=str(raw["report_id"]),
            project_id=str(raw["project_id"]),
            environment=str(raw["environment"]),
            input_steps=str(raw["input_steps"]),
            result_description=str(raw["result_description"]),
            screenshot_path=screenshot,
            label=str(raw["label"]),
            assessment=assessment,
        )
    except ValidationError as exc:
        raise ValidationError(f"{path}:{lineno}: {exc}") from None


def load_project_file(path: Path) -> Project:
    """Parse one JSONL project file into a Project."""
    reports: list[Report] = []
    seen_ids: set[str] = set()
    project_id: str | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(raw, dict):
                raise CorpusFormatError(f"{path}:{lineno}: record must be a JSON object")
            report = _parse_record(raw, path, lineno)
            if report.report_id in seen_ids:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate report_id {report.report_id!r}"
                )
            seen_ids.add(report.report_id)
            if project_id is None:
                project_id = report.project_id
            elif report.project_id != project_id:
                raise ValidationError(
                    f"{path}:{lineno}: project_id {report.project_id!r} differs from "
                    f"{project_id!r} earlier in the same file"
                )
            reports.append(report)
    if project_id is None:
        raise CorpusFormatError(f"{path}: project file contains no records")
    return Project(project_id=project_id, reports=tuple(reports))


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load every project listed in a manifest and validate image references.

    Raises CorpusFormatError for malformed files (with line numbers) and
    ValidationError for duplicate report ids, duplicate project ids, or
    screenshot paths that do not resolve to an existing file.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{manifest_path}: invalid JSON: {exc.msg}") from None
    if not isinstance(manifest, dict) or "projects" not in manifest or "image_root" not in manifest:
        raise CorpusFormatError(
            f"{manifest_path}: manifest must be an object with 'projects' and 'image_root'"
        )

    base = manifest_path.parent
    image_root = base / manifest["image_root"]
    projects: list[Project] = []
    seen_projects: set[str] = set()
    missing_images: list[str] = []
    for entry in manifest["projects"]:
        project = load_project_file(base / entry)
        if project.project_id in seen_projects:
            raise ValidationError(
                f"{manifest_path}: duplicate project_id {project.project_id!r}"
            )
        seen_projects.add(project.project_id)
        for r in project.reports:
            if r.screenshot_path is not None and not (image_root / r.screenshot_path).is_file():
                missing_images.append(str(image_root / r.screenshot_path))
        projects.append(project)
    if missing_images:
        raise ValidationError(
            "missing screenshot files: " + ", ".join(sorted(missing_images))
        )
    return Corpus(projects=tuple(projects), image_root=image_root, manifest_path=manifest_path)
