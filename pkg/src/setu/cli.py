"""Command-line surface: featurize, query, evaluate, compare, tune, synth.

All commands are deterministic given identical inputs, flags, and seeds, and
exit 0 on success / 1 with a diagnostic on stderr for any handled error.
Floats in JSON outputs carry 9 significant digits.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import evaluation, synthgen
from .corpus import Corpus, ground_truth, ground_truth_from_labels, load_corpus
from .errors import EvaluationError, SetuError
from .ranker import Combiner, rank_duplicates
from .similarity import FeatureMask
from .store import FeatureStore, Resources, build_store, load_store, save_store

STORE_SUFFIX = ".setu"

_COMBINER_NAMES = {
    "setu": "hierarchical",
    "addcmb": "addcmb",
    "multiplycmb": "multiplycmb",
    "textfirst": "textfirst",
    "onlytext": "onlytext",
    "onlyimage": "onlyimage",
}
_MASK_NAMES = ("full", "notf", "noemb", "noclr", "nostrc")


def _round9(value):
    """Round floats (recursively) to 9 significant digits for JSON output."""
    if isinstance(value, float):
        return float(f"{value:.9g}")
    if isinstance(value, dict):
        return {k: _round9(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round9(v) for v in value]
    return value


def _write_json(obj, path: Path | None) -> None:
    text = json.dumps(_round9(obj), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _make_combiner(name: str, thres: float) -> Combiner:
    kind = _COMBINER_NAMES.get(name.lower())
    if kind is None:
        raise EvaluationError(
            f"unknown combiner {name!r}; expected one of {sorted(_COMBINER_NAMES)}"
        )
    if kind in ("hierarchical", "textfirst"):
        return Combiner(kind, thres)
    return Combiner(kind)


def _parse_method(spec: str, default_thres: float) -> tuple[str, Combiner, FeatureMask]:
    """Parse 'name[:thres][/mask]' into a label, combiner, and mask."""
    body, _, mask_name = spec.partition("/")
    name, _, thres_part = body.partition(":")
    thres = default_thres
    if thres_part:
        try:
            thres = float(thres_part)
        except ValueError:
            raise EvaluationError(f"bad threshold in method spec {spec!r}") from None
    mask = FeatureMask.from_name(mask_name) if mask_name else FeatureMask()
    combiner = _make_combiner(name, thres)
    return spec, combiner, mask


def _scores_dict(scores) -> dict:
    return {
        "s_structure": scores.s_structure,
        "s_color": scores.s_color,
        "s_tfidf": scores.s_tfidf,
        "s_embedding": scores.s_embedding,
        "s_screenshot": scores.s_screenshot,
        "s_textual": scores.s_textual,
        "s_total": scores.s_total,
    }


def cmd_featurize(args) -> int:
    corpus = load_corpus(args.corpus)
    resources = Resources.load(args.stopwords, args.synonyms, args.embeddings)
    store = build_store(corpus, resources)
    save_store(store, args.out)
    print(
        f"featurized {sum(len(p.report_ids) for p in store.projects)} reports "
        f"across {len(store.projects)} projects -> {args.out}"
    )
    return 0


def _store_project_features(store: FeatureStore, report_id: str):
    for p in store.projects:
        if report_id in p.report_ids:
            return p, {rid: store.bundles[rid] for rid in p.report_ids}
    raise EvaluationError(f"report {report_id!r} not found in store")


def cmd_query(args) -> int:
    store = load_store(args.store)
    combiner = _make_combiner(args.combiner, args.thres)
    mask = FeatureMask.from_name(args.mask)
    stored, features = _store_project_features(store, args.report)
    result = rank_duplicates(args.report, features, combiner, mask)
    entries = result.entries[: args.top_k] if args.top_k else result.entries
    _write_json(
        {
            "query": args.report,
            "project_id": stored.project_id,
            "combiner": combiner.label(),
            "mask": args.mask,
            "results": [
                {
                    "rank": e.rank,
                    "report_id": e.report_id,
                    "class": e.class_tag,
                    "scores": _scores_dict(e.scores),
                }
                for e in entries
            ],
        },
        None,
    )
    return 0


def _corpus_ground_truths(corpus: Corpus) -> dict[str, object]:
    return {p.project_id: ground_truth(p) for p in corpus.projects}


def cmd_evaluate(args) -> int:
    store = load_store(args.store)
    corpus = load_corpus(args.corpus)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    methods = [
        _parse_method(m.strip(), args.thres)
        for m in args.methods.split(",")
        if m.strip()
    ]
    if not methods:
        raise EvaluationError("no methods given")

    gts = _corpus_ground_truths(corpus)
    rows = []
    per_method_per_query: dict[str, dict[str, dict[str, list[float]]]] = {}
    reports_by_key: dict[tuple[str, str], evaluation.MetricsReport] = {}
    for label, combiner, mask in methods:
        per_project: dict[str, dict[str, list[float]]] = {}
        for project in corpus.projects:
            bundles = [store.bundles[rid] for rid in project.report_ids()]
            prepared = evaluation.PreparedProject(
                project, gts[project.project_id], bundles, mask
            )
            report = prepared.evaluate(combiner, method=label)
            reports_by_key[(label, project.project_id)] = report
            rows.append(
                {
                    "method": label,
                    "project_id": project.project_id,
                    "n_queries": len(report.per_query),
                    "recall_at_1": report.recall_at_1,
                    "recall_at_5": report.recall_at_5,
                    "recall_at_10": report.recall_at_10,
                    "map": report.map,
                    "mrr": report.mrr,
                }
            )
            per_project[project.project_id] = {
                "query_ids": [q.query_id for q in report.per_query],
                "recall_at_1": [float(q.recall_at_1) for q in report.per_query],
                "recall_at_5": [float(q.recall_at_5) for q in report.per_query],
                "recall_at_10": [float(q.recall_at_10) for q in report.per_query],
                "ap": [q.ap for q in report.per_query],
                "rr": [q.rr for q in report.per_query],
            }
        per_method_per_query[label] = per_project

    improvements = []
    if len(methods) > 1:
        ours_label = methods[0][0]
        for baseline_label, _, _ in methods[1:]:
            for project in corpus.projects:
                ours = reports_by_key[(ours_label, project.project_id)]
                base = reports_by_key[(baseline_label, project.project_id)]
                for metric in evaluation.AGGREGATE_FIELDS:
                    baseline_value = getattr(base, metric)
                    ours_value = getattr(ours, metric)
                    improvements.append(
                        {
                            "project_id": project.project_id,
                            "metric": metric,
                            "method": ours_label,
                            "baseline_method": baseline_label,
                            "ours": ours_value,
                            "baseline": baseline_value,
                            "improvement": (
                                evaluation.improvement(ours_value, baseline_value)
                                if baseline_value > 0
                                else None
                            ),
                        }
                    )

    _write_json({"rows": rows, "improvements": improvements}, out_dir / "metrics.json")
    with open(out_dir / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "project_id", "n_queries", "recall@1", "recall@5", "recall@10", "map", "mrr"]
        )
        for row in rows:
            writer.writerow(
                [
                    row["method"],
                    row["project_id"],
                    row["n_queries"],
                    f"{row['recall_at_1']:.9g}",
                    f"{row['recall_at_5']:.9g}",
                    f"{row['recall_at_10']:.9g}",
                    f"{row['map']:.9g}",
                    f"{row['mrr']:.9g}",
                ]
            )
    for label, per_project in per_method_per_query.items():
        safe = label.replace(":", "-").replace("/", "-")
        _write_json(
            {"method": label, "projects": per_project},
            out_dir / f"per_query_{safe}.json",
        )
    print(f"wrote metrics for {len(methods)} methods to {out_dir}")
    return 0


def _load_dump(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_compare(args) -> int:
    dump_a = _load_dump(args.a)
    dump_b = _load_dump(args.b)
    projects_a = dump_a.get("projects", {})
    projects_b = dump_b.get("projects", {})
    if set(projects_a) != set(projects_b):
        raise EvaluationError(
            f"project keys differ: {sorted(projects_a)} vs {sorted(projects_b)}"
        )

    keys = []
    raw = []
    for project_id in sorted(projects_a):
        for metric in evaluation.METRIC_FIELDS:
            xs = projects_a[project_id].get(metric)
            ys = projects_b[project_id].get(metric)
            if xs is None or ys is None:
                raise EvaluationError(
                    f"metric {metric!r} missing for project {project_id!r}"
                )
            test = evaluation.mann_whitney_one_tailed(xs, ys)
            delta, interpretation = evaluation.cliffs_delta(xs, ys)
            keys.append((project_id, metric))
            raw.append((test, delta, interpretation))

    m = len(keys)
    adjusted = evaluation.bonferroni([t.p_value for t, _, _ in raw], m)
    results = []
    for (project_id, metric), (test, delta, interpretation), p_adj in zip(
        keys, raw, adjusted
    ):
        results.append(
            {
                "project_id": project_id,
                "metric": metric,
                "u_statistic": test.u_statistic,
                "p_value": test.p_value,
                "p_adjusted": p_adj,
                "test_method": test.method,
                "cliffs_delta": delta,
                "interpretation": interpretation,
            }
        )
    out = Path(args.out)
    _write_json(
        {
            "method_a": dump_a.get("method"),
            "method_b": dump_b.get("method"),
            "n_tests": m,
            "results": results,
        },
        out,
    )
    with open(out.with_suffix(".csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["project_id", "metric", "u", "p_value", "p_adjusted", "cliffs_delta", "interpretation"]
        )
        for row in results:
            writer.writerow(
                [
                    row["project_id"],
                    row["metric"],
                    f"{row['u_statistic']:.9g}",
                    f"{row['p_value']:.9g}",
                    f"{row['p_adjusted']:.9g}",
                    f"{row['cliffs_delta']:.9g}",
                    row["interpretation"],
                ]
            )
    return 0


def _load_stores(stores_arg: str) -> list[FeatureStore]:
    path = Path(stores_arg)
    if path.is_dir():
        files = sorted(path.glob(f"*{STORE_SUFFIX}"))
        if not files:
            raise EvaluationError(f"no *{STORE_SUFFIX} files in {path}")
    else:
        files = [path]
    return [load_store(f) for f in files]


def cmd_tune(args) -> int:
    stores = _load_stores(args.stores)
    mask = FeatureMask.from_name(args.mask)
    grid = evaluation.default_threshold_grid(args.grid_step)

    prepared: list[evaluation.PreparedProject] = []
    for store in stores:
        for sp in store.projects:
            gt = ground_truth_from_labels(list(sp.report_ids), list(sp.labels))
            prepared.append(
                evaluation.PreparedProject.from_ids(
                    sp.project_id,
                    sp.report_ids,
                    gt,
                    [store.bundles[rid] for rid in sp.report_ids],
                    mask,
                )
            )

    if len(prepared) < 2:
        raise EvaluationError("tuning needs at least 2 projects (one to hold out)")
    ids = [p.project_id for p in prepared]
    if args.holdout not in ids:
        raise EvaluationError(f"holdout {args.holdout!r} not among projects {ids}")

    holdout = next(p for p in prepared if p.project_id == args.holdout)
    training = [p for p in prepared if p.project_id != args.holdout]
    tuning = evaluation.tune_threshold(training, grid=grid, holdout_project_id=args.holdout)
    metrics = holdout.evaluate(Combiner.hierarchical(tuning.thres), method="setu")
    _write_json(
        {
            "holdout": args.holdout,
            "thres": tuning.thres,
            "training_map": tuning.training_map,
            "grid": [[t, m] for t, m in tuning.grid],
            "holdout_metrics": {
                "recall_at_1": metrics.recall_at_1,
                "recall_at_5": metrics.recall_at_5,
                "recall_at_10": metrics.recall_at_10,
                "map": metrics.map,
                "mrr": metrics.mrr,
                "n_queries": len(metrics.per_query),
            },
        },
        Path(args.out) if args.out else None,
    )
    return 0


def cmd_synth(args) -> int:
    raw = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = synthgen.GeneratorSpec.from_json(raw)
    generated = synthgen.generate_corpus(spec)
    manifest = generated.write(args.out)
    print(
        f"generated {len(generated.project)} reports "
        f"({len(generated.images)} screenshots) -> {manifest}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setu",
        description="Duplicate-report detection: featurize, rank, and evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", help="extract and persist feature bundles")
    p.add_argument("--corpus", required=True, help="corpus manifest JSON")
    p.add_argument("--stopwords", required=True)
    p.add_argument("--synonyms", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="output store path")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("query", help="rank duplicate candidates for one report")
    p.add_argument("--store", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--combiner", default="setu", choices=sorted(_COMBINER_NAMES))
    p.add_argument("--thres", type=float, default=0.9)
    p.add_argument("--mask", default="full", choices=_MASK_NAMES)
    p.add_argument("--top-k", type=int, default=10)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("evaluate", help="score methods per project")
    p.add_argument("--store", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument(
        "--methods",
        required=True,
        help="comma-separated method specs: name[:thres][/mask], e.g. 'setu:0.94,onlytext'",
    )
    p.add_argument("--thres", type=float, default=0.9, help="default threshold")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="statistical tests between two per-query dumps")
    p.add_argument("--a", required=True, help="per-query dump of the first method")
    p.add_argument("--b", required=True, help="per-query dump of the second method")
    p.add_argument("--out", required=True, help="output JSON (CSV written alongside)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("tune", help="leave-one-out threshold tuning")
    p.add_argument("--stores", required=True, help=f"directory of *{STORE_SUFFIX} files or one store")
    p.add_argument("--holdout", required=True, help="held-out project id")
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--mask", default="full", choices=_MASK_NAMES)
    p.add_argument("--out", default=None, help="output JSON (default: stdout)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True, help="generator spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SetuError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
