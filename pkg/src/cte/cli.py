"""Command-line entry point.

Subcommands mirror the pipeline stages: ``perturb`` (images to perturbed
images), ``score`` (manifest to consistency CSV), ``rank`` (CSV to
ranking), ``evaluate`` (ranking + performance to correlation report),
``synth`` (generate a synthetic study folder) and ``pipeline`` (manifest
straight to ranking and report).

Exit codes: 0 success, 2 OS-level I/O failure, 3 validation failure
(malformed array/manifest/CSV, incompatible configuration), 4 degenerate
statistic.  The ``CTE_LOG`` environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from cte import __version__, pipeline, schema, synthlab
from cte.aggregate import aggregate, rank
from cte.errors import CTEError, DegenerateStatisticError, ValidationError
from cte.perturb import load_spec_list, perturb_folder
from cte.rankstats import PERM_SEED, evaluate

logger = logging.getLogger("cte")


def _setup_logging() -> None:
    level = os.environ.get("CTE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _cmd_perturb(args) -> None:
    images_dir = Path(args.images)
    if not images_dir.is_dir():
        raise NotADirectoryError(f"{images_dir} is not a directory")
    image_paths = sorted(images_dir.glob("*.npy"))
    if not image_paths:
        raise ValidationError(f"{images_dir}: no .npy images found")
    specs = load_spec_list(args.specs)
    provenance = perturb_folder(image_paths, specs, args.out)
    schema.atomic_write_text(
        Path(args.out) / "provenance.json",
        schema.canonical_json({"schema_version": schema.SCHEMA_VERSION, "rows": provenance}),
    )
    print(f"wrote {sum(1 for row in provenance if 'path' in row)} perturbed arrays to {args.out}")


def _cmd_score(args) -> None:
    from cte.manifest import load_manifest

    man = load_manifest(args.manifest)
    rows, warnings = pipeline.score_manifest(
        man, args.metric, per_class=args.per_class, alpha=args.alpha, jobs=args.jobs
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / schema.SCORES_CSV_NAME
    schema.atomic_write_text(path, schema.csv_text(schema.SCORES_CSV_HEADER, rows))
    for model_id, notes in sorted(warnings.items()):
        for note in notes:
            logger.warning("%s: %s", model_id, note)
    print(f"wrote {len(rows)} scores to {path}")


def _cmd_rank(args) -> None:
    table, cells, metric = pipeline.read_scores_csv(args.scores)
    records = aggregate(table, cells, dataset_id=args.dataset_id)
    ranking = rank(records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = schema.ranking_payload(
        ranking, records, dataset_id=args.dataset_id, metric=metric,
        per_class=None, alpha=None,
    )
    schema.atomic_write_text(out / schema.RANKING_JSON_NAME, schema.canonical_json(payload))
    csv_rows = [
        (pos, model_id, score, payload["models"][pos - 1]["n_images"])
        for pos, (model_id, score) in enumerate(zip(ranking.model_ids, ranking.scores), start=1)
    ]
    schema.atomic_write_text(
        out / schema.RANKING_CSV_NAME, schema.csv_text(schema.RANKING_CSV_HEADER, csv_rows)
    )
    print(f"ranked {len(ranking.model_ids)} models; best is {ranking.model_ids[0]}")


def _cmd_evaluate(args) -> None:
    ranking_rows = schema.read_csv(args.ranking, schema.RANKING_CSV_HEADER)
    cte_scores: dict[str, float] = {}
    for row in ranking_rows:
        if row["model"] in cte_scores:
            raise ValidationError(f"{args.ranking}: duplicate model key {row['model']!r}")
        cte_scores[row["model"]] = float(row["cte"])
    performance = pipeline.read_performance_csv(args.performance)
    report = evaluate(cte_scores, performance, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_report(out, report, cte_scores, performance)
    print(
        f"n={report.n} tau={report.kendall_tau:.4f} (p={report.kendall_p:.4g}) "
        f"rho={report.spearman_rho:.4f} r={report.pearson_r:.4f}"
    )


def _cmd_synth(args) -> None:
    manifest_path = synthlab.generate_study(
        args.out, task=args.task, n_models=args.models, n_images=args.images, seed=args.seed
    )
    print(f"study manifest at {manifest_path}")


def _cmd_pipeline(args) -> None:
    metric = args.metric
    if metric == "auto":
        with open(args.manifest, "r", encoding="utf-8") as fh:
            try:
                task = json.load(fh).get("task")
            except json.JSONDecodeError:
                task = None  # full validation happens inside run_pipeline
        metric = "ars" if task == "instance" else "nhd"
    config = pipeline.RunConfig(
        manifest=Path(args.manifest),
        out_dir=Path(args.out),
        metric=metric,
        per_class=args.per_class,
        alpha=args.alpha,
        seed=args.seed,
        jobs=args.jobs,
    )
    artifacts = pipeline.run_pipeline(config)
    for name in sorted(artifacts):
        print(f"{name}: {artifacts[name]}")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cte",
        description="consistency-based transferability ranking for segmentation models",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perturb", help="apply perturbation specs to a folder of NPY images")
    p.add_argument("--images", required=True, help="directory of input .npy images")
    p.add_argument("--specs", required=True, help="JSON list of perturbation specs")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("score", help="score every (model, image, perturbation) cell")
    p.add_argument("--manifest", required=True)
    p.add_argument("--metric", required=True, choices=pipeline.METRICS)
    p.add_argument("--per-class", action="store_true", dest="per_class")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("rank", help="aggregate a scores CSV into a model ranking")
    p.add_argument("--scores", required=True, help="scores.csv from the score step")
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-id", default="", dest="dataset_id")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("evaluate", help="correlate a ranking CSV with a performance CSV")
    p.add_argument("--ranking", required=True, help="ranking.csv from the rank step")
    p.add_argument("--performance", required=True, help="CSV with header model,performance")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=PERM_SEED)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic study folder")
    p.add_argument("--task", required=True, choices=("semantic", "instance"))
    p.add_argument("--models", type=int, default=8)
    p.add_argument("--images", type=int, default=16)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pipeline", help="manifest straight to ranking (and report)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--metric", default="auto", choices=("auto",) + pipeline.METRICS)
    p.add_argument("--per-class", action="store_true", dest="per_class")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=PERM_SEED)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        args.func(args)
    except DegenerateStatisticError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except CTEError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
