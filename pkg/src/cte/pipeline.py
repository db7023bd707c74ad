"""Manifest-driven scoring pipeline: score, aggregate, rank, evaluate.

One run reads a manifest, computes the chosen consistency metric for
every (model, image, perturbation) cell, reduces to one score per model,
ranks the models and, when the manifest carries ground-truth performance
numbers, correlates the two rankings.  Cells are independent, so scoring
can fan out over a thread pool; results are reduced in manifest order so
parallelism never changes any output byte.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from cte import rankstats, schema
from cte.aggregate import TransferRecord, aggregate, rank
from cte.consistency import (
    ars_consistency,
    degenerate_output_flag,
    ei_consistency,
    nhd_consistency,
)
from cte.errors import ValidationError
from cte.manifest import Manifest, load_manifest
from cte.rankstats import evaluate

logger = logging.getLogger(__name__)

METRICS = ("ei", "nhd", "ars")


@dataclass
class RunConfig:
    manifest: Path
    out_dir: Path
    metric: str = "nhd"
    per_class: bool = False
    alpha: float = 0.5
    seed: int = rankstats.PERM_SEED
    jobs: int = 1

    def __post_init__(self) -> None:
        self.manifest = Path(self.manifest)
        self.out_dir = Path(self.out_dir)
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r} (one of {METRICS})")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.jobs < 1:
            raise ValidationError(f"jobs must be >= 1, got {self.jobs}")


def check_metric_task(metric: str, task: str) -> None:
    """ARS pairs with instance maps, EI/NHD with semantic maps, never across."""
    if metric == "ars" and task != "instance":
        raise ValidationError(f"metric 'ars' needs an instance manifest, got task {task!r}")
    if metric in ("ei", "nhd") and task == "instance":
        raise ValidationError(f"metric {metric!r} needs a semantic manifest, got task 'instance'")


def score_manifest(
    man: Manifest,
    metric: str,
    per_class: bool = False,
    alpha: float = 0.5,
    jobs: int = 1,
) -> tuple[list[tuple], dict[str, list[str]]]:
    """Consistency value for every perturbed cell in the manifest.

    Returns rows (model, image, perturbation, metric, value, n_effective)
    in manifest order, plus per-model degenerate-output warnings gathered
    from the reference predictions.
    """
    check_metric_task(metric, man.task)
    pairs = [(m, i) for m in man.model_ids for i in man.image_ids]

    def score_pair(pair: tuple[str, str]) -> tuple[list[tuple], str | None]:
        model_id, image_id = pair
        ref = man.load_bundle(model_id, image_id, None)
        flagged, note = degenerate_output_flag(ref.label_map)
        warning = f"image {image_id}: {note}" if flagged else None
        rows = []
        for pert_id in man.perturbed_ids(model_id, image_id):
            pert = man.load_bundle(model_id, image_id, pert_id)
            if metric == "ei":
                if ref.prob_map is None or pert.prob_map is None:
                    raise ValidationError(
                        f"({model_id}, {image_id}, {pert_id}): EI needs probability "
                        "maps, but the prediction files are integer label maps"
                    )
                cv = ei_consistency(
                    ref.prob_map, ref.label_map, pert.prob_map, pert.label_map,
                    per_class=per_class,
                )
            elif metric == "nhd":
                cv = nhd_consistency(ref.label_map, pert.label_map, man.num_classes)
            else:
                cv = ars_consistency(ref.label_map, pert.label_map, alpha)
            rows.append((model_id, image_id, pert_id, cv.metric, cv.value, cv.n_effective))
        return rows, warning

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(score_pair, pairs))
    else:
        results = [score_pair(pair) for pair in pairs]

    all_rows: list[tuple] = []
    warnings: dict[str, list[str]] = {}
    for (model_id, _), (rows, warning) in zip(pairs, results):
        all_rows.extend(rows)
        if warning is not None:
            warnings.setdefault(model_id, []).append(warning)
    return all_rows, warnings


def rows_to_table(rows) -> dict[tuple[str, str, str], float]:
    table: dict[tuple[str, str, str], float] = {}
    for model_id, image_id, pert_id, _metric, value, _n in rows:
        key = (model_id, image_id, pert_id)
        if key in table:
            raise ValidationError(f"duplicate score row for {key}")
        table[key] = float(value)
    return table


def read_scores_csv(
    path: str | Path,
) -> tuple[dict[tuple[str, str, str], float], dict, str]:
    """Parse a scores CSV back into a table, grid structure and metric.

    The grid (which perturbations each (model, image) pair was scored
    with) is inferred from the rows themselves; every model must cover
    the same image set, and all rows must carry one metric.
    """
    raw = schema.read_csv(path, schema.SCORES_CSV_HEADER)
    if not raw:
        raise ValidationError(f"{path}: no score rows")
    table: dict[tuple[str, str, str], float] = {}
    cells: dict[tuple[str, str], list[str]] = {}
    images_of: dict[str, set] = {}
    metrics = set()
    for row in raw:
        key = (row["model"], row["image"], row["perturbation"])
        if key in table:
            raise ValidationError(f"{path}: duplicate score row for {key}")
        try:
            table[key] = float(row["value"])
        except ValueError:
            raise ValidationError(f"{path}: bad value {row['value']!r} for {key}") from None
        metrics.add(row["metric"])
        cells.setdefault(key[:2], []).append(key[2])
        images_of.setdefault(row["model"], set()).add(row["image"])
    image_sets = {frozenset(s) for s in images_of.values()}
    if len(image_sets) > 1:
        raise ValidationError(f"{path}: models cover different image sets")
    if len(metrics) != 1:
        raise ValidationError(f"{path}: rows mix metrics {sorted(metrics)}")
    return table, cells, metrics.pop().lower()


def read_performance_csv(path: str | Path) -> dict[str, float]:
    raw = schema.read_csv(path, schema.PERFORMANCE_CSV_HEADER)
    performance: dict[str, float] = {}
    for row in raw:
        model = row["model"]
        if model in performance:
            raise ValidationError(f"{path}: duplicate model key {model!r}")
        performance[model] = float(row["performance"])
    return performance


def write_ranking(out_dir: Path, ranking, records, *, dataset_id, metric, per_class, alpha):
    payload = schema.ranking_payload(
        ranking, records, dataset_id=dataset_id, metric=metric,
        per_class=per_class, alpha=alpha,
    )
    schema.atomic_write_text(out_dir / schema.RANKING_JSON_NAME, schema.canonical_json(payload))
    csv_rows = [
        (pos, model_id, score, payload["models"][pos - 1]["n_images"])
        for pos, (model_id, score) in enumerate(zip(ranking.model_ids, ranking.scores), start=1)
    ]
    schema.atomic_write_text(
        out_dir / schema.RANKING_CSV_NAME,
        schema.csv_text(schema.RANKING_CSV_HEADER, csv_rows),
    )


def write_report(out_dir: Path, report, cte_scores, performance):
    payload = schema.report_payload(report, cte_scores, performance)
    schema.atomic_write_text(out_dir / schema.REPORT_JSON_NAME, schema.canonical_json(payload))
    models = list(report.models)
    svg = rankstats.scatter_svg(
        [cte_scores[m] for m in models],
        [performance[m] for m in models],
        models,
        x_label="consistency score (CTE)",
        y_label="performance",
        title=f"n={report.n}, tau={report.kendall_tau:.3f}{rankstats.significance(report.kendall_p)}",
    )
    schema.atomic_write_text(out_dir / schema.SCATTER_SVG_NAME, svg)


def run_pipeline(config: RunConfig) -> dict[str, Path]:
    """Full run; returns the artifact paths that were written."""
    man = load_manifest(config.manifest)
    check_metric_task(config.metric, man.task)
    rows, warnings = score_manifest(
        man, config.metric, per_class=config.per_class, alpha=config.alpha, jobs=config.jobs
    )
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}

    scores_path = out / schema.SCORES_CSV_NAME
    schema.atomic_write_text(scores_path, schema.csv_text(schema.SCORES_CSV_HEADER, rows))
    artifacts["scores"] = scores_path

    cells = {
        (m, i): man.perturbed_ids(m, i) for m in man.model_ids for i in man.image_ids
    }
    records = aggregate(rows_to_table(rows), cells, dataset_id=man.dataset_id, warnings=warnings)
    ranking = rank(records)
    write_ranking(
        out, ranking, records, dataset_id=man.dataset_id, metric=config.metric,
        per_class=config.per_class, alpha=config.alpha if config.metric == "ars" else None,
    )
    artifacts["ranking_json"] = out / schema.RANKING_JSON_NAME
    artifacts["ranking_csv"] = out / schema.RANKING_CSV_NAME

    if man.performance is not None:
        cte_scores = {rec.model_id: rec.cte for rec in records}
        report = evaluate(cte_scores, man.performance, seed=config.seed)
        write_report(out, report, cte_scores, man.performance)
        artifacts["report"] = out / schema.REPORT_JSON_NAME
        artifacts["scatter"] = out / schema.SCATTER_SVG_NAME
    else:
        logger.info("manifest carries no performance scores; evaluation skipped")

    schema.write_run_meta(
        out,
        {
            "manifest": str(config.manifest),
            "metric": config.metric,
            "per_class": config.per_class,
            "alpha": config.alpha,
            "seed": config.seed,
            "jobs": config.jobs,
            "schema_version": schema.SCHEMA_VERSION,
        },
    )
    return artifacts
