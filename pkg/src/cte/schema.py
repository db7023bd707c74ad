"""Frozen on-disk output formats.

Downstream comparison scripts parse the CSV and JSON artifacts, so their
headers and key sets are pinned here and versioned with SCHEMA_VERSION.
JSON is serialized canonically (sorted keys, two-space indent, trailing
newline) and all files are written atomically (temp file + rename), which
together make repeated runs byte-identical.  Anything time-dependent goes
to the run_meta sidecar, never into the comparable artifacts.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from cte.errors import ValidationError

SCHEMA_VERSION = 1

SCORES_CSV_HEADER = ("model", "image", "perturbation", "metric", "value", "n_effective")
RANKING_CSV_HEADER = ("rank", "model", "cte", "n_images")
PERFORMANCE_CSV_HEADER = ("model", "performance")

SCORES_CSV_NAME = "scores.csv"
RANKING_JSON_NAME = "ranking.json"
RANKING_CSV_NAME = "ranking.csv"
REPORT_JSON_NAME = "report.json"
SCATTER_SVG_NAME = "scatter.svg"
RUN_META_NAME = "run_meta.json"


def canonical_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def read_csv(path: str | Path, header: Sequence[str]) -> list[dict[str, str]]:
    """Read a CSV written by this toolkit; the header must match exactly."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty CSV") from None
        if tuple(found) != tuple(header):
            raise ValidationError(
                f"{path}: unexpected header {found!r}, wanted {list(header)!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append(dict(zip(header, row)))
    return rows


def ranking_payload(ranking, records, *, dataset_id: str, metric: str,
                    per_class: bool | None, alpha: float | None) -> dict:
    """JSON document for a ranking: ordered models, scores, ties, warnings."""
    by_id = {rec.model_id: rec for rec in records}
    entries = []
    for position, model_id in enumerate(ranking.model_ids, start=1):
        rec = by_id[model_id]
        entries.append(
            {
                "rank": position,
                "model": model_id,
                "cte": rec.cte,
                "n_images": rec.n_images,
                "degenerate_warnings": list(rec.degenerate_warnings),
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "ranking",
        "dataset_id": dataset_id,
        "metric": metric,
        "per_class": per_class,
        "alpha": alpha,
        "models": entries,
        "tie_groups": [list(group) for group in ranking.tie_groups],
    }


def report_payload(report, cte_scores: dict, performance: dict) -> dict:
    """JSON document for a correlation report plus the paired raw values."""
    payload = report.to_dict()
    payload["schema_version"] = SCHEMA_VERSION
    payload["kind"] = "report"
    payload["pairs"] = [
        {"model": m, "cte": float(cte_scores[m]), "performance": float(performance[m])}
        for m in report.models
    ]
    return payload


def write_run_meta(out_dir: str | Path, info: dict) -> Path:
    """Timestamped sidecar; the only artifact allowed to differ between runs."""
    payload = dict(info)
    payload["written_at"] = datetime.now(timezone.utc).isoformat()
    path = Path(out_dir) / RUN_META_NAME
    atomic_write_text(path, canonical_json(payload))
    return path
