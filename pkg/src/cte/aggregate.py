"""Score aggregation and model ranking.

Per-cell consistency values are reduced in two stages: arithmetic mean
over each image's perturbations, then median over images (midpoint of
the two central values for even counts; the median keeps a handful of
pathological images from dominating a model's score).  Models are ranked
by the aggregate in descending order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from cte.errors import MissingCellError, ValidationError


@dataclass
class TransferRecord:
    """Aggregated consistency of one model on one target dataset."""

    model_id: str
    dataset_id: str
    per_image: dict[str, float]
    cte: float
    n_images: int
    degenerate_warnings: list[str] = field(default_factory=list)


@dataclass
class Ranking:
    """Descending-score order over a model set.

    ``tie_groups`` lists every maximal group of models sharing one score,
    in rank order; groups are only reported when they hold two or more
    models.  Within a group the order is lexicographic by model id.
    """

    model_ids: list[str]
    scores: list[float]
    tie_groups: list[list[str]] = field(default_factory=list)


def aggregate(
    scores: Mapping[tuple[str, str, str], float],
    cells: Mapping[tuple[str, str], Sequence[str]],
    dataset_id: str = "",
    warnings: Mapping[str, Sequence[str]] | None = None,
) -> list[TransferRecord]:
    """Reduce a per-(model, image, perturbation) score table.

    ``cells`` declares which perturbation ids each (model, image) pair
    must have been scored with; a table missing any declared cell is
    rejected with the offending triple named.  ``warnings`` optionally
    carries per-model degenerate-output reports to attach.
    """
    models: list[str] = []
    images_of: dict[str, list[str]] = {}
    for model_id, image_id in cells:
        if model_id not in images_of:
            models.append(model_id)
            images_of[model_id] = []
        images_of[model_id].append(image_id)

    declared = set()
    records = []
    for model_id in models:
        per_image: dict[str, float] = {}
        for image_id in images_of[model_id]:
            pert_ids = cells[(model_id, image_id)]
            if not pert_ids:
                raise MissingCellError(
                    f"no perturbations declared for ({model_id!r}, {image_id!r})"
                )
            values = []
            for pert_id in pert_ids:
                key = (model_id, image_id, pert_id)
                declared.add(key)
                if key not in scores:
                    raise MissingCellError(f"score table is missing cell {key}")
                values.append(float(scores[key]))
            per_image[image_id] = float(np.mean(values))
        cte = float(np.median(list(per_image.values())))
        model_warnings = list(warnings.get(model_id, [])) if warnings else []
        records.append(
            TransferRecord(
                model_id=model_id,
                dataset_id=dataset_id,
                per_image=per_image,
                cte=cte,
                n_images=len(per_image),
                degenerate_warnings=model_warnings,
            )
        )

    stray = set(scores) - declared
    if stray:
        raise ValidationError(f"score table holds undeclared cells: {sorted(stray)[:3]}")
    return records


def rank(records: Sequence[TransferRecord]) -> Ranking:
    """Descending-CTE order; ties broken lexicographically and reported."""
    if len(records) < 2:
        raise ValidationError(f"ranking needs at least 2 models, got {len(records)}")
    seen = set()
    for rec in records:
        if rec.model_id in seen:
            raise ValidationError(f"duplicate model id {rec.model_id!r} in records")
        seen.add(rec.model_id)
    ordered = sorted(records, key=lambda rec: (-rec.cte, rec.model_id))
    model_ids = [rec.model_id for rec in ordered]
    scores = [rec.cte for rec in ordered]
    tie_groups = []
    start = 0
    for i in range(1, len(ordered) + 1):
        if i == len(ordered) or scores[i] != scores[start]:
            if i - start > 1:
                tie_groups.append(model_ids[start:i])
            start = i
    return Ranking(model_ids=model_ids, scores=scores, tie_groups=tie_groups)
