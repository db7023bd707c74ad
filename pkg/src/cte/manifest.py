"""Experiment manifest: binds models, images, perturbations and predictions.

A manifest is a single JSON document; relative prediction paths resolve
against the directory holding it, so experiment folders stay relocatable.
Each prediction row points at one NPY file.  Floating files are read as
probability maps and a label map is derived from them (threshold 0.5 for
binary, channel argmax for multiclass); integer files carry a label map
only, which is how instance predictions arrive.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cte.arrays import LabelMap, ProbMap, read_array
from cte.errors import ManifestError, ValidationError
from cte.perturb import PerturbationSpec

TASKS = ("semantic-binary", "semantic-multiclass", "instance")

PredKey = tuple[str, str, str | None]


@dataclass
class PredictionBundle:
    """One prediction: label map plus the probability map it came from.

    ``prob_map`` is None for integer prediction files (instance ids have
    no probabilistic reading).  ``perturbation_id`` None marks the
    unperturbed reference pass.
    """

    image_id: str
    model_id: str
    perturbation_id: str | None
    label_map: LabelMap
    prob_map: ProbMap | None = None

    def __post_init__(self) -> None:
        if self.prob_map is not None:
            lh, lw = self.label_map.values.shape
            if self.prob_map.spatial_shape != (lh, lw):
                raise ValidationError(
                    f"prediction ({self.model_id}, {self.image_id}, {self.perturbation_id}): "
                    f"label map {lh}x{lw} and prob map {self.prob_map.spatial_shape} disagree"
                )


@dataclass
class Manifest:
    dataset_id: str
    task: str
    num_classes: int | None
    model_ids: list[str]
    image_ids: list[str]
    perturbations: list[PerturbationSpec]
    predictions: dict[PredKey, Path]
    performance: dict[str, float] | None = None
    root: Path = field(default_factory=Path)

    @property
    def n_models(self) -> int:
        return len(self.model_ids)

    @property
    def n_images(self) -> int:
        return len(self.image_ids)

    @property
    def n_perturbations(self) -> int:
        return len(self.perturbations)

    def perturbation_ids(self) -> list[str]:
        return [spec.id for spec in self.perturbations]

    def reference_path(self, model_id: str, image_id: str) -> Path:
        return self.predictions[(model_id, image_id, None)]

    def perturbed_ids(self, model_id: str, image_id: str) -> list[str]:
        """Perturbation ids with a prediction for this pair, in manifest order."""
        return [
            spec.id
            for spec in self.perturbations
            if (model_id, image_id, spec.id) in self.predictions
        ]

    def load_bundle(
        self, model_id: str, image_id: str, perturbation_id: str | None
    ) -> PredictionBundle:
        """Read and validate one prediction file against the manifest's task."""
        key = (model_id, image_id, perturbation_id)
        try:
            path = self.predictions[key]
        except KeyError:
            raise ManifestError(f"no prediction registered for {key}") from None
        arr = read_array(path)
        if isinstance(arr, ProbMap):
            if self.task == "instance":
                raise ValidationError(
                    f"{path}: instance predictions must be integer label files"
                )
            if self.task == "semantic-binary" and arr.values.ndim != 2:
                raise ValidationError(
                    f"{path}: semantic-binary expects an HxW foreground-probability file, "
                    f"got shape {arr.values.shape}"
                )
            if self.task == "semantic-multiclass":
                if arr.values.ndim != 3 or arr.num_classes != self.num_classes:
                    raise ValidationError(
                        f"{path}: semantic-multiclass expects CxHxW with C={self.num_classes}, "
                        f"got shape {arr.values.shape}"
                    )
            label = arr.argmax_labels()
            return PredictionBundle(image_id, model_id, perturbation_id, label, arr)
        if self.task != "instance":
            arr.validate(num_classes=self.num_classes)
        return PredictionBundle(image_id, model_id, perturbation_id, arr)


def _require(raw: dict, key: str, path: Path):
    if key not in raw:
        raise ManifestError(f"{path}: manifest is missing required key {key!r}")
    return raw[key]


def _id_list(raw, name: str, path: Path) -> list[str]:
    if not isinstance(raw, list) or not raw:
        raise ManifestError(f"{path}: {name!r} must be a non-empty list")
    ids = [str(v) for v in raw]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"{path}: duplicate entries in {name!r}")
    return ids


def load_manifest(path: str | Path) -> Manifest:
    """Parse and cross-check a manifest JSON file.

    Structural violations (bad schema, duplicate keys, incomplete
    (model, image) coverage) raise ManifestError; prediction paths that
    do not point at an existing file raise FileNotFoundError, since that
    is an I/O condition rather than a malformed document.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    root = path.parent

    dataset_id = str(_require(raw, "dataset_id", path))
    task = _require(raw, "task", path)
    if task not in TASKS:
        raise ManifestError(f"{path}: unknown task {task!r} (one of {TASKS})")
    num_classes = _require(raw, "num_classes", path)
    if task == "instance":
        if num_classes is not None:
            raise ManifestError(f"{path}: num_classes must be null for instance task")
    else:
        if not isinstance(num_classes, int) or num_classes < 2:
            raise ManifestError(f"{path}: num_classes must be an integer >= 2, got {num_classes!r}")
        if task == "semantic-binary" and num_classes != 2:
            raise ManifestError(f"{path}: semantic-binary requires num_classes = 2")

    model_ids = _id_list(_require(raw, "models", path), "models", path)
    image_ids = _id_list(_require(raw, "images", path), "images", path)

    raw_perts = _require(raw, "perturbations", path)
    if not isinstance(raw_perts, list) or not raw_perts:
        raise ManifestError(f"{path}: 'perturbations' must be a non-empty list")
    try:
        perturbations = [PerturbationSpec.from_dict(entry) for entry in raw_perts]
    except ValidationError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    pert_ids: set[str] = set()
    for spec in perturbations:
        if spec.id in pert_ids:
            raise ManifestError(f"{path}: duplicate perturbation id {spec.id!r}")
        pert_ids.add(spec.id)

    raw_preds = _require(raw, "predictions", path)
    if not isinstance(raw_preds, list):
        raise ManifestError(f"{path}: 'predictions' must be a list")
    predictions: dict[PredKey, Path] = {}
    model_set, image_set = set(model_ids), set(image_ids)
    for entry in raw_preds:
        if not isinstance(entry, dict):
            raise ManifestError(f"{path}: prediction rows must be objects, got {entry!r}")
        for k in ("model", "image", "path"):
            if k not in entry:
                raise ManifestError(f"{path}: prediction row missing {k!r}: {entry!r}")
        model, image = str(entry["model"]), str(entry["image"])
        pert = entry.get("perturbation")
        pert = None if pert is None else str(pert)
        if model not in model_set:
            raise ManifestError(f"{path}: prediction references undeclared model {model!r}")
        if image not in image_set:
            raise ManifestError(f"{path}: prediction references undeclared image {image!r}")
        if pert is not None and pert not in pert_ids:
            raise ManifestError(f"{path}: prediction references undeclared perturbation {pert!r}")
        key = (model, image, pert)
        if key in predictions:
            raise ManifestError(f"{path}: duplicate prediction key {key}")
        predictions[key] = root / str(entry["path"])

    for model in model_ids:
        for image in image_ids:
            if (model, image, None) not in predictions:
                raise ManifestError(
                    f"{path}: no unperturbed reference prediction for ({model!r}, {image!r})"
                )
            n_pert = sum(1 for p in pert_ids if (model, image, p) in predictions)
            if n_pert == 0:
                raise ManifestError(
                    f"{path}: no perturbed prediction for ({model!r}, {image!r})"
                )

    for key, pred_path in predictions.items():
        if not pred_path.is_file():
            raise FileNotFoundError(f"{path}: prediction {key} points at missing file {pred_path}")

    performance = None
    if raw.get("performance") is not None:
        perf_raw = raw["performance"]
        if not isinstance(perf_raw, dict):
            raise ManifestError(f"{path}: 'performance' must be an object")
        performance = {}
        for model, score in perf_raw.items():
            if model not in model_set:
                raise ManifestError(f"{path}: performance entry for undeclared model {model!r}")
            score = float(score)
            if not np.isfinite(score):
                raise ManifestError(f"{path}: performance for {model!r} is not finite")
            performance[model] = score

    return Manifest(
        dataset_id=dataset_id,
        task=task,
        num_classes=num_classes,
        model_ids=model_ids,
        image_ids=image_ids,
        perturbations=perturbations,
        predictions=predictions,
        performance=performance,
        root=root,
    )
