"""Export predictions for a model set into a cte experiment folder.

Input-space perturbations are never re-implemented here: the harness
shells out to the installed ``cte perturb`` command and feeds the exact
pixels it wrote back through the models, so both components always see
the same perturbed images.  Feature-space dropout runs inside the
network via forward hooks (see ``dropout``).

The emitted folder (manifest.json plus one NPY per prediction) is the
cte toolkit's native input format and passes its manifest validation.
"""

from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from cte_adapter.arrayio import read_array, write_array
from cte_adapter.dropout import PLACEMENTS, resolve_placement, spatial_dropout
from cte_adapter.errors import AdapterError
from cte_adapter.models import ModelSpec, build_model
from cte_adapter.rng import derive_key, uniform_in

logger = logging.getLogger("cte_adapter")

INPUT_KINDS = ("gauss", "brightness", "contrast", "gamma")
FEATURE_KINDS = ("feature-dropout",)


@dataclass(frozen=True)
class AdapterContract:
    """One export job: models to run, images to segment, folder to fill."""

    model_specs: tuple[ModelSpec, ...]
    spec_dir: Path
    images_dir: Path
    perturbations_path: Path
    out_dir: Path
    cte_bin: str = "cte"
    dataset_id: str = ""


def load_perturbations(path: str | Path) -> list[dict]:
    """Raw perturbation spec dicts, structurally validated.

    The dicts pass through to the manifest untouched; full semantic
    validation is the cte toolkit's job.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise AdapterError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, list) or not raw:
        raise AdapterError(f"{path}: expected a non-empty JSON list of perturbation specs")
    seen = set()
    for entry in raw:
        if not isinstance(entry, dict):
            raise AdapterError(f"{path}: spec entries must be objects, got {entry!r}")
        for field in ("id", "kind", "strength_range"):
            if field not in entry:
                raise AdapterError(f"{path}: spec {entry!r} lacks {field!r}")
        if entry["id"] in seen:
            raise AdapterError(f"{path}: duplicate perturbation id {entry['id']!r}")
        seen.add(entry["id"])
        kind = entry["kind"]
        if kind not in INPUT_KINDS + FEATURE_KINDS:
            raise AdapterError(f"{path}: unknown perturbation kind {kind!r}")
        lo, hi = entry["strength_range"]
        if not (float(lo) <= float(hi)):
            raise AdapterError(f"{path}: spec {entry['id']!r} has inverted strength_range")
        if kind in FEATURE_KINDS:
            placement = entry.get("placement", "input")
            if placement not in PLACEMENTS:
                raise AdapterError(
                    f"{path}: spec {entry['id']!r} needs a feature placement {PLACEMENTS}"
                )
            if not (0.0 < float(lo) and float(hi) < 1.0):
                raise AdapterError(
                    f"{path}: spec {entry['id']!r} dropout rate range must sit inside (0, 1)"
                )
    return raw


def _run_primary_perturb(contract: AdapterContract) -> Path:
    """Materialize input-space perturbations through the cte CLI."""
    inputs_dir = contract.out_dir / "inputs"
    cmd = [
        contract.cte_bin, "perturb",
        "--images", str(contract.images_dir),
        "--specs", str(contract.perturbations_path),
        "--out", str(inputs_dir),
    ]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True)
    except FileNotFoundError as exc:
        raise AdapterError(
            f"cannot run {contract.cte_bin!r}: install the cte package or pass --cte-bin"
        ) from exc
    if proc.returncode != 0:
        raise AdapterError(
            f"'{' '.join(cmd)}' failed with code {proc.returncode}: {proc.stderr.strip()}"
        )
    logger.info("primary perturb: %s", proc.stdout.strip())
    return inputs_dir


def _to_tensor(values: np.ndarray, origin: str) -> torch.Tensor:
    if values.ndim != 2:
        raise AdapterError(f"{origin}: expected a 2-D image, got shape {values.shape}")
    return torch.from_numpy(np.ascontiguousarray(values, dtype=np.float32))[None, None]


def _predict(model, x: torch.Tensor, spec: ModelSpec, origin: str) -> np.ndarray:
    try:
        with torch.no_grad():
            logits = model(x)
    except RuntimeError as exc:
        raise AdapterError(f"model {spec.id!r} failed on {origin}: {exc}") from exc
    if logits.ndim != 4 or logits.shape[0] != 1:
        raise AdapterError(
            f"model {spec.id!r}: expected (1, C, H, W) logits, got {tuple(logits.shape)}"
        )
    if spec.task == "semantic-binary":
        if logits.shape[1] != 1:
            raise AdapterError(
                f"model {spec.id!r}: binary task expects 1 logit channel, got {logits.shape[1]}"
            )
        probs = torch.sigmoid(logits[0, 0])
    else:
        if logits.shape[1] != spec.num_classes:
            raise AdapterError(
                f"model {spec.id!r}: expected {spec.num_classes} logit channels, "
                f"got {logits.shape[1]}"
            )
        probs = torch.softmax(logits[0], dim=0)
    return probs.numpy().astype("<f4", copy=False)


def export_predictions(contract: AdapterContract) -> Path:
    """Run every model on clean and perturbed inputs; write the folder.

    Returns the manifest path.  Sequential over models; each prediction
    is one forward pass with frozen weights.
    """
    image_paths = sorted(Path(contract.images_dir).glob("*.npy"))
    if not image_paths:
        raise AdapterError(f"{contract.images_dir}: no .npy images found")
    image_ids = [p.stem for p in image_paths]

    pert_specs = load_perturbations(contract.perturbations_path)
    input_specs = [s for s in pert_specs if s["kind"] in INPUT_KINDS]
    dropout_specs = [s for s in pert_specs if s["kind"] in FEATURE_KINDS]

    contract.out_dir.mkdir(parents=True, exist_ok=True)
    inputs_dir = _run_primary_perturb(contract) if input_specs else None

    predictions = []
    for spec in contract.model_specs:
        model = build_model(spec, contract.spec_dir)
        for layer_spec in dropout_specs:
            resolve_placement(model, spec, layer_spec.get("placement"))  # fail fast
        for image_id, image_path in zip(image_ids, image_paths):
            clean = _to_tensor(read_array(image_path), str(image_path))

            def emit(pert_id: str | None, probs: np.ndarray) -> None:
                tag = "ref" if pert_id is None else pert_id
                name = f"{spec.id}__{image_id}__{tag}.npy"
                write_array(contract.out_dir / name, probs)
                predictions.append(
                    {"model": spec.id, "image": image_id,
                     "perturbation": pert_id, "path": name}
                )

            emit(None, _predict(model, clean, spec, image_id))
            for pspec in input_specs:
                pert_path = inputs_dir / f"{image_id}__{pspec['id']}.npy"
                if not pert_path.exists():
                    raise AdapterError(
                        f"{pert_path}: primary perturb did not produce this file"
                    )
                x = _to_tensor(read_array(pert_path), str(pert_path))
                emit(pspec["id"], _predict(model, x, spec, image_id))
            for pspec in dropout_specs:
                layers = resolve_placement(model, spec, pspec.get("placement"))
                lo, hi = (float(v) for v in pspec["strength_range"])
                seed = int(pspec.get("seed", 0))
                p_d = uniform_in(lo, hi, derive_key(seed, "strength", image_id))
                mask_key = derive_key(seed, "dropout", spec.id, image_id)
                with spatial_dropout(model, layers, p_d, mask_key):
                    probs = _predict(model, clean, spec, image_id)
                emit(pspec["id"], probs)

    first = contract.model_specs[0]
    performance = None
    if all(spec.performance is not None for spec in contract.model_specs):
        performance = {spec.id: spec.performance for spec in contract.model_specs}
    manifest = {
        "dataset_id": contract.dataset_id or Path(contract.images_dir).name,
        "task": first.task,
        "num_classes": first.num_classes,
        "models": [spec.id for spec in contract.model_specs],
        "images": image_ids,
        "perturbations": pert_specs,
        "predictions": predictions,
        "performance": performance,
    }
    manifest_path = contract.out_dir / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest_path
