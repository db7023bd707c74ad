"""Desk-scale synthetic transfer study.

Fabricates scenes of noisy disks, a ladder of toy segmentation models of
strictly decreasing quality, and a full prediction folder (manifest plus
NPY files) that exercises the real perturbation engine and pipeline end
to end.  The point is a self-contained check that the consistency ranking
tracks true performance; nothing here is needed to score real models, and
deleting this module leaves the rest of the toolkit intact.

A toy model blurs the input with a model-specific kernel width and adds a
model-specific pseudo-random logit noise field, then squashes through a
sigmoid.  The noise field is keyed by (study seed, model, image), so a
model is a deterministic function of the image id: the same field is
present in the clean and the perturbed pass, and prediction differences
are caused by the input perturbation alone, scaled up by how close the
model's logits sit to the decision threshold.  Noise amplitude dominates
the quality ladder; kernel width ramps only mildly because stronger blur
attenuates input perturbations and would otherwise reward bad models with
extra stability.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from scipy import ndimage

from cte import rng, schema
from cte.arrays import LabelMap
from cte.consistency import ars_consistency
from cte.errors import CTEError, ValidationError
from cte.manifest import load_manifest
from cte.npyio import write_npy
from cte.perturb import PerturbationSpec, apply_spec
from cte.pipeline import RunConfig, run_pipeline
from cte.rankstats import CorrelationReport, PERM_SEED

logger = logging.getLogger(__name__)

SCENE_SIZE = 64
DISK_COUNT = (3, 6)
DISK_RADIUS = (5.0, 10.0)
FG_RANGE = (0.05, 0.6)
BACKGROUND_LEVEL = 0.3
FOREGROUND_LIFT = 0.4
TEXTURE_SIGMA = 0.04
GAIN = 25.0
BLUR_RANGE = (0.8, 0.92)
NOISE_MAX = 0.14
NOISE_SHAPE = 0.7
PERT_SIGMA_RANGE = (0.05, 0.06)
MAX_SCENE_TRIES = 64


def ladder(n_models: int) -> list[tuple[float, float]]:
    """Quality ladder: (blur width, logit noise amplitude) per model.

    The noise ramp is convex (exponent < 1) so adjacent low-noise models
    are spaced widely enough that their expected scores stay strictly
    ordered despite per-scene variance.  The amplitude cap keeps every
    model inside the regime where output consistency still degrades
    monotonically with noise; past roughly the decision margin the
    flipped-pixel density saturates and consistency recovers, which
    would invert the ranking signal.
    """
    steps = np.arange(n_models) / (n_models - 1)
    widths = BLUR_RANGE[0] + (BLUR_RANGE[1] - BLUR_RANGE[0]) * steps
    amps = NOISE_MAX * steps**NOISE_SHAPE
    return [(float(w), float(a)) for w, a in zip(widths, amps)]


def _render_scene(key: int) -> np.ndarray:
    """Boolean disk-union mask from one try's uniform draws."""
    u = rng.uniforms(key, 1 + 3 * DISK_COUNT[1])
    n_disks = DISK_COUNT[0] + int(u[0] * (DISK_COUNT[1] - DISK_COUNT[0] + 1))
    yy, xx = np.ogrid[:SCENE_SIZE, :SCENE_SIZE]
    mask = np.zeros((SCENE_SIZE, SCENE_SIZE), dtype=bool)
    for d in range(n_disks):
        cx = SCENE_SIZE * u[1 + 3 * d]
        cy = SCENE_SIZE * u[2 + 3 * d]
        r = DISK_RADIUS[0] + (DISK_RADIUS[1] - DISK_RADIUS[0]) * u[3 + 3 * d]
        mask |= (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    return mask


def _forward(image: np.ndarray, width: float, amp: float, noise: np.ndarray) -> np.ndarray:
    """Toy model forward pass; float32 foreground probabilities."""
    s = ndimage.gaussian_filter(image, sigma=width, mode="nearest") + amp * noise
    prob = 1.0 / (1.0 + np.exp(-GAIN * (s - 0.5)))
    return prob.astype(np.float32)


def _labels_of(prob32: np.ndarray) -> np.ndarray:
    return prob32 >= np.float32(0.5)


def _model_noise(seed: int, model_id: str, image_id: str) -> np.ndarray:
    return rng.normal_field(
        rng.derive_key(seed, "toymodel", model_id, image_id), (SCENE_SIZE, SCENE_SIZE)
    )


def _make_scene(
    seed: int, index: int, image_id: str, model_params: list[tuple[float, float]],
    model_ids: list[str],
) -> tuple[np.ndarray, np.ndarray]:
    """One accepted scene: (ground-truth mask, rendered image).

    Scenes are retried deterministically until the ground-truth foreground
    fraction is reasonable and every ladder model segments a nonempty
    foreground on the clean image (an all-background reference would make
    instance consistency undefined downstream).
    """
    noises = [_model_noise(seed, m, image_id) for m in model_ids]
    for t in range(MAX_SCENE_TRIES):
        key = rng.derive_key(seed, "scene", index, "try", t)
        mask = _render_scene(key)
        frac = float(mask.mean())
        if not FG_RANGE[0] <= frac <= FG_RANGE[1]:
            continue
        texture = rng.normal_field(
            rng.derive_key(seed, "scene", index, "try", t, "texture"),
            (SCENE_SIZE, SCENE_SIZE),
        )
        image = BACKGROUND_LEVEL + FOREGROUND_LIFT * mask + TEXTURE_SIGMA * texture
        ok = all(
            _labels_of(_forward(image, w, a, noise)).any()
            for (w, a), noise in zip(model_params, noises)
        )
        if ok:
            return mask, image
    raise CTEError(f"no acceptable scene for image {image_id} after {MAX_SCENE_TRIES} tries")


def _f1(pred: np.ndarray, truth: np.ndarray) -> float:
    """Dice overlap of binary masks; truth is never empty here."""
    tp = int(np.count_nonzero(pred & truth))
    return 2.0 * tp / (int(np.count_nonzero(pred)) + int(np.count_nonzero(truth)))


def _instances(mask: np.ndarray) -> np.ndarray:
    labels, _ = ndimage.label(mask)
    return labels.astype(np.uint16)


def generate_study(
    out_dir: str | Path,
    task: str = "semantic",
    n_models: int = 8,
    n_images: int = 16,
    seed: int = 7,
    model_params: list[tuple[float, float]] | None = None,
) -> Path:
    """Materialize a complete study folder; returns the manifest path.

    The folder holds input images, perturbed images, one clean and one
    Gaussian-perturbed prediction per (model, image), and a manifest that
    records each model's true performance on the scene ground truth (mean
    F1 for semantic, mean adapted Rand score against the ground-truth
    instances for instance).  Everything is a pure function of the
    arguments, so regeneration is byte-identical.

    ``model_params`` overrides the built-in ladder; the built-in ladder is
    checked for strictly decreasing performance, overrides are taken as
    given.
    """
    if task not in ("semantic", "instance"):
        raise ValidationError(f"task must be 'semantic' or 'instance', got {task!r}")
    if n_models < 4:
        raise ValidationError(f"need at least 4 models, got {n_models}")
    if n_images < 8:
        raise ValidationError(f"need at least 8 images, got {n_images}")
    check_ladder = model_params is None
    params = ladder(n_models) if model_params is None else [
        (float(w), float(a)) for w, a in model_params
    ]
    if len(params) != n_models:
        raise ValidationError(f"model_params holds {len(params)} entries for {n_models} models")

    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    perturbed_dir = out_dir / "perturbed"
    pred_dir = out_dir / "predictions"
    for d in (images_dir, perturbed_dir, pred_dir):
        d.mkdir(parents=True, exist_ok=True)

    model_ids = [f"m{j}" for j in range(n_models)]
    image_ids = [f"img{i:03d}" for i in range(n_images)]
    spec = PerturbationSpec(
        id="gauss0",
        kind="gauss",
        strength_range=PERT_SIGMA_RANGE,
        seed=rng.derive_key(seed, "pertspec", "gauss0"),
    )

    predictions = []
    perf_sums = np.zeros(n_models, dtype=np.float64)
    for index, image_id in enumerate(image_ids):
        gt_mask, image = _make_scene(seed, index, image_id, params, model_ids)
        write_npy(images_dir / f"{image_id}.npy", image)
        perturbed, _strength = apply_spec(spec, image, image_id)
        write_npy(perturbed_dir / f"{image_id}__{spec.id}.npy", perturbed)
        gt_instances = _instances(gt_mask) if task == "instance" else None

        for j, (model_id, (width, amp)) in enumerate(zip(model_ids, params)):
            noise = _model_noise(seed, model_id, image_id)
            prob_clean = _forward(image, width, amp, noise)
            prob_pert = _forward(perturbed, width, amp, noise)
            for pert_id, prob in ((None, prob_clean), (spec.id, prob_pert)):
                stem = f"{model_id}__{image_id}__{'ref' if pert_id is None else pert_id}"
                path = pred_dir / f"{stem}.npy"
                if task == "semantic":
                    write_npy(path, prob)
                else:
                    write_npy(path, _instances(_labels_of(prob)))
                predictions.append(
                    {
                        "model": model_id,
                        "image": image_id,
                        "perturbation": pert_id,
                        "path": str(path.relative_to(out_dir)),
                    }
                )
            clean_labels = _labels_of(prob_clean)
            if task == "semantic":
                perf_sums[j] += _f1(clean_labels, gt_mask)
            else:
                perf_sums[j] += ars_consistency(
                    LabelMap(gt_instances), LabelMap(_instances(clean_labels)), 0.5
                ).value

    performance = {m: float(perf_sums[j] / n_images) for j, m in enumerate(model_ids)}
    if check_ladder:
        values = [performance[m] for m in model_ids]
        drops = [values[j] - values[j + 1] for j in range(n_models - 1)]
        if min(drops) <= 0.0:
            raise CTEError(
                "ladder construction failed: performance not strictly decreasing "
                f"({['%.4f' % v for v in values]})"
            )

    manifest = {
        "dataset_id": f"synth-{task}-seed{seed}",
        "task": "semantic-binary" if task == "semantic" else "instance",
        "num_classes": 2 if task == "semantic" else None,
        "models": model_ids,
        "images": image_ids,
        "perturbations": [spec.to_dict()],
        "predictions": predictions,
        "performance": performance,
    }
    manifest_path = out_dir / "manifest.json"
    schema.atomic_write_text(manifest_path, schema.canonical_json(manifest))
    logger.info("study written to %s (%d prediction files)", out_dir, len(predictions))
    return manifest_path


def run_study(
    folder: str | Path,
    out_dir: str | Path | None = None,
    metric: str | None = None,
    seed: int = PERM_SEED,
    jobs: int = 1,
) -> CorrelationReport:
    """Score a study folder through the real pipeline; returns the report.

    The metric defaults to the task's natural one (NHD for semantic, ARS
    for instance).  Artifacts land in ``<folder>/results`` unless an
    output directory is given.
    """
    folder = Path(folder)
    manifest_path = folder / "manifest.json" if folder.is_dir() else folder
    man = load_manifest(manifest_path)
    if man.performance is None:
        raise ValidationError(f"{manifest_path}: study has no recorded performance")
    if metric is None:
        metric = "ars" if man.task == "instance" else "nhd"
    config = RunConfig(
        manifest=manifest_path,
        out_dir=Path(out_dir) if out_dir is not None else manifest_path.parent / "results",
        metric=metric,
        seed=seed,
        jobs=jobs,
    )
    run_pipeline(config)
    with open(config.out_dir / schema.REPORT_JSON_NAME, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return CorrelationReport(
        n=payload["n"],
        models=tuple(payload["models"]),
        kendall_tau=payload["kendall_tau"]["coefficient"],
        kendall_p=payload["kendall_tau"]["p_value"],
        spearman_rho=payload["spearman_rho"]["coefficient"],
        spearman_p=payload["spearman_rho"]["p_value"],
        pearson_r=payload["pearson_r"]["coefficient"],
        pearson_p=payload["pearson_r"]["p_value"],
        method=payload["method"],
    )
