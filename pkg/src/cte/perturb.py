"""Deterministic input-space perturbations.

Four pixel-space transformations are supported: additive Gaussian noise
(x' = x + N(0, sigma)), brightness shift (x' = x + b), contrast rescale
about the patch mean (x' = mu + c * (x - mu)) and gamma correction
(x' = x ** g).  A fifth kind, ``feature-dropout``, exists only as a
declarative contract: it is executed inside a model by an inference
adapter, never by this module.

One spec describes one transformation with a strength range; the actual
strength for an image is drawn once per (spec, image) from the
counter-based generator, so the whole sweep is reproducible from the
spec's seed alone.  No clipping is applied after gauss/brightness:
downstream models consume raw floats and clipping would bias the
effective noise level near intensity extremes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cte import rng
from cte.errors import ValidationError
from cte.npyio import read_npy, write_npy

logger = logging.getLogger(__name__)

INPUT_KINDS = ("gauss", "brightness", "contrast", "gamma")
KINDS = INPUT_KINDS + ("feature-dropout",)
PLACEMENTS = ("input", "all-layers", "bottleneck", "bottleneck+skips")


@dataclass(frozen=True)
class PerturbationSpec:
    """Declarative description of one perturbation instance."""

    id: str
    kind: str
    strength_range: tuple[float, float]
    placement: str = "input"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "strength_range", tuple(float(v) for v in self.strength_range))
        self.validate()

    def validate(self) -> None:
        if not self.id:
            raise ValidationError("perturbation spec needs a non-empty id")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown perturbation kind {self.kind!r} (one of {KINDS})")
        if self.placement not in PLACEMENTS:
            raise ValidationError(f"unknown placement {self.placement!r} (one of {PLACEMENTS})")
        if self.kind in INPUT_KINDS and self.placement != "input":
            raise ValidationError(f"kind {self.kind!r} must use placement 'input'")
        if self.kind == "feature-dropout" and self.placement == "input":
            raise ValidationError("feature-dropout needs a feature-space placement")
        lo, hi = self.strength_range
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValidationError("strength range must be finite")
        if lo > hi:
            raise ValidationError(f"strength range lo={lo} exceeds hi={hi}")
        if self.kind in ("gauss", "brightness") and lo < 0:
            raise ValidationError(f"{self.kind} strength must be >= 0, got lo={lo}")
        if self.kind in ("contrast", "gamma") and lo <= 0:
            raise ValidationError(f"{self.kind} strength must be > 0, got lo={lo}")
        if self.kind == "feature-dropout" and not (0.0 < lo <= hi < 1.0):
            raise ValidationError(f"dropout rate range must satisfy 0 < lo <= hi < 1, got [{lo}, {hi}]")

    @classmethod
    def from_dict(cls, raw: dict) -> "PerturbationSpec":
        try:
            return cls(
                id=str(raw["id"]),
                kind=str(raw["kind"]),
                strength_range=tuple(raw["strength_range"]),
                placement=str(raw.get("placement", "input")),
                seed=int(raw.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad perturbation spec {raw!r}: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "strength_range": list(self.strength_range),
            "placement": self.placement,
            "seed": self.seed,
        }


def sample_strength(spec: PerturbationSpec, image_id: str) -> float:
    """Uniform strength draw in the spec's range, fixed per (spec.seed, image)."""
    lo, hi = spec.strength_range
    key = rng.derive_key(spec.seed, "strength", image_id)
    return float(rng.uniform_in(key, lo, hi, 1)[0])


def _as_patch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ValidationError(f"image patch must be 2-D or 3-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("image patch contains NaN or Inf")
    return x


def apply_gauss(x: np.ndarray, sigma: float, noise_seed: int) -> np.ndarray:
    """Additive i.i.d. Gaussian noise with standard deviation ``sigma``.

    Noise is sampled elementwise over all channels from the stream keyed
    by ``noise_seed``; the same seed always reproduces the same field.
    """
    x = _as_patch(x)
    if sigma < 0:
        raise ValidationError(f"sigma must be >= 0, got {sigma}")
    noise = rng.normal_field(rng.derive_key(noise_seed, "gauss-field"), x.shape)
    return x + sigma * noise


def apply_brightness(x: np.ndarray, shift: float) -> np.ndarray:
    """Elementwise intensity shift."""
    return _as_patch(x) + shift


def apply_contrast(x: np.ndarray, factor: float) -> np.ndarray:
    """Mean-preserving rescale about the patch mean."""
    if factor <= 0:
        raise ValidationError(f"contrast factor must be > 0, got {factor}")
    x = _as_patch(x)
    if factor == 1.0:
        return x  # exact identity; mu + (x - mu) would reintroduce rounding
    mu = x.mean()
    return mu + factor * (x - mu)


def apply_gamma(x: np.ndarray, gamma: float) -> np.ndarray:
    """Elementwise power; negative inputs are clamped to 0 first."""
    if gamma <= 0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")
    x = _as_patch(x)
    n_neg = int(np.count_nonzero(x < 0))
    if n_neg:
        logger.warning("gamma correction: clamping %d negative values to 0", n_neg)
        x = np.maximum(x, 0.0)
    if gamma == 1.0:
        return x  # exact identity on the clamped patch
    return x**gamma


def apply_spec(spec: PerturbationSpec, x: np.ndarray, image_id: str) -> tuple[np.ndarray, float]:
    """Apply one input-space spec to one image; returns (perturbed, strength).

    Pure in (spec, x, image_id).  Feature-dropout specs are contract-only
    here and raise; forward them to the inference adapter instead.
    """
    if spec.kind == "feature-dropout":
        raise ValidationError(
            f"spec {spec.id!r}: feature-dropout runs inside the model adapter, "
            "not in the input-space engine"
        )
    strength = sample_strength(spec, image_id)
    if spec.kind == "gauss":
        noise_seed = rng.derive_key(spec.seed, "noise", image_id)
        return apply_gauss(x, strength, noise_seed), strength
    if spec.kind == "brightness":
        return apply_brightness(x, strength), strength
    if spec.kind == "contrast":
        return apply_contrast(x, strength), strength
    return apply_gamma(x, strength), strength


def load_spec_list(path: str | Path) -> list[PerturbationSpec]:
    """Read a JSON list of perturbation specs; ids must be unique."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise ValidationError(f"{path}: spec file must hold a JSON list")
    specs = [PerturbationSpec.from_dict(entry) for entry in raw]
    seen: set[str] = set()
    for spec in specs:
        if spec.id in seen:
            raise ValidationError(f"{path}: duplicate perturbation id {spec.id!r}")
        seen.add(spec.id)
    return specs


def perturb_folder(
    image_paths: list[Path], specs: list[PerturbationSpec], out_dir: str | Path
) -> list[dict]:
    """Engine behind the ``perturb`` CLI subcommand.

    Each image (NPY, float) is perturbed once per input-space spec and
    written to ``out_dir`` as ``<image_id>__<spec_id>.npy``; the returned
    provenance rows record every sampled strength.  Feature-dropout specs
    are skipped with a notice and recorded as skipped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    provenance: list[dict] = []
    for image_path in image_paths:
        image_id = Path(image_path).stem
        x = np.asarray(read_npy(image_path), dtype=np.float64)
        for spec in specs:
            if spec.kind == "feature-dropout":
                logger.info("spec %s is feature-dropout; left to the model adapter", spec.id)
                provenance.append(
                    {"image": image_id, "perturbation": spec.id, "kind": spec.kind,
                     "strength": None, "skipped": "feature-space kind"}
                )
                continue
            perturbed, strength = apply_spec(spec, x, image_id)
            out_path = out_dir / f"{image_id}__{spec.id}.npy"
            write_npy(out_path, perturbed.astype(np.float64))
            provenance.append(
                {"image": image_id, "perturbation": spec.id, "kind": spec.kind,
                 "strength": strength, "path": out_path.name}
            )
    return provenance
