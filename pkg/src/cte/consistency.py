"""Consistency measures between an unperturbed and a perturbed prediction.

Three measures cover the three task flavours:

* EI, soft semantic: fraction-weighted agreement where each agreeing
  pixel contributes the geometric mean of the two predictions'
  confidences, sqrt(p_ref * p_pert), and disagreeing pixels contribute 0.
* NHD, hard semantic: one minus the normalized Hamming distance over the
  foreground union, which for binary maps is exactly the IoU of the two
  foreground masks.  Multiclass maps get a per-class score on that
  class's pairwise union, combined by a weighted average.
* ARS, instance: adapted Rand score between the two instance maps,
  restricted to pixels the reference labels as foreground.

All three are pure functions of the two predictions; the caller decides
which pixels came from which perturbation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cte.arrays import LabelMap, ProbMap
from cte.errors import DegenerateReferenceError, ValidationError

DEGENERATE_FOREGROUND_EPS = 1e-3


@dataclass(frozen=True)
class ConsistencyValue:
    """One consistency score plus how much data produced it.

    ``n_effective`` counts contributing pixels: the full pixel grid for
    plain EI, the summed class-union sizes for NHD and per-class EI, and
    the restricted (reference-foreground) pixel count for ARS.
    """

    value: float
    metric: str
    n_effective: int


def _check_shapes(a: LabelMap, b: LabelMap) -> None:
    if a.spatial_shape != b.spatial_shape:
        raise ValidationError(
            f"prediction shapes disagree: {a.spatial_shape} vs {b.spatial_shape}"
        )


def _own_confidence(prob: ProbMap, label: LabelMap) -> np.ndarray:
    """Probability each map assigns to its own predicted class, per pixel."""
    if prob.values.ndim == 2:
        fg = label.values == 1
        return np.where(fg, prob.values, 1.0 - prob.values)
    idx = label.values[np.newaxis, :, :].astype(np.intp)
    return np.take_along_axis(prob.values, idx, axis=0)[0]


def ei_consistency(
    ref_prob: ProbMap,
    ref_label: LabelMap,
    pert_prob: ProbMap,
    pert_label: LabelMap,
    per_class: bool = False,
) -> ConsistencyValue:
    """Soft semantic consistency.

    Per pixel: sqrt(p_ref * p_pert) when the two label maps agree, else 0,
    where each factor is that prediction's confidence in its own predicted
    class.  The default averages over every pixel.  ``per_class`` instead
    averages over each foreground class's pairwise union and combines the
    per-class means weighted by union size, mirroring the multiclass NHD
    treatment.
    """
    if ref_prob is None or pert_prob is None:
        raise ValidationError("EI needs probability maps for both predictions")
    _check_shapes(ref_label, pert_label)
    if ref_prob.spatial_shape != ref_label.spatial_shape:
        raise ValidationError("reference probability map and label map shapes disagree")
    if pert_prob.spatial_shape != pert_label.spatial_shape:
        raise ValidationError("perturbed probability map and label map shapes disagree")
    if ref_prob.values.ndim != pert_prob.values.ndim or ref_prob.num_classes != pert_prob.num_classes:
        raise ValidationError("probability maps disagree on class count")

    agree = ref_label.values == pert_label.values
    joint = np.sqrt(_own_confidence(ref_prob, ref_label) * _own_confidence(pert_prob, pert_label))
    contrib = np.where(agree, joint, 0.0)

    if not per_class:
        return ConsistencyValue(float(contrib.mean()), "EI", int(contrib.size))

    num_classes = ref_prob.num_classes
    total = 0.0
    weight = 0
    for c in range(1, num_classes):
        union = (ref_label.values == c) | (pert_label.values == c)
        n_union = int(np.count_nonzero(union))
        if n_union == 0:
            continue
        total += float(contrib[union].sum())
        weight += n_union
    if weight == 0:
        return ConsistencyValue(1.0, "EI", 0)
    return ConsistencyValue(total / weight, "EI", weight)


def nhd_consistency(
    ref: LabelMap, pert: LabelMap, num_classes: int, weighting: str = "union"
) -> ConsistencyValue:
    """Hard semantic consistency, 1 - normalized Hamming distance.

    Binary maps: the disagreement count over the foreground union, which
    equals the IoU of the two foreground masks.  Multiclass maps: the
    same quantity per foreground class on that class's pairwise union,
    averaged with weights that are either the union sizes (default) or
    the class frequencies summed over both maps (``weighting="frequency"``,
    for sensitivity studies).  Classes whose union is empty carry no
    weight; if every union is empty (both maps all background) the score
    is 1.0 with ``n_effective`` 0, and the degenerate-output diagnostic
    is expected to fire alongside.
    """
    if weighting not in ("union", "frequency"):
        raise ValidationError(f"unknown NHD weighting {weighting!r}")
    _check_shapes(ref, pert)
    if num_classes < 2:
        raise ValidationError(f"NHD needs num_classes >= 2, got {num_classes}")
    ref.validate(num_classes=num_classes)
    pert.validate(num_classes=num_classes)

    scores = np.zeros(num_classes - 1, dtype=np.float64)
    weights = np.zeros(num_classes - 1, dtype=np.float64)
    n_effective = 0
    for c in range(1, num_classes):
        ref_c = ref.values == c
        pert_c = pert.values == c
        n_union = int(np.count_nonzero(ref_c | pert_c))
        if n_union == 0:
            continue
        n_both = int(np.count_nonzero(ref_c & pert_c))
        scores[c - 1] = n_both / n_union
        if weighting == "union":
            weights[c - 1] = n_union
        else:
            weights[c - 1] = int(np.count_nonzero(ref_c)) + int(np.count_nonzero(pert_c))
        n_effective += n_union
    total_weight = float(weights.sum())
    if total_weight == 0.0:
        return ConsistencyValue(1.0, "NHD", 0)
    value = float(np.dot(scores, weights) / total_weight)
    return ConsistencyValue(value, "NHD", n_effective)


def ars_consistency(ref: LabelMap, pert: LabelMap, alpha: float = 0.5) -> ConsistencyValue:
    """Instance consistency: foreground-restricted adapted Rand score.

    Pixels where the reference labels background are dropped.  On the
    remaining N_r pixels a joint label-pair distribution p_ij is built
    (pert id i against ref id j, including pert id 0, which simply acts
    as one more cluster), and the score is

        sum(p_ij^2) / (alpha * sum(s_k^2) + (1 - alpha) * sum(t_k^2))

    with s and t the pert/ref marginals.  Equivalent to an alpha-weighted
    F-score over ordered pixel pairs (self-pairs included).  The value is
    reported unclamped; it is provably in (0, 1] for any alpha in [0, 1].
    """
    _check_shapes(ref, pert)
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    mask = ref.values != 0
    n_r = int(np.count_nonzero(mask))
    if n_r == 0:
        raise DegenerateReferenceError(
            "reference prediction has no foreground; ARS is undefined "
            "(degenerate output, see the mode-collapse diagnostic)"
        )
    ref_ids = np.unique(ref.values[mask], return_inverse=True)[1]
    pert_ids = np.unique(pert.values[mask], return_inverse=True)[1]
    n_ref = int(ref_ids.max()) + 1
    n_pert = int(pert_ids.max()) + 1
    joint = np.bincount(pert_ids * n_ref + ref_ids, minlength=n_pert * n_ref).reshape(
        n_pert, n_ref
    )
    p = joint / n_r
    sum_p2 = float((p * p).sum())
    s = p.sum(axis=1)
    t = p.sum(axis=0)
    denom = alpha * float(s @ s) + (1.0 - alpha) * float(t @ t)
    return ConsistencyValue(sum_p2 / denom, "ARS", n_r)


def degenerate_output_flag(
    ref: LabelMap, eps: float = DEGENERATE_FOREGROUND_EPS
) -> tuple[bool, str]:
    """Mode-collapse diagnostic on a reference prediction.

    Flags near-uniform outputs (foreground fraction below ``eps`` or
    above ``1 - eps``).  Diagnostic only: callers attach the report as a
    warning and never let it alter scores.
    """
    frac = ref.foreground_fraction()
    if frac < eps:
        return True, f"near-uniform output: foreground fraction {frac:.6f} < {eps}"
    if frac > 1.0 - eps:
        return True, f"near-uniform output: foreground fraction {frac:.6f} > {1.0 - eps}"
    return False, f"foreground fraction {frac:.6f} within [{eps}, {1.0 - eps}]"
