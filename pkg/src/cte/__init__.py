"""Consistency-based transferability ranking for segmentation models.

Given serialized predictions of several candidate models on an unlabelled
target dataset (one unperturbed and at least one perturbed prediction per
image), the toolkit scores each model by how stable its predictions are
under the perturbation, ranks the models by that score, and - when
ground-truth performance numbers are available - validates the ranking
with rank-correlation statistics.
"""

from cte.aggregate import Ranking, TransferRecord, aggregate, rank
from cte.arrays import LabelMap, ProbMap, read_array, write_array
from cte.consistency import (
    ConsistencyValue,
    ars_consistency,
    degenerate_output_flag,
    ei_consistency,
    nhd_consistency,
)
from cte.manifest import Manifest, PredictionBundle, load_manifest
from cte.perturb import (
    PerturbationSpec,
    apply_brightness,
    apply_contrast,
    apply_gamma,
    apply_gauss,
    sample_strength,
)
from cte.rankstats import (
    CorrelationReport,
    evaluate,
    kendall_tau,
    pearson_r,
    spearman_rho,
)

__version__ = "0.1.0"

__all__ = [
    "ConsistencyValue",
    "CorrelationReport",
    "LabelMap",
    "Manifest",
    "PerturbationSpec",
    "PredictionBundle",
    "ProbMap",
    "Ranking",
    "TransferRecord",
    "aggregate",
    "apply_brightness",
    "apply_contrast",
    "apply_gamma",
    "apply_gauss",
    "ars_consistency",
    "degenerate_output_flag",
    "ei_consistency",
    "evaluate",
    "kendall_tau",
    "load_manifest",
    "nhd_consistency",
    "pearson_r",
    "rank",
    "read_array",
    "sample_strength",
    "spearman_rho",
    "write_array",
]
