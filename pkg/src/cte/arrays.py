"""Array data model: integer label maps and per-pixel probability maps.

A LabelMap carries semantic class ids or instance ids over an H x W grid
(0 means background throughout).  A ProbMap carries post-softmax class
probabilities, stored either as C x H x W for multiclass or H x W for
binary problems (the single channel is the foreground probability).
Values are normalized to float64 internally but remember their on-disk
dtype so a read/write round trip is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cte.errors import ArrayFormatError
from cte.npyio import LABEL_DTYPES, PROB_DTYPES, read_npy, write_npy

CHANNEL_SUM_TOL = 1e-4


@dataclass
class LabelMap:
    values: np.ndarray
    dtype: np.dtype = field(default=np.dtype("<u2"))

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values)
        self.dtype = np.dtype(self.dtype)
        self.validate()

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def validate(self, num_classes: int | None = None) -> None:
        if self.values.ndim != 2:
            raise ArrayFormatError(f"label map must be 2-D, got shape {self.values.shape}")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ArrayFormatError(f"label map dimensions must be positive, got {self.values.shape}")
        if not np.issubdtype(self.values.dtype, np.integer):
            raise ArrayFormatError(f"label map must be integer-valued, got dtype {self.values.dtype}")
        if self.values.size and int(self.values.min()) < 0:
            raise ArrayFormatError("negative label")
        if num_classes is not None and self.values.size:
            top = int(self.values.max())
            if top >= num_classes:
                raise ArrayFormatError(
                    f"label {top} out of range for declared class count {num_classes}"
                )

    def foreground_fraction(self) -> float:
        return float(np.count_nonzero(self.values)) / self.values.size


@dataclass
class ProbMap:
    values: np.ndarray
    dtype: np.dtype = field(default=np.dtype("<f4"))

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.dtype = np.dtype(self.dtype)
        self.validate()

    @property
    def num_classes(self) -> int:
        """Class count: channel count for C x H x W, 2 for a binary H x W map."""
        return self.values.shape[0] if self.values.ndim == 3 else 2

    @property
    def height(self) -> int:
        return self.values.shape[-2]

    @property
    def width(self) -> int:
        return self.values.shape[-1]

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def validate(self) -> None:
        if self.values.ndim not in (2, 3):
            raise ArrayFormatError(f"probability map must be 2-D or 3-D, got shape {self.values.shape}")
        if min(self.values.shape) < 1:
            raise ArrayFormatError(f"probability map dimensions must be positive, got {self.values.shape}")
        if self.values.ndim == 3 and self.values.shape[0] < 2:
            raise ArrayFormatError("multichannel probability map needs at least 2 channels")
        if not np.all(np.isfinite(self.values)):
            raise ArrayFormatError("NaN or Inf in probability map")
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < 0.0 or hi > 1.0:
            raise ArrayFormatError(f"value out of [0,1]: probability map spans [{lo}, {hi}]")
        if self.values.ndim == 3:
            sums = self.values.sum(axis=0)
            worst = float(np.abs(sums - 1.0).max())
            if worst > CHANNEL_SUM_TOL:
                raise ArrayFormatError(
                    f"per-pixel channel sums deviate from 1.0 by up to {worst:.2e} "
                    f"(tolerance {CHANNEL_SUM_TOL})"
                )

    def argmax_labels(self) -> LabelMap:
        """Thresholded prediction: argmax channel, or foreground >= 0.5 for binary."""
        if self.values.ndim == 2:
            labels = (self.values >= 0.5).astype(np.uint8)
        else:
            labels = np.argmax(self.values, axis=0).astype(
                np.uint8 if self.num_classes <= 256 else np.uint16
            )
        return LabelMap(labels, dtype=labels.dtype)


def read_array(path: str | Path, expected: str | None = None) -> LabelMap | ProbMap:
    """Read and validate one prediction array.

    ``expected`` is ``"label"`` or ``"prob"``; a file whose dtype family
    does not match raises ArrayFormatError.  Integer files become
    LabelMaps, floating files become ProbMaps.  With ``expected=None``
    the file's own dtype family decides.
    """
    if expected not in ("label", "prob", None):
        raise ValueError(f"expected must be 'label' or 'prob', got {expected!r}")
    values = read_npy(path)
    descr = np.lib.format.dtype_to_descr(values.dtype)
    if expected is None:
        expected = "label" if descr in LABEL_DTYPES else "prob"
    if expected == "label":
        if descr not in LABEL_DTYPES:
            raise ArrayFormatError(
                f"{path}: expected an integer label file, found dtype {descr!r}"
            )
        try:
            return LabelMap(values, dtype=values.dtype)
        except ArrayFormatError as exc:
            raise ArrayFormatError(f"{path}: {exc}") from exc
    if descr not in PROB_DTYPES:
        raise ArrayFormatError(
            f"{path}: expected a floating probability file, found dtype {descr!r}"
        )
    try:
        return ProbMap(values, dtype=values.dtype)
    except ArrayFormatError as exc:
        raise ArrayFormatError(f"{path}: {exc}") from exc


def write_array(array: LabelMap | ProbMap, path: str | Path) -> None:
    """Serialize a LabelMap or ProbMap back to its storage dtype."""
    if isinstance(array, LabelMap):
        out = array.values.astype(array.dtype, copy=False)
    elif isinstance(array, ProbMap):
        out = array.values.astype(array.dtype, copy=False)
    else:
        raise TypeError(f"expected LabelMap or ProbMap, got {type(array)!r}")
    write_npy(path, out)
