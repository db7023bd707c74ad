"""NPY reading and writing for the experiment-folder contract.

The cte toolkit only accepts version 1.0 NPY files in C order, so the
writer pins the version; numpy emits exactly that layout.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from numpy.lib import format as npformat

from cte_adapter.errors import AdapterError


def read_array(path: str | Path) -> np.ndarray:
    try:
        values = np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise AdapterError(f"{path}: not a readable NPY file ({exc})") from exc
    return np.asarray(values)


def write_array(path: str | Path, values: np.ndarray) -> None:
    buf = io.BytesIO()
    npformat.write_array(buf, np.ascontiguousarray(values), version=(1, 0))
    Path(path).write_bytes(buf.getvalue())
