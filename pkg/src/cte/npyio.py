"""Strict NPY v1.0 reader/writer.

Prediction arrays travel as plain NPY files so any inference harness can
emit them.  The reader is deliberately stricter than ``numpy.load``: only
format version 1.0 is accepted, arrays must be C-ordered, the dtype must
come from a small allowlist (little-endian), and the payload must contain
exactly ``prod(shape) * itemsize`` bytes.  Writing always produces the
canonical v1.0 header, so read followed by write is byte-identical for
files that were canonical to begin with.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
import numpy.lib.format as npformat

from cte.errors import ArrayFormatError

_MAGIC = b"\x93NUMPY"

LABEL_DTYPES = ("|u1", "<u2", "<u4")
PROB_DTYPES = ("<f4", "<f8")


def _descr(dtype: np.dtype) -> str:
    return npformat.dtype_to_descr(dtype)


def read_npy(path: str | Path) -> np.ndarray:
    """Read a strict v1.0 NPY file into a C-ordered array.

    Raises ArrayFormatError for anything that is not a well-formed v1.0
    file with an allowlisted little-endian dtype, C order, and an exact
    payload length.  Missing files raise FileNotFoundError as usual.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        prefix = fh.read(len(_MAGIC) + 2)
        if len(prefix) < len(_MAGIC) + 2 or prefix[: len(_MAGIC)] != _MAGIC:
            raise ArrayFormatError(f"{path}: not an NPY file (bad magic)")
        major, minor = prefix[len(_MAGIC)], prefix[len(_MAGIC) + 1]
        if (major, minor) != (1, 0):
            raise ArrayFormatError(
                f"{path}: unsupported NPY format version {major}.{minor}; only 1.0 is accepted"
            )
        try:
            shape, fortran_order, dtype = npformat.read_array_header_1_0(fh)
        except Exception as exc:
            # numpy surfaces parse failures as ValueError, SyntaxError or
            # tokenize.TokenError depending on version; all mean the same
            # thing here.
            raise ArrayFormatError(f"{path}: malformed NPY header ({exc})") from exc
        if fortran_order:
            raise ArrayFormatError(f"{path}: Fortran-ordered arrays are not accepted")
        descr = _descr(dtype)
        if descr not in LABEL_DTYPES + PROB_DTYPES:
            raise ArrayFormatError(
                f"{path}: dtype {descr!r} not accepted "
                f"(labels: {LABEL_DTYPES}, probabilities: {PROB_DTYPES})"
            )
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        payload = fh.read(expected + 1)
        if len(payload) != expected:
            raise ArrayFormatError(
                f"{path}: payload length {min(len(payload), expected)}+ does not match "
                f"header shape {shape} ({expected} bytes expected)"
            )
    return np.frombuffer(payload, dtype=dtype).reshape(shape)


def write_npy(path: str | Path, values: np.ndarray) -> None:
    """Write ``values`` as a canonical v1.0 NPY file (C order)."""
    values = np.ascontiguousarray(values)
    descr = _descr(values.dtype)
    if descr not in LABEL_DTYPES + PROB_DTYPES:
        raise ArrayFormatError(f"refusing to write unsupported dtype {descr!r}")
    buf = io.BytesIO()
    npformat.write_array(buf, values, version=(1, 0))
    Path(path).write_bytes(buf.getvalue())
