"""PHM1 binary grid files and small-grid CSV export.

PHM1 layout (all integers little-endian):

    bytes 0-3   magic ``PHM1``
    byte  4     dtype tag: 0 = float64 grid, 1 = uint32 count grid,
                2 = complex128 grid
    bytes 5-8   width  (uint32)
    bytes 9-12  height (uint32)
    bytes 13-   row-major payload, little-endian

Round trips are bit-exact for all three dtypes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DomainError

MAGIC = b"PHM1"
_HEADER = struct.Struct("<4sBII")

DTYPE_REAL = 0
DTYPE_COUNT = 1
DTYPE_COMPLEX = 2

_TAG_TO_DTYPE = {
    DTYPE_REAL: np.dtype("<f8"),
    DTYPE_COUNT: np.dtype("<u4"),
    DTYPE_COMPLEX: np.dtype("<c16"),
}

CSV_EXPORT_LIMIT = 64


def _tag_for(a: np.ndarray) -> int:
    if np.issubdtype(a.dtype, np.complexfloating):
        return DTYPE_COMPLEX
    if np.issubdtype(a.dtype, np.integer):
        return DTYPE_COUNT
    if np.issubdtype(a.dtype, np.floating):
        return DTYPE_REAL
    raise DomainError(f"unsupported grid dtype {a.dtype}")


def write_grid(path, a: np.ndarray) -> None:
    """Write a 2-D grid as a PHM1 file; dtype tag chosen from the array dtype."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise DomainError(f"PHM1 stores 2-D grids, got ndim={a.ndim}")
    tag = _tag_for(a)
    if tag == DTYPE_COUNT:
        if np.any(a < 0):
            raise DomainError("count grids must be nonnegative")
        if np.any(a > np.iinfo(np.uint32).max):
            raise DomainError("count grid exceeds uint32 range")
    payload = np.ascontiguousarray(a.astype(_TAG_TO_DTYPE[tag], copy=False))
    height, width = a.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, tag, width, height))
        fh.write(payload.tobytes())


def read_grid(path) -> np.ndarray:
    """Read a PHM1 file back into a 2-D array of the stored dtype."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DomainError(f"{path}: truncated PHM1 header")
    magic, tag, width, height = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DomainError(f"{path}: bad magic {magic!r}")
    if tag not in _TAG_TO_DTYPE:
        raise DomainError(f"{path}: unknown dtype tag {tag}")
    dtype = _TAG_TO_DTYPE[tag]
    expected = width * height * dtype.itemsize
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise DomainError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(height, width).copy()


def _format_cell(v) -> str:
    if isinstance(v, (np.complexfloating, complex)):
        return f"{complex(v)!r}".strip("()")
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return repr(float(v))


def export_csv(path, a: np.ndarray) -> None:
    """Comma-separated dump (one text row per grid row) for grids <= 64x64."""
    a = np.asarray(a)
    if a.ndim != 2:
        raise DomainError(f"CSV export needs a 2-D grid, got ndim={a.ndim}")
    if a.shape[0] > CSV_EXPORT_LIMIT or a.shape[1] > CSV_EXPORT_LIMIT:
        raise DomainError(
            f"CSV export limited to {CSV_EXPORT_LIMIT}x{CSV_EXPORT_LIMIT}, "
            f"got {a.shape[1]}x{a.shape[0]}"
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in a:
            fh.write(",".join(_format_cell(v) for v in row))
            fh.write("\n")
