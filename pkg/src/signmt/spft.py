"""Binary tensor container used for feature files and checkpoints.

Layout: magic ``SPFT``, one dtype byte, one rank byte, ``rank`` little-endian
uint64 dims, then the row-major payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPFT"

_DTYPE_CODES = {
    np.dtype(np.float32): 1,
    np.dtype(np.float64): 2,
    np.dtype(np.int64): 3,
    np.dtype(np.uint8): 4,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


class SpftError(ValueError):
    """Raised for malformed or unsupported container files."""


def write_array(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    # ascontiguousarray promotes 0-d to 1-d; restore the original shape
    array = np.ascontiguousarray(array).reshape(array.shape)
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        raise SpftError(f"unsupported dtype {array.dtype}")
    header = MAGIC + struct.pack("<BB", code, array.ndim)
    header += struct.pack(f"<{array.ndim}Q", *array.shape)
    with open(path, "wb") as f:
        f.write(header)
        f.write(array.tobytes())


def read_array(path: str | Path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 6 or data[:4] != MAGIC:
        raise SpftError(f"{path}: not an SPFT file")
    code, rank = struct.unpack_from("<BB", data, 4)
    dtype = _CODE_DTYPES.get(code)
    if dtype is None:
        raise SpftError(f"{path}: unknown dtype code {code}")
    offset = 6
    if len(data) < offset + 8 * rank:
        raise SpftError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{rank}Q", data, offset)
    offset += 8 * rank
    count = int(np.prod(dims)) if rank else 1
    expected = offset + count * dtype.itemsize
    if len(data) != expected:
        raise SpftError(f"{path}: payload size mismatch ({len(data)} != {expected})")
    return np.frombuffer(data, dtype=dtype, offset=offset, count=count).reshape(dims).copy()


def save_tensors(directory: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write a named-tensor checkpoint: one file per tensor under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, array in tensors.items():
        write_array(directory / f"{name}.spft", array)


def load_tensors(directory: str | Path) -> dict[str, np.ndarray]:
    directory = Path(directory)
    if not directory.is_dir():
        raise SpftError(f"{directory}: checkpoint directory not found")
    out = {}
    for path in sorted(directory.glob("*.spft")):
        out[path.name[: -len(".spft")]] = read_array(path)
    return out
