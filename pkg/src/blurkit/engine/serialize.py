"""Raw tensor dump format (.drt).

Little-endian layout:

    magic   4 bytes  b"DRT2"
    version u32      currently 1
    dtype   u8       0 = f32, 1 = f64
    rank    u8
    extents u32 * rank
    data    contiguous little-endian values (C order)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DRT2"
VERSION = 1

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class DumpFormatError(ValueError):
    """The file does not follow the DRT2 layout."""


def save_tensor(path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.ndim and not array.flags.c_contiguous:
        array = np.ascontiguousarray(array)
    code = _DTYPE_CODES.get(array.dtype)
    if code is None:
        raise DumpFormatError(f"unsupported dtype {array.dtype}")
    header = MAGIC + struct.pack("<IBB", VERSION, code, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    data = array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes()
    Path(path).write_bytes(header + data)


def load_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise DumpFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, code, rank = struct.unpack("<IBB", raw[4:10])
    if version != VERSION:
        raise DumpFormatError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise DumpFormatError(f"{path}: unknown dtype code {code}")
    shape = struct.unpack(f"<{rank}I", raw[10 : 10 + 4 * rank])
    dtype = _CODE_DTYPES[code]
    count = int(np.prod(shape)) if rank else 1
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=10 + 4 * rank)
    return data.reshape(shape).astype(dtype.newbyteorder("="))


def describe(path) -> str:
    arr = load_tensor(path)
    name = "f32" if arr.dtype == np.float32 else "f64"
    return (
        f"{path}: {name} shape={tuple(arr.shape)} "
        f"min={arr.min():.6g} max={arr.max():.6g} mean={arr.mean():.6g}"
    )
