"""Versioned checkpoint container (.drc).

Little-endian layout:

    magic    4 bytes  b"DRC2"
    version  u32
    config   u32 length + utf-8 flat-config echo of the model
    rng      u32 length + canonical JSON of the numpy generator state
    step     u64
    adam t   u64, adam skipped u64
    table    u32 count, then per tensor:
               u16 name length, utf-8 name,
               u8 dtype code (0=f32, 1=f64), u8 rank, u32 extents...,
               u64 byte offset into the data region
    data     contiguous tensor payloads

Reloading a checkpoint reproduces the next training step bit-identically
in a fixed thread configuration.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .. import config as cfgmod
from .module import Module
from .unet import DMSUNet, ModelConfig

MAGIC = b"DRC2"
VERSION = 1

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


def rng_state_blob(rng: np.random.Generator) -> bytes:
    return json.dumps(rng.bit_generator.state, sort_keys=True).encode()


def rng_from_blob(blob: bytes) -> np.random.Generator:
    state = json.loads(blob.decode())
    gen = np.random.default_rng()
    gen.bit_generator.state = state
    return gen


def _gather_tensors(model: Module, adam) -> dict[str, np.ndarray]:
    tensors = dict(model.state_arrays())
    if adam is not None:
        for name in adam.m:
            tensors[f"adam.m.{name}"] = adam.m[name]
            tensors[f"adam.v.{name}"] = adam.v[name]
    return tensors


def save_checkpoint(
    path,
    model: DMSUNet,
    step: int,
    adam=None,
    rng: np.random.Generator | None = None,
) -> None:
    cfg_text = cfgmod.format_config(model.cfg.to_sections())
    rng_blob = rng_state_blob(rng) if rng is not None else b"{}"
    tensors = _gather_tensors(model, adam)

    table = io.BytesIO()
    data = io.BytesIO()
    for name, arr in tensors.items():
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        code = _DTYPE_CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        nameb = name.encode()
        table.write(struct.pack("<H", len(nameb)))
        table.write(nameb)
        table.write(struct.pack("<BB", code, arr.ndim))
        table.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        table.write(struct.pack("<Q", data.tell()))
        data.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())

    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    cfg_b = cfg_text.encode()
    out.write(struct.pack("<I", len(cfg_b)))
    out.write(cfg_b)
    out.write(struct.pack("<I", len(rng_blob)))
    out.write(rng_blob)
    out.write(struct.pack("<Q", int(step)))
    out.write(struct.pack("<QQ", adam.t if adam else 0, adam.skipped if adam else 0))
    out.write(struct.pack("<I", len(tensors)))
    out.write(table.getvalue())
    out.write(data.getvalue())
    Path(path).write_bytes(out.getvalue())


def load_checkpoint(path):
    """Returns (model, step, adam_state, rng); the model is rebuilt from
    the config echo and filled with the stored parameters."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    off = 4
    (version,) = struct.unpack_from("<I", raw, off)
    off += 4
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    cfg_text = raw[off : off + n].decode()
    off += n
    (n,) = struct.unpack_from("<I", raw, off)
    off += 4
    rng_blob = raw[off : off + n]
    off += n
    (step,) = struct.unpack_from("<Q", raw, off)
    off += 8
    adam_t, adam_skipped = struct.unpack_from("<QQ", raw, off)
    off += 16
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4

    entries = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + ln].decode()
        off += ln
        code, rank = struct.unpack_from("<BB", raw, off)
        off += 2
        shape = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        (data_off,) = struct.unpack_from("<Q", raw, off)
        off += 8
        entries.append((name, code, shape, data_off))
    data_start = off

    tensors = {}
    for name, code, shape, data_off in entries:
        dtype = _CODE_DTYPES.get(code)
        if dtype is None:
            raise CheckpointError(f"{name}: unknown dtype code {code}")
        cnt = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype=dtype, count=cnt, offset=data_start + data_off)
        tensors[name] = arr.reshape(shape).astype(dtype.newbyteorder("="))

    model_cfg = ModelConfig.from_sections(cfgmod.parse_config(cfg_text))
    model = DMSUNet(model_cfg)
    params = {k: v for k, v in tensors.items() if not k.startswith("adam.")}
    model.load_state_arrays(params)

    from ..train.optim import AdamState

    adam = AdamState()
    adam.t = adam_t
    adam.skipped = adam_skipped
    for name, arr in tensors.items():
        if name.startswith("adam.m."):
            adam.m[name[len("adam.m.") :]] = arr.copy()
        elif name.startswith("adam.v."):
            adam.v[name[len("adam.v.") :]] = arr.copy()

    rng = rng_from_blob(rng_blob) if rng_blob != b"{}" else None
    return model, int(step), adam, rng
