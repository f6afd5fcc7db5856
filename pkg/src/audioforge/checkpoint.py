"""Binary checkpoint container for named tensors plus phase metadata.

Little-endian layout:
  magic "AFRG", u32 version=1, u32 tensor_count,
  per tensor: u16 name_len, name bytes (utf-8), u8 dtype (0=f32, 1=u64),
              u8 rank, u64 dims[rank], raw row-major data,
  then u64 step, u8 phase (0=pretrain, 1=sft), RNG state blob to EOF.

Tensors are written in sorted name order so save -> load -> save is
byte-identical. Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

MAGIC = b"AFRG"
VERSION = 1

DTYPE_F32 = 0
DTYPE_U64 = 1

PHASE_CODES = {"pretrain": 0, "sft": 1}
PHASE_NAMES = {v: k for k, v in PHASE_CODES.items()}


class CheckpointFormatError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    step: int
    phase: str
    rng_blob: bytes


def _dtype_code(arr: np.ndarray) -> int:
    if arr.dtype == np.float32:
        return DTYPE_F32
    if arr.dtype == np.uint64:
        return DTYPE_U64
    raise CheckpointFormatError(f"unsupported dtype {arr.dtype}; cast to f32 or u64")


def save_checkpoint(path: str, tensors: dict[str, np.ndarray], step: int,
                    phase: str, rng_blob: bytes = b""):
    if phase not in PHASE_CODES:
        raise CheckpointFormatError(f"unknown phase '{phase}'")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<BB", _dtype_code(arr), arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype("<f4" if arr.dtype == np.float32 else "<u8").tobytes())
    chunks.append(struct.pack("<QB", step, PHASE_CODES[phase]))
    chunks.append(rng_blob)

    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(b"".join(chunks))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {data[:4]!r}; not a checkpoint file")
    pos = 4
    try:
        version, count = struct.unpack_from("<II", data, pos)
        pos += 8
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported version {version}")
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            dtype_code, rank = struct.unpack_from("<BB", data, pos)
            pos += 2
            dims = struct.unpack_from(f"<{rank}Q", data, pos)
            pos += 8 * rank
            if dtype_code == DTYPE_F32:
                dtype, isize = np.dtype("<f4"), 4
            elif dtype_code == DTYPE_U64:
                dtype, isize = np.dtype("<u8"), 8
            else:
                raise CheckpointFormatError(f"unknown dtype code {dtype_code} for '{name}'")
            n_items = int(np.prod(dims, dtype=np.int64))
            nbytes = n_items * isize
            if pos + nbytes > len(data):
                raise CheckpointFormatError(f"tensor '{name}' data truncated")
            arr = np.frombuffer(data[pos:pos + nbytes], dtype=dtype).reshape(dims)
            pos += nbytes
            tensors[name] = arr.astype(np.float32 if dtype_code == DTYPE_F32 else np.uint64)
        step, phase_code = struct.unpack_from("<QB", data, pos)
        pos += 9
    except struct.error as e:
        raise CheckpointFormatError(f"truncated checkpoint at offset {pos}: {e}") from e
    if phase_code not in PHASE_NAMES:
        raise CheckpointFormatError(f"unknown phase code {phase_code}")
    return Checkpoint(tensors=tensors, step=step, phase=PHASE_NAMES[phase_code],
                      rng_blob=data[pos:])


def load_into_model(model, ckpt: Checkpoint, allow_missing_lora: bool = True) -> list[str]:
    """Copy checkpoint tensors into model parameters, validating shapes.

    Returns warnings (e.g. lora.* tensors absent and left at fresh init).
    """
    warnings = []
    model_params = model.params
    for name, arr in ckpt.tensors.items():
        if name.startswith("opt."):
            continue
        if name not in model_params:
            raise CheckpointFormatError(f"checkpoint tensor '{name}' not in model")
        p = model_params[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise CheckpointFormatError(
                f"shape mismatch for '{name}': checkpoint {arr.shape} vs model {p.data.shape}")
        p.data = arr.astype(p.data.dtype).copy()
    missing = [n for n in model_params if n not in ckpt.tensors]
    for n in missing:
        if n.startswith("lora.") and allow_missing_lora:
            warnings.append(f"'{n}' missing from checkpoint; keeping fresh initialization")
        else:
            raise CheckpointFormatError(f"model parameter '{n}' missing from checkpoint")
    return warnings
