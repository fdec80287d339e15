"""Binary parameter checkpoints.

Layout (all integers little-endian):
  magic   4 bytes  b"JAMC"
  version u32      currently 1
  count   u32      number of parameters
  then per parameter, in file order:
    name_len u32, name bytes (utf-8),
    ndim u32, dims u32 * ndim,
    values float64 little-endian, C order.

Round trips are bit-exact: load(save(params)) compares equal array-for-array
and re-saving produces identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"JAMC"
VERSION = 1


class CheckpointError(IOError):
    pass


def save_checkpoint(path, params: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, value in params.items():
        arr = np.ascontiguousarray(np.asarray(value, dtype=np.float64))
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f8", copy=False).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, offset)
            offset += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            end = offset + 8 * n
            if end > len(blob):
                raise CheckpointError(f"{path}: truncated payload for '{name}'")
            values = np.frombuffer(blob[offset:end], dtype="<f8").reshape(shape)
            offset = end
        except struct.error as exc:
            raise CheckpointError(f"{path}: truncated checkpoint") from exc
        params[name] = np.array(values, dtype=np.float64)
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return params
