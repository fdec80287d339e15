"""Dataset persistence.

Layout:
  magic   4 bytes  b"JAMD"
  version u32
  header  scenes u32, n_a u32, t_h u32, t u32, n_m u32, n_p u32,
          d_s u32, d_p u32, hz f64, seed u64
  scenes  fixed-stride little-endian float32 blocks, one per scene:
          histories [n_a, t_h, d_s], map [n_a, n_m, n_p, d_p],
          futures [n_a, t, 2], futures_valid [n_a, t],
          pair [2], types [n_a], kind [1]
  crc     u32 CRC32 over everything after the magic

Scene arrays hold float32-representable values, so write/read round-trips
are bitwise.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .scenes import Dataset, DatasetHeader, SceneSample

MAGIC = b"JAMD"
VERSION = 1

_HEADER_FMT = "<8IdQ"


class DatasetFormatError(IOError):
    pass


def _scene_floats(h: DatasetHeader) -> int:
    return (h.n_a * h.t_h * h.d_s + h.n_a * h.n_m * h.n_p * h.d_p
            + h.n_a * h.t * 2 + h.n_a * h.t + 2 + h.n_a + 1)


def write_dataset(path, dataset: Dataset) -> None:
    h = dataset.header
    if h.scenes != len(dataset.samples):
        raise DatasetFormatError(f"header says {h.scenes} scenes, payload has {len(dataset.samples)}")
    body = [struct.pack("<I", VERSION),
            struct.pack(_HEADER_FMT, h.scenes, h.n_a, h.t_h, h.t, h.n_m, h.n_p,
                        h.d_s, h.d_p, h.hz, h.seed)]
    for sc in dataset.samples:
        block = np.concatenate([
            np.asarray(sc.histories, dtype=np.float32).ravel(),
            np.asarray(sc.map, dtype=np.float32).ravel(),
            np.asarray(sc.futures, dtype=np.float32).ravel(),
            np.asarray(sc.futures_valid, dtype=np.float32).ravel(),
            np.asarray(sc.pair, dtype=np.float32).ravel(),
            np.asarray(sc.types, dtype=np.float32).ravel(),
            np.asarray([sc.kind], dtype=np.float32),
        ])
        body.append(block.astype("<f4").tobytes())
    payload = b"".join(body)
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(MAGIC + payload + struct.pack("<I", crc))


def read_dataset(path) -> Dataset:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 8:
        raise DatasetFormatError(f"{path}: truncated file")
    payload, crc_bytes = blob[4:-4], blob[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise DatasetFormatError(f"{path}: checksum mismatch")
    (version,) = struct.unpack_from("<I", payload, 0)
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    fields = struct.unpack_from(_HEADER_FMT, payload, 4)
    header = DatasetHeader(version=version, scenes=fields[0], n_a=fields[1], t_h=fields[2],
                           t=fields[3], n_m=fields[4], n_p=fields[5], d_s=fields[6],
                           d_p=fields[7], hz=fields[8], seed=fields[9])
    offset = 4 + struct.calcsize(_HEADER_FMT)
    stride = _scene_floats(header)
    expected = offset + 4 * stride * header.scenes
    if len(payload) != expected:
        raise DatasetFormatError(
            f"{path}: header field 'scenes'={header.scenes} implies {expected} payload bytes, found {len(payload)}")
    samples = []
    na, th, t, nm, npt = header.n_a, header.t_h, header.t, header.n_m, header.n_p
    for _ in range(header.scenes):
        flat = np.frombuffer(payload, dtype="<f4", count=stride, offset=offset).astype(np.float64)
        offset += 4 * stride
        pos = 0

        def take(shape):
            nonlocal pos
            n = int(np.prod(shape))
            out = flat[pos:pos + n].reshape(shape)
            pos += n
            return out

        histories = take((na, th, header.d_s))
        scene_map = take((na, nm, npt, header.d_p))
        futures = take((na, t, 2))
        futures_valid = take((na, t))
        pair = take((2,)).astype(np.int64)
        types = take((na,)).astype(np.int64)
        kind = int(flat[pos])
        samples.append(SceneSample(histories=histories, map=scene_map, futures=futures,
                                   futures_valid=futures_valid, pair=pair, types=types,
                                   kind=kind))
    return Dataset(header=header, samples=samples)
