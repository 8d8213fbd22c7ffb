"""Portable binary checkpoints.

Layout (little-endian throughout):

    magic    8 bytes  b"G2DCKPT\\0"
    version  u32      currently 1
    count    u32      number of tensors
    then per tensor:
      name_len u16, name utf-8 bytes
      dtype    u8     0 = float64, 1 = int64, 2 = uint8
      ndim     u8
      dims     u32 * ndim
      data     row-major values

Arbitrary JSON metadata rides along as a uint8 tensor named "meta/json".
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"G2DCKPT\x00"
VERSION = 1

_DTYPES = {0: np.float64, 1: np.int64, 2: np.uint8}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.int64): 1, np.dtype(np.uint8): 2}


def save_tensors(path: str, tensors: dict[str, np.ndarray], meta: dict | None = None):
    items = dict(tensors)
    if meta is not None:
        items["meta/json"] = np.frombuffer(
            json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8
        )
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(items)))
        for name, arr in items.items():
            arr = np.ascontiguousarray(arr)
            if arr.dtype not in _CODES:
                arr = arr.astype(np.float64)
            enc = name.encode()
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def load_tensors(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        if f.read(8) != MAGIC:
            raise ValueError(f"{path}: not a getup2d checkpoint")
        version, count = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode()
            code, ndim = struct.unpack("<BB", f.read(2))
            dims = [struct.unpack("<I", f.read(4))[0] for _ in range(ndim)]
            dtype = np.dtype(_DTYPES[code])
            n = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(f.read(n * dtype.itemsize), dtype=dtype)
            tensors[name] = data.reshape(dims).copy()
    meta = {}
    blob = tensors.pop("meta/json", None)
    if blob is not None:
        meta = json.loads(bytes(blob).decode())
    return tensors, meta
