"""Checkpoint container: named float64 arrays in a small binary format.

Layout (all integers little-endian):
  magic   4 bytes  b"CKPT"
  version u32      currently 1
  count   u32      number of arrays
  then per array:
    name_len u32, name utf-8 bytes,
    ndim u32, dims u64 * ndim,
    data float64-LE, prod(dims) values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray],
                meta: dict[str, str] | None = None) -> None:
    """Write named arrays; `meta` entries are stored as 0-d byte arrays."""
    items = dict(arrays)
    for k, v in (meta or {}).items():
        items[f"__meta__{k}"] = np.frombuffer(v.encode(), dtype=np.uint8).astype(np.float64)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(items)))
        for name, arr in items.items():
            arr = np.asarray(arr, dtype=np.float64)
            nb = name.encode()
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(arr.astype("<f8").tobytes())


def _read_exact(fh, n: int, path) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise CheckpointError(f"{path}: truncated checkpoint")
    return blob


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", _read_exact(fh, 8, path))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        arrays: dict[str, np.ndarray] = {}
        meta: dict[str, str] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
            name = _read_exact(fh, name_len, path).decode()
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, path))
            shape = tuple(struct.unpack("<Q", _read_exact(fh, 8, path))[0]
                          for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(_read_exact(fh, 8 * n, path), dtype="<f8"
                                 ).reshape(shape).copy()
            if name.startswith("__meta__"):
                meta[name[len("__meta__"):]] = data.astype(np.uint8).tobytes().decode()
            else:
                arrays[name] = data
    return arrays, meta
