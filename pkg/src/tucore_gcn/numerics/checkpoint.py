"""Sectioned binary container for parameter tensors plus JSON metadata.

Layout (all integers little-endian)::

    magic   8 bytes   b"TUCKPT\\x00\\x01"
    version u32
    meta    u64 length + UTF-8 JSON (sorted keys, compact separators)
    payload concatenated row-major float64 tensors, in meta["tensors"] order

The JSON is written canonically, so write -> read -> write reproduces the
same bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"TUCKPT\x00\x01"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], sections: dict[str, Any] | None = None) -> bytes:
    index = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        blob = arr.tobytes(order="C")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    meta = {"tensors": index, "sections": sections or {}}
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    head = MAGIC + struct.pack("<IQ", VERSION, len(meta_bytes))
    return head + meta_bytes + b"".join(blobs)


def loads(raw: bytes) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)
    try:
        version, meta_len = struct.unpack_from("<IQ", raw, pos)
    except struct.error as exc:
        raise CheckpointError("truncated header") from exc
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos += struct.calcsize("<IQ")
    meta = json.loads(raw[pos : pos + meta_len].decode("utf-8"))
    pos += meta_len
    payload = raw[pos:]
    tensors: dict[str, np.ndarray] = {}
    for entry in meta["tensors"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(payload):
            raise CheckpointError(f"payload truncated at tensor {entry['name']!r}")
        arr = np.frombuffer(payload[start : start + n], dtype="<f8").astype(np.float64)
        tensors[entry["name"]] = arr.reshape(entry["shape"])
    return tensors, meta["sections"]


def save(path, tensors: dict[str, np.ndarray], sections: dict[str, Any] | None = None) -> None:
    Path(path).write_bytes(dumps(tensors, sections))


def load(path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return loads(Path(path).read_bytes())
