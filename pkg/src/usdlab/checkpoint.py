"""Versioned binary checkpoint container.

Layout: 8-byte magic `USDCKPT1`, uint64 little-endian manifest length,
JSON manifest listing (name, shape, dtype) per array, then the raw
little-endian array bytes in manifest order.  Round trips are bit-exact.

A JSON sidecar next to the checkpoint records run provenance (code hash,
config, seed, metrics); see write_sidecar / read_sidecar.
"""
from __future__ import annotations

import json
import struct
from typing import Dict

import numpy as np

from .errors import ValidationError

MAGIC = b"USDCKPT1"


def save_arrays(path, arrays: Dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": le.dtype.str})
        blobs.append(le.tobytes())
    manifest = json.dumps({"format": MAGIC.decode(), "arrays": entries}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_arrays(path) -> Dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValidationError(f"bad checkpoint magic {magic!r} in {path}")
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode())
        out: Dict[str, np.ndarray] = {}
        for entry in manifest["arrays"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ValidationError(f"truncated checkpoint {path}")
            arr = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"])
            out[entry["name"]] = arr.astype(dtype.newbyteorder("="), copy=True)
        return out


def sidecar_path(ckpt_path) -> str:
    return str(ckpt_path) + ".json"


def write_sidecar(ckpt_path, info: dict) -> None:
    with open(sidecar_path(ckpt_path), "w") as fh:
        json.dump(info, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_sidecar(ckpt_path) -> dict:
    with open(sidecar_path(ckpt_path)) as fh:
        return json.load(fh)


__all__ = ["MAGIC", "save_arrays", "load_arrays",
           "sidecar_path", "write_sidecar", "read_sidecar"]
