"""Deterministic binary checkpoint format.

Layout (little endian):
    8 bytes   magic "TPRLCKPT"
    u32       format version (1)
    u32       metadata length in bytes
    bytes     metadata JSON (sorted keys): architecture descriptor, config,
              RNG states, and the array manifest
    bytes     raw array payloads, concatenated in manifest order

The manifest inside the metadata lists (name, dtype, shape, nbytes) for each
array.  Writing the same state twice produces byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TPRLCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str, meta: dict, arrays: dict) -> None:
    manifest = []
    payloads = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        payload = arr.tobytes()
        manifest.append(
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape), "nbytes": len(payload)}
        )
        payloads.append(payload)
    header = dict(meta)
    header["format_version"] = FORMAT_VERSION
    header["arrays"] = manifest
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for payload in payloads:
            f.write(payload)


def load_checkpoint(path: str) -> tuple[dict, dict]:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        version, meta_len = struct.unpack("<II", f.read(8))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        meta = json.loads(f.read(meta_len).decode())
        arrays = {}
        for spec in meta["arrays"]:
            raw = f.read(spec["nbytes"])
            if len(raw) != spec["nbytes"]:
                raise CheckpointError("truncated checkpoint payload")
            arrays[spec["name"]] = np.frombuffer(raw, dtype=spec["dtype"]).reshape(spec["shape"]).copy()
    return meta, arrays
