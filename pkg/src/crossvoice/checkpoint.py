"""Versioned binary checkpoints: named float32 entries plus a JSON metadata
blob carrying the config fingerprint and lineage records.

Layout (little-endian): magic "CKPT", version u32, meta u32-length-prefixed
UTF-8 JSON, entry count u32, then per entry: u32-length-prefixed name,
ndim u32, dims u32 each, u32 byte length, float32 row-major data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CompatibilityError, InputError

MAGIC = b"CKPT"
VERSION = 1


def save_checkpoint(path, entries: dict, meta: dict) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries.items():
            data = np.asarray(arr, dtype="<f4")  # tobytes() copies to C order
            name_bytes = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_bytes)))
            f.write(name_bytes)
            f.write(struct.pack("<I", data.ndim))
            for dim in data.shape:
                f.write(struct.pack("<I", dim))
            payload = data.tobytes()
            f.write(struct.pack("<I", len(payload)))
            f.write(payload)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (entries as float64 arrays, meta dict)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise InputError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise CompatibilityError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", f.read(4))
        meta = json.loads(f.read(meta_len).decode("utf-8"))
        (n_entries,) = struct.unpack("<I", f.read(4))
        entries = {}
        for _ in range(n_entries):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            (payload_len,) = struct.unpack("<I", f.read(4))
            payload = f.read(payload_len)
            if len(payload) != payload_len:
                raise InputError(f"{path}: truncated entry '{name}'")
            arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
            entries[name] = arr.astype(np.float64)
    return entries, meta


def require_fingerprint(meta: dict, fingerprint: str, path="checkpoint") -> None:
    found = meta.get("config_fingerprint")
    if found != fingerprint:
        raise CompatibilityError(
            f"{path}: config fingerprint {found!r} does not match the current "
            f"configuration {fingerprint!r}")
