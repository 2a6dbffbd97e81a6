"""Binary tensor container used for model checkpoints and frame exports.

Layout: one version byte, a little-endian uint32 manifest length, a UTF-8
JSON manifest, then the raw little-endian tensor payloads in manifest
order. The manifest records per-tensor name, shape, dtype ("f32"/"f64")
and quantization eligibility, plus a free-form ``meta`` dict.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ParseError

VERSION = 1

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def save_tensors(path, entries, meta: dict | None = None):
    """Write ``entries`` = iterable of (name, array, quantizable) to ``path``."""
    manifest = {"meta": meta or {}, "tensors": []}
    arrays = []
    for name, arr, quantizable in entries:
        arr = np.asarray(arr)
        if arr.dtype not in _NAMES:
            raise ParseError(f"checkpoint: unsupported dtype {arr.dtype} for {name!r}")
        manifest["tensors"].append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": _NAMES[arr.dtype],
            "quantizable": bool(quantizable),
        })
        arrays.append(arr)
    blob = json.dumps(manifest, sort_keys=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(bytes([VERSION]))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for entry, arr in zip(manifest["tensors"], arrays):
            f.write(np.ascontiguousarray(arr, dtype=_DTYPES[entry["dtype"]]).tobytes())


def load_tensors(path):
    """Read a container; returns (meta, {name: array}, manifest tensor list)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 5:
        raise ParseError(f"checkpoint {path}: truncated header at byte {len(raw)}")
    if raw[0] != VERSION:
        raise ParseError(f"checkpoint {path}: unsupported version byte {raw[0]}")
    (mlen,) = struct.unpack("<I", raw[1:5])
    if len(raw) < 5 + mlen:
        raise ParseError(f"checkpoint {path}: manifest truncated at byte {len(raw)}")
    try:
        manifest = json.loads(raw[5:5 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"checkpoint {path}: bad manifest: {exc}") from exc
    offset = 5 + mlen
    tensors = {}
    for entry in manifest["tensors"]:
        dtype = _DTYPES[entry["dtype"]]
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise ParseError(f"checkpoint {path}: payload for {entry['name']!r} truncated at byte {offset}")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
        offset += nbytes
    return manifest.get("meta", {}), tensors, manifest["tensors"]
