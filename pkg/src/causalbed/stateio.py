"""Portable binary container for serialized run state.

Layout (all integers little-endian):
  bytes 0-3    magic b"CBED"
  bytes 4-7    format version (uint32)
  bytes 8-15   header length in bytes (uint64)
  header       UTF-8 JSON: arbitrary metadata plus an "arrays" table of
               {name, dtype, shape, offset} entries
  payload      raw array bytes, little-endian, in table order

Floats are stored as '<f8', integers as '<i8' or '<i1', so files are
byte-identical across platforms.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"CBED"
VERSION = 1

_ALLOWED_DTYPES = ("<f8", "<i8", "<i1")


class StateFormatError(ValueError):
    """Raised when a state file is malformed or from an unknown version."""


def _canonical_dtype(arr: np.ndarray) -> str:
    if arr.dtype.kind == "f":
        return "<f8"
    if arr.dtype.kind in "iu":
        return "<i1" if arr.dtype.itemsize == 1 else "<i8"
    raise StateFormatError(f"unsupported array dtype {arr.dtype}")


def write_state(path: str, meta: dict, arrays: dict[str, np.ndarray]):
    """Write metadata and named arrays to a state file."""
    table = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = _canonical_dtype(arr)
        blob = np.ascontiguousarray(arr.astype(dtype)).tobytes()
        table.append(
            {"name": name, "dtype": dtype, "shape": list(arr.shape), "offset": offset}
        )
        blobs.append(blob)
        offset += len(blob)
    header = dict(meta)
    header["arrays"] = table
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def read_state(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a state file back as (metadata, arrays)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise StateFormatError("not a state file (bad magic)")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise StateFormatError(f"unsupported state version {version}")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StateFormatError(f"corrupt state header: {exc}") from exc
    payload = raw[16 + hlen :]
    arrays: dict[str, np.ndarray] = {}
    for entry in header.pop("arrays", []):
        dtype = entry["dtype"]
        if dtype not in _ALLOWED_DTYPES:
            raise StateFormatError(f"unsupported dtype {dtype} in state file")
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        itemsize = np.dtype(dtype).itemsize
        end = start + count * itemsize
        if end > len(payload):
            raise StateFormatError("truncated state payload")
        arrays[entry["name"]] = np.frombuffer(
            payload[start:end], dtype=dtype
        ).reshape(shape).copy()
    return header, arrays
