"""Standalone MSEG-W1 container writer and reader.

This module encodes the container layout from scratch so the exporter can be
audited independently of the inference engine that consumes its output.

Layout:

    bytes 0..8    magic b"MSEGW1\\x00\\x00"
    bytes 8..16   header length, unsigned 64-bit little-endian
    header        UTF-8 JSON object:
                    {"entries": [{"name", "shape", "dtype": "f32", "offset"}],
                     "meta": {...}}
    payload       raw little-endian float32 data

Offsets are relative to the start of the payload, 4-byte aligned, strictly
increasing, and the payload ends exactly where the last entry ends.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ContainerFormatError

MAGIC = b"MSEGW1\x00\x00"


def write_container(entries, meta=None):
    """Serialize (name, array) pairs into MSEG-W1 bytes.

    Entry order is preserved; arrays are cast to float32. The same inputs
    always produce the same bytes (JSON keys are emitted in a fixed order
    with a canonical separator style), which is what makes re-exports
    byte-identical.
    """
    records = []
    payload = bytearray()
    seen = set()
    for name, arr in entries:
        if not name:
            raise ContainerFormatError("entry name must be non-empty")
        if name in seen:
            raise ContainerFormatError(f"duplicate entry name {name!r}")
        seen.add(name)
        a = np.asarray(arr, dtype="<f4")
        if not a.flags["C_CONTIGUOUS"]:
            # ascontiguousarray would promote 0-d to 1-d; only call when needed
            a = np.ascontiguousarray(a)
        records.append(
            {
                "name": name,
                "shape": [int(d) for d in a.shape],
                "dtype": "f32",
                "offset": len(payload),
            }
        )
        payload += a.tobytes()
        # f32 keeps offsets 4-aligned without padding
    header = json.dumps(
        {"entries": records, "meta": dict(meta or {})},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + bytes(payload)


def read_container(buf):
    """Parse MSEG-W1 bytes into (entries, meta).

    Returns a list of (name, float32 array) pairs in file order plus the
    meta dict. Validates the same invariants the writer guarantees.
    """
    if len(buf) < 16:
        raise ContainerFormatError("container too short for magic and header length")
    if buf[:8] != MAGIC:
        raise ContainerFormatError("bad magic, not an MSEG-W1 container")
    (hlen,) = struct.unpack("<Q", buf[8:16])
    if 16 + hlen > len(buf):
        raise ContainerFormatError("truncated header")
    try:
        header = json.loads(buf[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(f"header is not valid JSON: {e}") from e
    if not isinstance(header, dict) or not isinstance(header.get("entries"), list):
        raise ContainerFormatError("header must be an object with an entries list")
    payload = buf[16 + hlen :]

    entries = []
    prev_end = 0
    seen = set()
    for rec in header["entries"]:
        if not isinstance(rec, dict) or not {"name", "shape", "dtype", "offset"} <= set(rec):
            raise ContainerFormatError(f"malformed entry record: {rec!r}")
        name, shape, dtype, offset = rec["name"], rec["shape"], rec["dtype"], rec["offset"]
        if dtype != "f32":
            raise ContainerFormatError(f"unsupported dtype {dtype!r} for {name!r}")
        if name in seen:
            raise ContainerFormatError(f"duplicate entry name {name!r}")
        seen.add(name)
        if any(d < 0 for d in shape):
            raise ContainerFormatError(f"negative dimension in shape of {name!r}")
        if offset % 4 != 0:
            raise ContainerFormatError(f"offset of {name!r} is not 4-byte aligned")
        if offset < prev_end:
            raise ContainerFormatError(f"entry {name!r} overlaps or reorders payload data")
        nbytes = 4 * int(np.prod(shape, dtype=np.int64)) if shape else 4
        if offset + nbytes > len(payload):
            raise ContainerFormatError(f"payload truncated inside entry {name!r}")
        data = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset)
        entries.append((name, data.reshape(shape).copy()))
        prev_end = offset + nbytes
    if prev_end != len(payload):
        raise ContainerFormatError("trailing bytes after last entry")
    meta = header.get("meta", {})
    if not isinstance(meta, dict):
        raise ContainerFormatError("meta must be an object")
    return entries, meta


def read_container_file(path):
    with open(path, "rb") as f:
        return read_container(f.read())
