"""MSEG-W1 weight container: named float32 tensors in one flat file.

Layout (all integers little-endian):

    bytes 0..7    magic ``b"MSEGW1\\x00\\x00"``
    bytes 8..15   u64 header length H
    bytes 16..16+H  UTF-8 JSON: {"entries": [{"name", "shape", "dtype",
                  "offset"}, ...], "meta": {...}}
    rest          payload; entry i occupies payload[offset : offset+4*prod(shape)]

``dtype`` is always ``"f32"``; payload floats are little-endian.  Offsets
are relative to the payload start, strictly increasing, 4-byte aligned and
non-overlapping, and the payload ends exactly at the last entry's end.
Reads and writes are bit-exact inverses.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import WeightFormatError

MAGIC = b"MSEGW1\x00\x00"


class WeightStore:
    """Ordered name -> float32 ndarray mapping with an optional meta dict."""

    def __init__(self, entries=None, meta=None):
        self._d: dict[str, np.ndarray] = {}
        self.meta: dict = dict(meta or {})
        for name, arr in dict(entries or {}).items():
            self[name] = arr

    def __setitem__(self, name: str, arr) -> None:
        if not isinstance(name, str) or not name:
            raise WeightFormatError(f"weight name must be a non-empty string, got {name!r}")
        a = np.asarray(arr, dtype=np.float32)
        if not a.flags["C_CONTIGUOUS"]:        # ascontiguousarray would promote 0-d to 1-d
            a = np.ascontiguousarray(a)
        self._d[name] = a

    def __getitem__(self, name: str) -> np.ndarray:
        return self._d[name]

    def __contains__(self, name) -> bool:
        return name in self._d

    def __iter__(self):
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def names(self) -> list[str]:
        return list(self._d)

    def items(self):
        return self._d.items()

    def element_count(self) -> int:
        return sum(int(a.size) for a in self._d.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightStore):
            return NotImplemented
        return (self.names() == other.names()
                and all(a.shape == other[n].shape and np.array_equal(a, other[n], equal_nan=True)
                        for n, a in self.items()))


def write_weights_bytes(store: WeightStore) -> bytes:
    entries, offset = [], 0
    payload = []
    for name, arr in store.items():
        raw = arr.astype("<f4", copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": offset})
        payload.append(raw)
        offset += len(raw)
    header = json.dumps({"entries": entries, "meta": store.meta},
                        separators=(",", ":"), sort_keys=True).encode("utf-8")
    return MAGIC + len(header).to_bytes(8, "little") + header + b"".join(payload)


def read_weights_bytes(buf: bytes) -> WeightStore:
    if len(buf) < 16:
        raise WeightFormatError(f"file too short for magic and header length ({len(buf)} bytes)")
    if buf[:8] != MAGIC:
        raise WeightFormatError(f"bad magic {buf[:8]!r}, expected {MAGIC!r}")
    hlen = int.from_bytes(buf[8:16], "little")
    if 16 + hlen > len(buf):
        raise WeightFormatError(f"truncated header: declares {hlen} bytes, {len(buf) - 16} available")
    try:
        header = json.loads(buf[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise WeightFormatError(f"header is not valid UTF-8 JSON: {e}") from e
    if not isinstance(header, dict) or not isinstance(header.get("entries"), list):
        raise WeightFormatError("header must be an object with an 'entries' list")
    payload = buf[16 + hlen:]
    store = WeightStore(meta=header.get("meta") or {})
    prev_end, seen = 0, set()
    for i, e in enumerate(header["entries"]):
        if not (isinstance(e, dict) and isinstance(e.get("name"), str)
                and isinstance(e.get("shape"), list) and isinstance(e.get("offset"), int)):
            raise WeightFormatError(f"entry {i} malformed: {e!r}")
        name, shape, off = e["name"], e["shape"], e["offset"]
        if e.get("dtype") != "f32":
            raise WeightFormatError(f"entry {name!r}: unsupported dtype {e.get('dtype')!r}")
        if name in seen:
            raise WeightFormatError(f"duplicate entry name {name!r}")
        seen.add(name)
        if any(not isinstance(d, int) or d < 0 for d in shape):
            raise WeightFormatError(f"entry {name!r}: bad shape {shape}")
        if off % 4 != 0:
            raise WeightFormatError(f"entry {name!r}: offset {off} not 4-byte aligned")
        if off < prev_end:
            raise WeightFormatError(
                f"entry {name!r}: offset {off} overlaps previous entry ending at {prev_end}")
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = off + 4 * n
        if end > len(payload):
            raise WeightFormatError(
                f"entry {name!r}: needs payload bytes [{off}, {end}), only {len(payload)} present")
        arr = np.frombuffer(payload[off:end], dtype="<f4").reshape(shape)
        store[name] = arr
        prev_end = end
    if prev_end != len(payload):
        raise WeightFormatError(
            f"payload has {len(payload) - prev_end} trailing bytes past last entry")
    return store


def save_weights(path, store: WeightStore) -> None:
    with open(path, "wb") as f:
        f.write(write_weights_bytes(store))


def load_weights(path) -> WeightStore:
    with open(path, "rb") as f:
        return read_weights_bytes(f.read())
