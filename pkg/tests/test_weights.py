"""Weight container format: bit-exact roundtrips and malformation errors."""

import json
import struct

import numpy as np
import pytest

from mseg.errors import WeightFormatError
from mseg.weights import (MAGIC, WeightStore, load_weights, read_weights_bytes, save_weights,
                          write_weights_bytes)


def random_store(rng) -> WeightStore:
    n = int(rng.integers(1, 8))
    store = WeightStore(meta={"tag": int(rng.integers(0, 100))})
    for i in range(n):
        ndim = int(rng.integers(0, 5))
        shape = tuple(int(d) for d in rng.integers(1, 6, size=ndim))
        store[f"t{i}.w"] = rng.standard_normal(shape).astype(np.float32)
    return store


def patched_header(buf: bytes, mutate) -> bytes:
    """Re-encode the header JSON after applying ``mutate`` to it."""
    hlen = int.from_bytes(buf[8:16], "little")
    header = json.loads(buf[16:16 + hlen])
    mutate(header)
    raw = json.dumps(header, separators=(",", ":")).encode()
    return MAGIC + len(raw).to_bytes(8, "little") + raw + buf[16 + hlen:]


class TestRoundtrip:
    def test_bytes_roundtrip_bit_exact(self):
        rng = np.random.default_rng(0)
        store = random_store(rng)
        got = read_weights_bytes(write_weights_bytes(store))
        assert got == store
        assert got.meta == store.meta
        # and the write of the read is byte-identical
        assert write_weights_bytes(got) == write_weights_bytes(store)

    def test_randomized_roundtrips(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            store = random_store(rng)
            assert read_weights_bytes(write_weights_bytes(store)) == store

    def test_file_roundtrip(self, tmp_path):
        store = random_store(np.random.default_rng(3))
        p = tmp_path / "w.mw1"
        save_weights(p, store)
        assert load_weights(p) == store

    def test_special_values_survive(self):
        store = WeightStore({"x": np.array([0.0, -0.0, np.inf, -np.inf, np.nan, 1e-45],
                                           dtype=np.float32)})
        got = read_weights_bytes(write_weights_bytes(store))
        assert got == store

    def test_order_preserved_and_offsets_packed(self):
        store = WeightStore({"b": np.zeros(3, np.float32), "a": np.ones((2, 2), np.float32)})
        buf = write_weights_bytes(store)
        header = json.loads(buf[16:16 + int.from_bytes(buf[8:16], "little")])
        assert [e["name"] for e in header["entries"]] == ["b", "a"]
        assert [e["offset"] for e in header["entries"]] == [0, 12]
        assert read_weights_bytes(buf).names() == ["b", "a"]

    def test_payload_is_little_endian_f32(self):
        store = WeightStore({"x": np.array([1.5], dtype=np.float32)})
        buf = write_weights_bytes(store)
        assert buf[-4:] == struct.pack("<f", 1.5)

    def test_scalar_and_empty_meta(self):
        store = WeightStore({"s": np.float32(2.5)})
        got = read_weights_bytes(write_weights_bytes(store))
        assert got["s"].shape == () and got["s"] == np.float32(2.5)
        assert got.meta == {}


class TestStore:
    def test_casts_to_f32_contiguous(self):
        store = WeightStore()
        store["x"] = np.arange(6, dtype=np.float64).reshape(2, 3).T
        assert store["x"].dtype == np.float32
        assert store["x"].flags["C_CONTIGUOUS"]

    def test_element_count(self):
        store = WeightStore({"a": np.zeros((2, 3), np.float32), "b": np.zeros(5, np.float32)})
        assert store.element_count() == 11

    def test_rejects_bad_name(self):
        store = WeightStore()
        with pytest.raises(WeightFormatError):
            store[""] = np.zeros(1, np.float32)


class TestMalformed:
    def buf(self):
        return write_weights_bytes(WeightStore({"a": np.ones((2, 2), np.float32),
                                                "b": np.zeros(3, np.float32)}))

    def test_too_short(self):
        with pytest.raises(WeightFormatError, match="too short"):
            read_weights_bytes(b"MSEG")

    def test_bad_magic(self):
        with pytest.raises(WeightFormatError, match="bad magic"):
            read_weights_bytes(b"XSEGW1\x00\x00" + self.buf()[8:])

    def test_truncated_header(self):
        buf = self.buf()
        huge = (1 << 20).to_bytes(8, "little")
        with pytest.raises(WeightFormatError, match="truncated header"):
            read_weights_bytes(buf[:8] + huge + buf[16:])

    def test_header_not_json(self):
        raw = b"not json at all"
        buf = MAGIC + len(raw).to_bytes(8, "little") + raw
        with pytest.raises(WeightFormatError, match="not valid UTF-8 JSON"):
            read_weights_bytes(buf)

    def test_header_not_object(self):
        raw = json.dumps([1, 2]).encode()
        buf = MAGIC + len(raw).to_bytes(8, "little") + raw
        with pytest.raises(WeightFormatError, match="'entries' list"):
            read_weights_bytes(buf)

    def test_unsupported_dtype(self):
        with pytest.raises(WeightFormatError, match="unsupported dtype"):
            read_weights_bytes(patched_header(self.buf(), lambda h: h["entries"][0].update(dtype="f64")))

    def test_duplicate_name(self):
        with pytest.raises(WeightFormatError, match="duplicate"):
            read_weights_bytes(patched_header(self.buf(), lambda h: h["entries"][1].update(
                name="a", shape=[3], offset=h["entries"][1]["offset"])))

    def test_negative_shape(self):
        with pytest.raises(WeightFormatError, match="bad shape"):
            read_weights_bytes(patched_header(self.buf(), lambda h: h["entries"][0].update(shape=[-2, 2])))

    def test_misaligned_offset(self):
        def mutate(h):
            h["entries"][1]["offset"] += 2
        with pytest.raises(WeightFormatError, match="not 4-byte aligned"):
            read_weights_bytes(patched_header(self.buf(), mutate))

    def test_overlapping_entries(self):
        def mutate(h):
            h["entries"][1]["offset"] -= 4
        with pytest.raises(WeightFormatError, match="overlaps"):
            read_weights_bytes(patched_header(self.buf(), mutate))

    def test_truncated_payload(self):
        with pytest.raises(WeightFormatError, match="needs payload bytes"):
            read_weights_bytes(self.buf()[:-4])

    def test_trailing_payload(self):
        with pytest.raises(WeightFormatError, match="trailing bytes"):
            read_weights_bytes(self.buf() + b"\x00\x00\x00\x00")

    def test_malformed_entry_record(self):
        with pytest.raises(WeightFormatError, match="entry 0 malformed"):
            read_weights_bytes(patched_header(self.buf(), lambda h: h["entries"].__setitem__(0, {"name": 3})))
