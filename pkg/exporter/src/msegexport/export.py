"""Checkpoint-to-container conversion with a verifiable manifest.

The conversion is intentionally dumb: every output entry is one reference
tensor, renamed per the map and cast to float32. Batch-norm statistics are
carried over as-is (the consumer folds them at load time if it wants to).
What the module adds is accounting: a manifest that records the name, shape,
and SHA-256 of every exported entry plus every reference tensor the map left
behind, and an optional hard cross-check against the consumer's expected
entry list that fails with a complete diff rather than a truncated hint.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .checkpoint import load_checkpoint
from .container import write_container
from .errors import ExportError
from .namemap import read_namemap


def _sha256(arr):
    return hashlib.sha256(np.ascontiguousarray(arr, dtype="<f4").tobytes()).hexdigest()


def load_expected(path):
    """Read an expected-entries JSON file into {name: shape tuple}.

    Accepts either a bare list of {"name", "shape"} records or an object
    holding one under a "weight_entries" key, which is what the consumer's
    model-summary command prints.
    """
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    records = doc.get("weight_entries") if isinstance(doc, dict) else doc
    if not isinstance(records, list):
        raise ExportError(f"{path}: expected a list of entries or a weight_entries key")
    out = {}
    for rec in records:
        try:
            name, shape = rec["name"], tuple(int(d) for d in rec["shape"])
        except (TypeError, KeyError, ValueError) as e:
            raise ExportError(f"{path}: malformed expected entry {rec!r}") from e
        if name in out:
            raise ExportError(f"{path}: duplicate expected entry {name!r}")
        out[name] = shape
    return out


def diff_expected(entries, expected):
    """Compare produced (name, array) pairs against {name: shape}.

    Returns a dict with sorted lists under "missing" (expected, not
    produced), "unexpected" (produced, not expected), and "shape_mismatch"
    (records with both shapes). Empty lists mean a clean match.
    """
    produced = {name: tuple(arr.shape) for name, arr in entries}
    missing = sorted(set(expected) - set(produced))
    unexpected = sorted(set(produced) - set(expected))
    mismatched = [
        {"name": n, "produced": list(produced[n]), "expected": list(expected[n])}
        for n in sorted(set(produced) & set(expected))
        if produced[n] != expected[n]
    ]
    return {"missing": missing, "unexpected": unexpected, "shape_mismatch": mismatched}


def format_diff(diff):
    lines = []
    for name in diff["missing"]:
        lines.append(f"  missing    {name}")
    for name in diff["unexpected"]:
        lines.append(f"  unexpected {name}")
    for rec in diff["shape_mismatch"]:
        lines.append(
            f"  shape      {rec['name']}: produced {tuple(rec['produced'])},"
            f" expected {tuple(rec['expected'])}"
        )
    return "\n".join(lines)


def export(checkpoint_path, map_path, out_path, expected=None, meta=None):
    """Convert a checkpoint into an MSEG-W1 file and return the manifest.

    `expected` is an optional {name: shape} dict; any deviation from it is a
    hard failure listing the full diff. The manifest records every exported
    entry (name, shape, sha256 of the little-endian float32 bytes), the
    reference tensors the map did not consume, and the container's own
    SHA-256 so re-exports can be compared at a glance.
    """
    state = load_checkpoint(checkpoint_path)
    pairs = read_namemap(map_path)

    absent = sorted(ref for ref, _ in pairs if ref not in state)
    if absent:
        raise ExportError(
            "name map references tensors the checkpoint does not contain:\n"
            + "\n".join(f"  {name}" for name in absent)
        )

    entries = [(out, state[ref]) for ref, out in pairs]
    if expected is not None:
        diff = diff_expected(entries, expected)
        if any(diff.values()):
            raise ExportError("export does not match expected entries:\n" + format_diff(diff))

    blob = write_container(entries, meta=meta)
    with open(out_path, "wb") as f:
        f.write(blob)

    mapped_refs = {ref for ref, _ in pairs}
    return {
        "output": str(out_path),
        "container_sha256": hashlib.sha256(blob).hexdigest(),
        "n_entries": len(entries),
        "total_params": int(sum(a.size for _, a in entries)),
        "entries": [
            {"name": name, "shape": list(arr.shape), "sha256": _sha256(arr)}
            for name, arr in entries
        ],
        "unmapped_reference": sorted(set(state) - mapped_refs),
    }
