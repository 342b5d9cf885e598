"""Two-column name-map files.

Each non-blank, non-comment line maps one reference checkpoint tensor to one
output entry name:

    reference.tensor.name    engine.entry.name

Columns are separated by whitespace. `#` starts a comment. Both columns must
be unique across the file: a reference tensor feeds exactly one entry and an
entry is produced by exactly one tensor.
"""

from __future__ import annotations

from .errors import MapFormatError


def parse_namemap(text, origin="<string>"):
    """Parse name-map text into an ordered list of (ref_name, out_name)."""
    pairs = []
    seen_ref = {}
    seen_out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.split()
        if len(cols) != 2:
            raise MapFormatError(
                f"{origin}:{lineno}: expected 2 columns, got {len(cols)}: {raw.strip()!r}"
            )
        ref, out = cols
        if ref in seen_ref:
            raise MapFormatError(
                f"{origin}:{lineno}: reference tensor {ref!r} already mapped on line {seen_ref[ref]}"
            )
        if out in seen_out:
            raise MapFormatError(
                f"{origin}:{lineno}: output entry {out!r} already produced on line {seen_out[out]}"
            )
        seen_ref[ref] = lineno
        seen_out[out] = lineno
        pairs.append((ref, out))
    if not pairs:
        raise MapFormatError(f"{origin}: name map is empty")
    return pairs


def read_namemap(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise MapFormatError(f"cannot read name map {path}: {e}") from e
    return parse_namemap(text, origin=str(path))
