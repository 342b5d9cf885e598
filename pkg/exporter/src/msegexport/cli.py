"""Command-line interface.

    msegexport export   --checkpoint ckpt.pth --map names.map --out w.mw1
                        [--expected summary.json] [--set-meta key=value ...]
    msegexport probe    --in image.ppm --out probe.mw1 --size N
                        [--mean r,g,b] [--std r,g,b]
    msegexport manifest --weights w.mw1 [--format table|json]

Exit codes: 0 success, 1 usage error, 2 data or file error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from .container import read_container_file
from .errors import ExportError
from .export import export as run_export, load_expected
from .probe import DEFAULT_MEAN, DEFAULT_STD, make_probe


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_triple(text, flag):
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"{flag} wants three comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError as e:
        raise UsageError(f"{flag}: {e}") from e


def _parse_meta(items):
    meta = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set-meta wants key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            meta[key] = json.loads(value)
        except json.JSONDecodeError:
            meta[key] = value
    return meta


def cmd_export(args):
    expected = load_expected(args.expected) if args.expected else None
    manifest = run_export(
        args.checkpoint, args.map, args.out,
        expected=expected, meta=_parse_meta(args.set_meta),
    )
    if args.manifest_out:
        with open(args.manifest_out, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def cmd_probe(args):
    if args.size < 64:
        raise UsageError(f"--size must be >= 64, got {args.size}")
    mean = _parse_triple(args.mean, "--mean") if args.mean else DEFAULT_MEAN
    std = _parse_triple(args.std, "--std") if args.std else DEFAULT_STD
    blob = make_probe(getattr(args, "in"), args.size, mean=mean, std=std)
    with open(args.out, "wb") as f:
        f.write(blob)
    print(json.dumps({"output": args.out, "size": args.size,
                      "sha256": hashlib.sha256(blob).hexdigest()}))
    return 0


def cmd_manifest(args):
    entries, meta = read_container_file(args.weights)
    records = [
        {"name": name, "shape": list(arr.shape),
         "sha256": hashlib.sha256(np.ascontiguousarray(arr, dtype="<f4").tobytes()).hexdigest()}
        for name, arr in entries
    ]
    doc = {"weights": args.weights, "n_entries": len(records),
           "total_params": int(sum(arr.size for _, arr in entries)),
           "meta": meta, "entries": records}
    if args.format == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        width = max((len(r["name"]) for r in records), default=4)
        print(f"{'name':<{width}}  {'shape':<18} sha256")
        for r in records:
            shape = "x".join(str(d) for d in r["shape"]) or "scalar"
            print(f"{r['name']:<{width}}  {shape:<18} {r['sha256'][:16]}")
        print(f"total params {doc['total_params']}, entries {doc['n_entries']}")
    return 0


def build_parser():
    p = _Parser(prog="msegexport", description="Convert checkpoints to MSEG-W1 containers.")
    sub = p.add_subparsers(dest="cmd", required=True)

    q = sub.add_parser("export", help="convert a checkpoint using a name map")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--map", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--expected", help="JSON with expected entries (name/shape) to cross-check")
    q.add_argument("--manifest-out", help="also write the manifest JSON to this path")
    q.add_argument("--set-meta", action="append", metavar="KEY=VALUE")
    q.set_defaults(fn=cmd_export)

    q = sub.add_parser("probe", help="emit a preprocessed-input probe container")
    q.add_argument("--in", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--size", type=int, required=True)
    q.add_argument("--mean", help="r,g,b")
    q.add_argument("--std", help="r,g,b")
    q.set_defaults(fn=cmd_probe)

    q = sub.add_parser("manifest", help="print the manifest of an existing container")
    q.add_argument("--weights", required=True)
    q.add_argument("--format", choices=("table", "json"), default="table")
    q.set_defaults(fn=cmd_manifest)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"file error: {e}", file=sys.stderr)
        return 2
    except (ExportError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
