"""Command-line interface: summary, infer, eval, bench, gradcheck, train-toy.

Exit codes are normative: 0 success, 1 usage error, 2 data/file error,
3 numeric failure.  Every run echoes its fully resolved configuration
(reproducibility header) before its outputs.  ``--format json`` swaps the
human tables for stable-keyed JSON on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analyzer, gradcheck, imageio, metrics
from . import graph as G
from .decoder import MODEL_PRESETS, build_mseg, forward_mseg, model_preset
from .errors import ConfigError, GraphBuildError, ImageFormatError, NumericError, ShapeError, \
    WeightFormatError
from .presets import load_preset
from .synthblobs import gen_blobs
from .train import train_toy
from .weights import WeightStore, load_weights, save_weights


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _resolve_model(preset: str | None, store: WeightStore | None):
    """Preset name, preset file path, or the weight store's own metadata."""
    name = preset
    if name is None and store is not None:
        name = store.meta.get("preset")
    if name is None:
        raise UsageError("no preset given and the weight store names none; pass --preset")
    if name in MODEL_PRESETS:
        bcfg, dcfg = model_preset(name)
    else:
        path = Path(name)
        if not path.exists():
            raise UsageError(f"--preset {name!r} is neither a builtin preset nor a file; "
                             f"builtins: {sorted(MODEL_PRESETS)}")
        bcfg, dcfg = load_preset(path)
    return build_mseg(bcfg, dcfg), bcfg.name


def _echo(cfg: dict, fmt: str):
    if fmt == "table":
        print("# config " + json.dumps(cfg, sort_keys=True))


def _emit(payload: dict, text: str, fmt: str):
    if fmt == "json":
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def _check_flags(args):
    """Bad flag values are usage errors (exit 1), not data errors (exit 2)."""
    thresh = getattr(args, "thresh", None)
    if thresh is not None and not 0.0 <= thresh <= 1.0:
        raise UsageError(f"--thresh must lie in [0,1], got {thresh}")
    size = getattr(args, "size", None)
    if size is not None and size < 64:
        raise UsageError(f"--size must be >= 64, got {size}")
    for flag in ("samples", "epochs", "batch", "warmup"):
        v = getattr(args, flag, None)
        if v is not None and v < 1:
            raise UsageError(f"--{flag} must be >= 1, got {v}")
    if getattr(args, "iters", None) is not None and args.iters < 10:
        raise UsageError(f"--iters must be >= 10, got {args.iters}")


def _norm_from_meta(store: WeightStore):
    mean = store.meta.get("mean", list(imageio.IMAGENET_MEAN))
    std = store.meta.get("std", list(imageio.IMAGENET_STD))
    return [float(v) for v in mean], [float(v) for v in std]


def cmd_summary(args) -> int:
    graph, name = _resolve_model(args.preset, None)
    cfg = {"cmd": "summary", "preset": name, "size": args.size, "format": args.format}
    _echo(cfg, args.format)
    s = analyzer.summarize(graph, (1, 3, args.size, args.size))
    payload = {"config": cfg, **s.to_dict(),
               "weight_entries": [{"name": n, "shape": list(sh)} for n, sh in graph.weight_entries()]}
    _emit(payload, analyzer.format_summary(s), args.format)
    return 0


def cmd_infer(args) -> int:
    store = load_weights(args.weights)
    graph, name = _resolve_model(args.preset, store)
    size = args.size if args.size is not None else int(store.meta.get("input_size", 352))
    thresh = args.thresh
    cfg = {"cmd": "infer", "preset": name, "weights": args.weights, "in": getattr(args, "in"),
           "out": args.out, "size": size, "thresh": thresh, "format": args.format}
    _echo(cfg, args.format)
    img = imageio.read_ppm(getattr(args, "in"))
    mean, std = _norm_from_meta(store)
    x = imageio.preprocess(img, size, mean, std)
    weights, folded = dict(store.items()), False
    if any(n.op == "bn" for n in graph.nodes):
        graph, weights = G.fold_batchnorms(graph, weights)
        folded = True
    prob = forward_mseg(graph, weights, x)["prob"][0, 0].astype(np.float64)
    h, w = img.shape[:2]
    if prob.shape != (h, w):
        from . import ops
        prob = np.clip(ops.upsample_bilinear(prob[None, None], h, w)[0, 0], 0.0, 1.0)
    mask = metrics.binarize(prob, thresh)
    imageio.write_pgm(args.out, imageio.binary_to_u8(mask))
    stats = {"mean_prob": float(prob.mean()), "max_prob": float(prob.max()),
             "foreground_fraction": float(mask.mean()), "mask_shape": [h, w],
             "bn_folded": folded}
    _emit({"config": cfg, **stats},
          f"mask {w}x{h}  mean_prob {stats['mean_prob']:.4f}  max_prob {stats['max_prob']:.4f}  "
          f"foreground {stats['foreground_fraction']:.4f}", args.format)
    return 0


def _load_mask_dir(path: Path, as_prob: bool) -> dict[str, np.ndarray]:
    files = sorted(path.glob("*.pgm"))
    if not files:
        raise FileNotFoundError(f"no .pgm files in {path}")
    out = {}
    for f in files:
        a = imageio.read_pgm(f)
        out[f.stem] = a.astype(np.float64) / 255.0 if as_prob else imageio.mask_from_u8(a)
    return out


def cmd_eval(args) -> int:
    cfg = {"cmd": "eval", "pred": args.pred, "gt": args.gt, "thresh": args.thresh,
           "format": args.format, "json_out": args.json_out}
    _echo(cfg, args.format)
    preds = _load_mask_dir(Path(args.pred), as_prob=True)
    gts = _load_mask_dir(Path(args.gt), as_prob=False)
    report = metrics.evaluate_dataset(preds, gts, args.thresh)
    payload = {"config": cfg, **report.to_dict()}
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    _emit(payload, metrics.format_table(report, per_image=args.per_image), args.format)
    return 0


def cmd_bench(args) -> int:
    if args.weights:
        store = load_weights(args.weights)
        graph, name = _resolve_model(args.preset, store)
        weights = dict(store.items())
        if any(n.op == "bn" for n in graph.nodes):
            graph, weights = G.fold_batchnorms(graph, weights)
    else:
        graph, name = _resolve_model(args.preset, None)
        weights = G.init_weights(graph, seed=args.seed)
    cfg = {"cmd": "bench", "preset": name, "weights": args.weights, "size": args.size,
           "warmup": args.warmup, "iters": args.iters, "threads": args.threads,
           "seed": args.seed, "format": args.format}
    _echo(cfg, args.format)
    rep = analyzer.bench(graph, weights, (1, 3, args.size, args.size), args.warmup,
                         args.iters, args.threads, args.seed)
    text = (f"input {args.size}x{args.size}  iters {rep.measure_iters}  "
            f"mean {rep.mean_s * 1e3:.1f} ms  median {rep.median_s * 1e3:.1f} ms  "
            f"p95 {rep.p95_s * 1e3:.1f} ms  fps {rep.fps:.2f}\nplatform: {rep.platform}\n"
            f"note: {rep.note}")
    _emit({"config": cfg, **rep.to_dict()}, text, args.format)
    return 0


def cmd_gradcheck(args) -> int:
    cfg = {"cmd": "gradcheck", "seed": args.seed, "format": args.format}
    _echo(cfg, args.format)
    results = gradcheck.run_gradcheck(seed=args.seed)
    payload = {"config": cfg, "results": [
        {"name": r.name, "max_rel_err": r.max_rel_err, "tolerance": r.tolerance,
         "passed": r.passed} for r in results]}
    _emit(payload, gradcheck.format_results(results), args.format)
    if not all(r.passed for r in results):
        raise NumericError("gradient check failed for at least one op kind")
    return 0


def cmd_train_toy(args) -> int:
    cfg = {"cmd": "train-toy", "policy": args.policy, "scale": args.scale,
           "samples": args.samples, "epochs": args.epochs, "seed": args.seed,
           "size": args.size, "batch": args.batch, "lr": args.lr, "out": args.out,
           "format": args.format}
    _echo(cfg, args.format)
    ds = gen_blobs(seed=args.seed, n=args.samples, size=args.size)
    res = train_toy(f"{args.policy}-policy", args.scale, ds, args.epochs, args.seed,
                    batch_size=args.batch, lr_override=args.lr)
    store = WeightStore(res.weights, meta={
        "preset": args.scale, "input_size": args.size, "mean": [0.0, 0.0, 0.0],
        "std": [1.0, 1.0, 1.0], **{k: v for k, v in res.meta.items() if k != "input_size"}})
    save_weights(args.out, store)
    base = Path(args.out)
    curve_path = base.with_suffix(base.suffix + ".curve.json")
    report_path = base.with_suffix(base.suffix + ".report.json")
    curve_path.write_text(json.dumps({"train_loss": res.train_loss}) + "\n", encoding="utf-8")
    report_path.write_text(json.dumps(res.report.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    payload = {"config": cfg, "meta": res.meta, "train_loss": res.train_loss,
               "report": res.report.to_dict(), "weights": str(base),
               "curve_file": str(curve_path), "report_file": str(report_path)}
    text = (f"trained {res.meta['n_train']} samples, {args.epochs} epochs, "
            f"final loss {res.train_loss[-1]:.4f}\n"
            + metrics.format_table(res.report)
            + f"\nweights -> {base}\ncurve -> {curve_path}\nreport -> {report_path}")
    _emit(payload, text, args.format)
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="mseg", description="segmentation engine: analyze, run, "
                                         "evaluate, benchmark, gradient-check, train")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_format(sp):
        sp.add_argument("--format", choices=("table", "json"), default="table")

    sp = sub.add_parser("summary", help="per-layer params/MACs/traffic table")
    sp.add_argument("--preset", required=True, help="builtin preset name or preset file path")
    sp.add_argument("--size", type=int, default=352)
    add_format(sp)
    sp.set_defaults(fn=cmd_summary)

    sp = sub.add_parser("infer", help="segment one PPM image into a PGM mask")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--in", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--preset", default=None)
    sp.add_argument("--size", type=int, default=None)
    sp.add_argument("--thresh", type=float, default=0.5)
    add_format(sp)
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("eval", help="score prediction masks against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--thresh", type=float, default=0.5)
    sp.add_argument("--per-image", action="store_true")
    sp.add_argument("--json-out", default=None, help="also write the JSON report here")
    add_format(sp)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("bench", help="wall-clock forward-pass latency")
    sp.add_argument("--weights", default=None)
    sp.add_argument("--preset", default=None)
    sp.add_argument("--size", type=int, default=352)
    sp.add_argument("--warmup", type=int, default=2)
    sp.add_argument("--iters", type=int, default=10)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    add_format(sp)
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("gradcheck", help="finite-difference check of every op kind")
    sp.add_argument("--seed", type=int, default=0)
    add_format(sp)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("train-toy", help="train on synthetic blobs and save weights")
    sp.add_argument("--policy", choices=("sgd", "adam"), required=True)
    sp.add_argument("--scale", choices=("tiny", "small"), default="tiny")
    sp.add_argument("--samples", type=int, required=True)
    sp.add_argument("--epochs", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--size", type=int, default=80)
    sp.add_argument("--batch", type=int, default=4)
    sp.add_argument("--lr", type=float, default=None, help="override the policy learning rate")
    sp.add_argument("--out", required=True)
    add_format(sp)
    sp.set_defaults(fn=cmd_train_toy)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _check_flags(args)
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"file error: {e}", file=sys.stderr)
        return 2
    except (WeightFormatError, ImageFormatError, ConfigError, ShapeError, GraphBuildError,
            ValueError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
