"""Static cost accounting and wall-clock benchmarking.

The traffic model charges every node its input bytes + output bytes +
weight bytes at 4 bytes/element, once each, ignoring caches.  It is a
model for comparing architectures, not a measurement.  FPS is 1/mean
latency over the measured window at batch 1, network forward only (image
decode and mask encode excluded).
"""

from __future__ import annotations

import math
import platform
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .graph import Graph, infer_shapes
from .decoder import forward_mseg


@dataclass(frozen=True)
class LayerStat:
    node: str
    op: str
    out_shape: tuple[int, ...]
    params: int
    macs: int
    traffic_bytes: int


@dataclass(frozen=True)
class CostSummary:
    input_shape: tuple[int, ...]
    layers: tuple[LayerStat, ...]
    total_params: int
    total_macs: int
    total_traffic_bytes: int

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "total_params": self.total_params,
            "total_macs": self.total_macs,
            "total_traffic_bytes": self.total_traffic_bytes,
            "layers": [{"node": s.node, "op": s.op, "out_shape": list(s.out_shape),
                        "params": s.params, "macs": s.macs,
                        "traffic_bytes": s.traffic_bytes} for s in self.layers],
        }


def _elems(shape) -> int:
    return int(np.prod(shape, dtype=np.int64))


def summarize(graph: Graph, input_shape) -> CostSummary:
    """Per-node params/MACs/traffic via shape propagation (no weights run)."""
    shapes = infer_shapes(graph, tuple(input_shape))
    layers = []
    for node in graph.nodes:
        if node.op == "input":
            continue
        out = shapes[node.name]
        in_elems = sum(_elems(shapes[s]) for s in node.inputs)
        params = macs = weight_elems = 0
        if node.op == "conv":
            spec = node.spec
            weight_elems = _elems(spec.weight_shape)
            if spec.has_bias:
                weight_elems += spec.out_ch
            params = weight_elems
            kh, kw = spec.kernel
            macs = _elems(out) * (spec.in_ch // spec.groups) * kh * kw
        elif node.op == "bn":
            weight_elems = 4 * node.spec.out_ch
            params = weight_elems
        elif node.op == "upsample_like":
            in_elems = _elems(shapes[node.inputs[0]])  # the reference is read for shape only
        traffic = 4 * (in_elems + _elems(out) + weight_elems)
        layers.append(LayerStat(node.name, node.op, out, params, macs, traffic))
    return CostSummary(tuple(input_shape), tuple(layers),
                       sum(s.params for s in layers), sum(s.macs for s in layers),
                       sum(s.traffic_bytes for s in layers))


def concat_input_bytes(summary: CostSummary, prefix: str = "") -> int:
    """Total bytes read by concat nodes (optionally restricted to a name
    prefix): the shortcut-traffic number the sparse wiring minimizes."""
    total = 0
    for s in summary.layers:
        if s.op == "concat" and s.node.startswith(prefix):
            total += s.traffic_bytes - 4 * _elems(s.out_shape)  # concat has no weights
    return total


def format_summary(summary: CostSummary, top: int | None = None) -> str:
    rows = [("node", "op", "out_shape", "params", "macs", "traffic_bytes")]
    layers = summary.layers if top is None else sorted(
        summary.layers, key=lambda s: s.macs, reverse=True)[:top]
    for s in layers:
        rows.append((s.node, s.op, "x".join(map(str, s.out_shape)),
                     str(s.params), str(s.macs), str(s.traffic_bytes)))
    rows.append(("TOTAL", "", "", str(summary.total_params), str(summary.total_macs),
                 str(summary.total_traffic_bytes)))
    widths = [max(len(r[i]) for r in rows) for i in range(6)]
    fmt = "  ".join([f"{{:<{widths[0]}}}", f"{{:<{widths[1]}}}", f"{{:<{widths[2]}}}"]
                    + [f"{{:>{w}}}" for w in widths[3:]])
    return "\n".join(fmt.format(*r) for r in rows)


@dataclass(frozen=True)
class BenchReport:
    input_shape: tuple[int, ...]
    warmup_iters: int
    measure_iters: int
    latencies_s: tuple[float, ...]
    mean_s: float
    median_s: float
    p95_s: float
    fps: float
    thread_count: int | None
    platform: str
    note: str = "forward pass only; image decode and mask encode excluded"

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "warmup_iters": self.warmup_iters,
                "measure_iters": self.measure_iters, "latencies_s": list(self.latencies_s),
                "mean_s": self.mean_s, "median_s": self.median_s, "p95_s": self.p95_s,
                "fps": self.fps, "thread_count": self.thread_count,
                "platform": self.platform, "note": self.note}


def platform_string() -> str:
    return (f"{platform.platform()}; python {platform.python_version()}; "
            f"numpy {np.__version__}; cpu {platform.machine()}")


def bench(graph: Graph, weights, input_shape, warmup_iters: int = 2,
          measure_iters: int = 10, thread_count: int | None = None,
          seed: int = 0) -> BenchReport:
    """Time repeated forwards on one seed-fixed random input."""
    if warmup_iters < 1:
        raise ShapeError(f"warmup_iters must be >= 1, got {warmup_iters}")
    if measure_iters < 10:
        raise ShapeError(f"measure_iters must be >= 10, got {measure_iters}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(size=tuple(input_shape)).astype(np.float32)

    def run_once():
        t0 = time.perf_counter()
        forward_mseg(graph, weights, x)
        return time.perf_counter() - t0

    from contextlib import nullcontext
    limiter = nullcontext()
    if thread_count is not None:
        try:
            from threadpoolctl import threadpool_limits
            limiter = threadpool_limits(limits=thread_count)
        except ImportError:
            pass  # recorded as requested; BLAS keeps its own default
    with limiter:
        for _ in range(warmup_iters):
            run_once()
        lat = tuple(run_once() for _ in range(measure_iters))
    mean = math.fsum(lat) / len(lat)
    srt = sorted(lat)
    p95 = srt[min(len(srt) - 1, math.ceil(0.95 * len(srt)) - 1)]
    return BenchReport(tuple(input_shape), warmup_iters, measure_iters, lat,
                       mean, statistics.median(lat), p95, 1.0 / mean,
                       thread_count, platform_string())
