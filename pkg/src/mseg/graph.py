"""Static dataflow graphs over the tensor kernels.

A :class:`Graph` is a topologically ordered list of nodes; each node names
its op kind, its input edges and the weight-store entries it reads.  The
same graph runs under two backends: the plain numpy kernels for inference
and the autodiff wrappers for training, selected by which module is passed
to :func:`run_graph`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import GraphBuildError, NumericError, ShapeError

OP_KINDS = ("input", "conv", "bn", "act", "maxpool", "upsample_like", "ewise", "concat")


@dataclass
class GraphNode:
    name: str
    op: str
    inputs: list[str] = field(default_factory=list)
    spec: ops.ConvSpec | None = None          # conv
    kind: str = ""                            # act / ewise flavor
    kernel: tuple[int, int] = (2, 2)          # maxpool
    stride: tuple[int, int] = (2, 2)
    padding: tuple[int, int] = (0, 0)
    eps: float = 1e-5                         # bn
    align_corners: bool = False               # upsample_like

    def weight_entries(self) -> list[tuple[str, tuple[int, ...]]]:
        """(store entry name, shape) pairs this node reads, in load order."""
        if self.op == "conv":
            out = [(f"{self.name}.w", self.spec.weight_shape)]
            if self.spec.has_bias:
                out.append((f"{self.name}.b", (self.spec.out_ch,)))
            return out
        if self.op == "bn":
            c = self.spec.out_ch
            return [(f"{self.name}.{p}", (c,)) for p in ("gamma", "beta", "mean", "var")]
        return []


@dataclass
class Graph:
    nodes: list[GraphNode]
    input_name: str = "input"
    taps: dict[str, str] = field(default_factory=dict)   # tap -> node name
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {n.name: n for n in self.nodes}
        if len(self._index) != len(self.nodes):
            raise GraphBuildError("duplicate node names in graph")
        seen = set()
        for n in self.nodes:
            if n.op not in OP_KINDS:
                raise GraphBuildError(f"node {n.name!r} has unknown op {n.op!r}")
            for src in n.inputs:
                if src not in seen:
                    raise GraphBuildError(f"node {n.name!r} consumes {src!r} before it is produced")
            seen.add(n.name)
        for tap, target in self.taps.items():
            if target not in self._index:
                raise GraphBuildError(f"tap {tap!r} points at missing node {target!r}")

    def node(self, name: str) -> GraphNode:
        return self._index[name]

    def weight_entries(self) -> list[tuple[str, tuple[int, ...]]]:
        out = []
        for n in self.nodes:
            out.extend(n.weight_entries())
        return out

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.weight_entries())


def infer_shapes(graph: Graph, input_shape: tuple[int, int, int, int]) -> dict[str, tuple]:
    """Propagate (n,c,h,w) through every node without running any math."""
    shapes: dict[str, tuple] = {}
    for node in graph.nodes:
        if node.op == "input":
            shapes[node.name] = tuple(input_shape)
            continue
        ins = [shapes[s] for s in node.inputs]
        n, c, h, w = ins[0]
        if node.op == "conv":
            if c != node.spec.in_ch:
                raise GraphBuildError(f"node {node.name!r}: input has {c} channels, conv expects {node.spec.in_ch}")
            try:
                oh, ow = node.spec.out_size(h, w)
            except ShapeError as e:
                raise GraphBuildError(f"node {node.name!r}: {e}") from e
            shapes[node.name] = (n, node.spec.out_ch, oh, ow)
        elif node.op in ("bn", "act"):
            shapes[node.name] = ins[0]
        elif node.op == "maxpool":
            kh, kw = node.kernel
            sh, sw = node.stride
            ph, pw = node.padding
            oh = (h + 2 * ph - kh) // sh + 1
            ow = (w + 2 * pw - kw) // sw + 1
            if oh < 1 or ow < 1:
                raise GraphBuildError(f"node {node.name!r}: pooled output would be {oh}x{ow}")
            shapes[node.name] = (n, c, oh, ow)
        elif node.op == "upsample_like":
            ref = shapes[node.inputs[1]]
            shapes[node.name] = (n, c, ref[2], ref[3])
        elif node.op == "ewise":
            if ins[0] != ins[1]:
                raise GraphBuildError(f"node {node.name!r}: ewise operands {ins[0]} vs {ins[1]}")
            shapes[node.name] = ins[0]
        elif node.op == "concat":
            for s in ins[1:]:
                if (s[0], s[2], s[3]) != (n, h, w):
                    raise GraphBuildError(f"node {node.name!r}: concat operand {s} mismatches {ins[0]}")
            shapes[node.name] = (n, sum(s[1] for s in ins), h, w)
    return shapes


def init_weights(graph: Graph, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """He-style init for conv kernels, zeros/identity stats elsewhere."""
    rng = np.random.default_rng(seed)
    store: dict[str, np.ndarray] = {}
    for node in graph.nodes:
        if node.op == "conv":
            fan_in = node.spec.in_ch // node.spec.groups * node.spec.kernel[0] * node.spec.kernel[1]
            std = np.sqrt(2.0 / fan_in)
            store[f"{node.name}.w"] = (rng.standard_normal(node.spec.weight_shape) * std).astype(dtype)
            if node.spec.has_bias:
                store[f"{node.name}.b"] = np.zeros(node.spec.out_ch, dtype=dtype)
        elif node.op == "bn":
            c = node.spec.out_ch
            store[f"{node.name}.gamma"] = np.ones(c, dtype=dtype)
            store[f"{node.name}.beta"] = np.zeros(c, dtype=dtype)
            store[f"{node.name}.mean"] = np.zeros(c, dtype=dtype)
            store[f"{node.name}.var"] = np.ones(c, dtype=dtype)
    return store


def check_weights(graph: Graph, weights) -> None:
    """Every graph entry must exist with the exact shape; extras are ignored."""
    for name, shape in graph.weight_entries():
        if name not in weights:
            raise ShapeError(f"weight store is missing entry {name!r}")
        got = tuple(weights[name].shape)
        if got != tuple(shape):
            raise ShapeError(f"weight {name!r} has shape {got}, graph expects {tuple(shape)}")


def run_graph(graph: Graph, weights, x, outputs=None, backend=ops, check_finite: bool = True,
              trace: dict | None = None, order: list[str] | None = None):
    """Evaluate the graph on ``x`` and return {output name: value}.

    ``weights`` maps entry names to arrays (or autodiff Vars when the
    autodiff backend is used).  ``order`` may supply an alternative
    topological order; results must not depend on it.
    """
    wanted = list(outputs) if outputs is not None else list(graph.taps) or [graph.nodes[-1].name]
    node_seq = [graph.node(nm) for nm in order] if order else graph.nodes
    vals: dict[str, object] = {}
    for node in node_seq:
        ins = [vals[s] for s in node.inputs]
        if node.op == "input":
            out = x
        elif node.op == "conv":
            b = weights[f"{node.name}.b"] if node.spec.has_bias else None
            out = backend.conv2d(ins[0], weights[f"{node.name}.w"], b, node.spec)
        elif node.op == "bn":
            out = backend.batchnorm_infer(
                ins[0], weights[f"{node.name}.gamma"], weights[f"{node.name}.beta"],
                weights[f"{node.name}.mean"], weights[f"{node.name}.var"], node.eps)
        elif node.op == "act":
            out = backend.activation(ins[0], node.kind)
        elif node.op == "maxpool":
            out = backend.maxpool2d(ins[0], node.kernel, node.stride, node.padding)
        elif node.op == "upsample_like":
            ref = ins[1]
            rh, rw = (ref.data.shape if hasattr(ref, "data") else ref.shape)[2:]
            out = backend.upsample_bilinear(ins[0], rh, rw, node.align_corners)
        elif node.op == "ewise":
            out = backend.ewise(ins[0], ins[1], node.kind)
        else:  # concat
            out = backend.concat_channels(ins)
        if check_finite:
            data = out.data if hasattr(out, "data") else out
            if not np.all(np.isfinite(data)):
                raise NumericError(f"non-finite values produced at node {node.name!r}")
        vals[node.name] = out
        if trace is not None:
            trace[node.name] = out
    resolved = {}
    for name in wanted:
        target = graph.taps.get(name, name)
        resolved[name] = vals[target]
    return resolved


def fold_batchnorms(graph: Graph, weights) -> tuple[Graph, dict[str, np.ndarray]]:
    """Fold every conv->bn pair into a biased conv; other nodes pass through.

    Only bn nodes whose single input is a conv consumed by nothing else are
    folded, which covers every graph this package builds.
    """
    consumers: dict[str, int] = {}
    for n in graph.nodes:
        for s in n.inputs:
            consumers[s] = consumers.get(s, 0) + 1

    folded: dict[str, str] = {}       # bn node -> conv node it merged into
    new_nodes: list[GraphNode] = []
    new_weights: dict[str, np.ndarray] = {}
    for node in graph.nodes:
        if node.op == "bn":
            src = graph.node(node.inputs[0])
            if src.op == "conv" and consumers.get(src.name, 0) == 1:
                spec = src.spec
                w = weights[f"{src.name}.w"]
                b = weights[f"{src.name}.b"] if spec.has_bias else None
                w2, b2 = ops.batchnorm_fold(
                    w, b, weights[f"{node.name}.gamma"], weights[f"{node.name}.beta"],
                    weights[f"{node.name}.mean"], weights[f"{node.name}.var"], node.eps)
                prev = new_nodes[-1]
                assert prev.name == src.name
                new_spec = ops.ConvSpec(spec.in_ch, spec.out_ch, spec.kernel, spec.stride,
                                        spec.padding, spec.dilation, spec.groups, has_bias=True)
                new_nodes[-1] = GraphNode(src.name, "conv", list(src.inputs), spec=new_spec)
                new_weights[f"{src.name}.w"] = w2
                new_weights[f"{src.name}.b"] = b2
                folded[node.name] = src.name
                continue
        remapped = [folded.get(s, s) for s in node.inputs]
        new_nodes.append(GraphNode(node.name, node.op, remapped, spec=node.spec, kind=node.kind,
                                   kernel=node.kernel, stride=node.stride, padding=node.padding,
                                   eps=node.eps, align_corners=node.align_corners))
        for wname, _ in node.weight_entries():
            new_weights[wname] = weights[wname]
    taps = {t: folded.get(nm, nm) for t, nm in graph.taps.items()}
    return Graph(new_nodes, graph.input_name, taps, dict(graph.meta)), new_weights
