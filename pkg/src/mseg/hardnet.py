"""Harmonic-dense backbone: sparse block connectivity and encoder assembly.

Layer ``l`` of a block links back to layers ``l - 2**j`` for every power of
two dividing ``l``, and widens by ``m**v2(l)`` (rounded down, then up to
even).  Connection count per layer is ``v2(l)+1``, so a block has
O(n log n) shortcuts instead of a dense block's O(n^2).

All connectivity specifics live in :func:`hard_links` and
:func:`build_hardblock` so a divergence found against exported reference
checkpoints is a one-function fix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GraphBuildError, ShapeError
from .graph import Graph, GraphNode, run_graph, check_weights
from .ops import ConvSpec


def hard_links(layer_index: int, k: int, m: float) -> tuple[list[int], int]:
    """Input links and output width for one block layer.

    links = sorted { l - 2**j : 2**j divides l }, width = k*m**v2(l)
    floored and rounded up to even.
    """
    l = layer_index
    if l < 1:
        raise ShapeError(f"layer index must be >= 1, got {l}")
    links, j = [], 0
    while l % (1 << j) == 0:
        d = l - (1 << j)
        if d >= 0:
            links.append(d)
        j += 1
    links.sort()
    v = (l & -l).bit_length() - 1
    width = int(math.floor(k * m**v))
    if width % 2:
        width += 1
    return links, width


@dataclass(frozen=True)
class HarDBlockCfg:
    n_layers: int
    growth: int
    multiplier: float
    base_ch: int

    def __post_init__(self):
        if self.n_layers < 1 or self.growth < 1 or self.base_ch < 1:
            raise ShapeError(f"invalid block config {self}")
        if self.multiplier <= 1.0:
            raise ShapeError(f"growth multiplier must be > 1, got {self.multiplier}")


def block_plan(cfg: HarDBlockCfg, connectivity: str = "sparse"):
    """Per-layer (links, in_ch, out_ch) plus the output layer selection.

    ``connectivity="dense"`` keeps the width rule but links every previous
    layer, the hypothetical all-shortcut block used for traffic comparisons.
    """
    if connectivity not in ("sparse", "dense"):
        raise ShapeError(f"unknown connectivity {connectivity!r}")
    widths = {0: cfg.base_ch}
    layers = []
    for l in range(1, cfg.n_layers + 1):
        links, width = hard_links(l, cfg.growth, cfg.multiplier)
        if connectivity == "dense":
            links = list(range(l))
        widths[l] = width
        layers.append((links, sum(widths[s] for s in links), width))
    out_layers = sorted({l for l in range(1, cfg.n_layers + 1) if l % 2 == 1} | {cfg.n_layers})
    out_ch = sum(widths[l] for l in out_layers)
    return layers, out_layers, out_ch


class _Builder:
    """Append-only graph construction with conv/norm/act triplets."""

    def __init__(self, activation: str, norm: str):
        self.nodes: list[GraphNode] = [GraphNode("input", "input")]
        self.activation = activation
        self.norm = norm

    def add(self, node: GraphNode) -> str:
        self.nodes.append(node)
        return node.name

    def conv_block(self, name: str, src: str, spec: ConvSpec, act: str | None = "default",
                   norm: str | None = "default") -> str:
        """conv -> optional norm -> optional activation; returns last node name."""
        norm = self.norm if norm == "default" else norm
        act = self.activation if act == "default" else act
        use_bn = norm == "bn"
        spec = replace(spec, has_bias=not use_bn)
        out = self.add(GraphNode(name, "conv", [src], spec=spec))
        if use_bn:
            out = self.add(GraphNode(f"{name}.norm", "bn", [out], spec=spec))
        if act:
            out = self.add(GraphNode(f"{name}.act", "act", [out], kind=act))
        return out


def build_hardblock(cfg: HarDBlockCfg, builder: _Builder, src: str, prefix: str,
                    connectivity: str = "sparse") -> tuple[str, int]:
    """Emit one block into the builder; returns (output node, out channels)."""
    layers, out_layers, out_ch = block_plan(cfg, connectivity)
    produced = {0: src}
    for l, (links, in_ch, width) in enumerate(layers, start=1):
        if len(links) == 1:
            inp = produced[links[0]]
        else:
            inp = builder.add(GraphNode(f"{prefix}.l{l}.cat", "concat", [produced[s] for s in links]))
        spec = ConvSpec(in_ch, width, kernel=(3, 3), padding=(1, 1))
        produced[l] = builder.conv_block(f"{prefix}.l{l}", inp, spec)
    if len(out_layers) == 1:
        return produced[out_layers[0]], out_ch
    out = builder.add(GraphNode(f"{prefix}.out", "concat", [produced[l] for l in out_layers]))
    return out, out_ch


@dataclass(frozen=True)
class StemOp:
    kind: str                  # "conv" | "maxpool"
    out_ch: int = 0
    kernel: int = 3
    stride: int = 1


@dataclass(frozen=True)
class StageCfg:
    growth: int
    n_layers: int
    transition_ch: int
    downsample: bool


@dataclass(frozen=True)
class TapCfg:
    name: str
    stage: int                 # 1-based
    point: str                 # "transition" | "down"
    stride: int


@dataclass(frozen=True)
class BackboneCfg:
    name: str
    multiplier: float
    stem: tuple[StemOp, ...]
    stages: tuple[StageCfg, ...]
    taps: tuple[TapCfg, ...]
    activation: str = "relu6"
    norm: str = "bn"


@dataclass
class FeaturePyramid:
    f8: np.ndarray
    f16: np.ndarray
    f32: np.ndarray


def build_backbone(cfg: BackboneCfg, builder: _Builder | None = None) -> Graph:
    """Stem, then HarDBlock -> 1x1 transition -> optional 2x2/s2 maxpool per
    stage, with taps checked against their declared strides."""
    own = builder is None
    b = builder or _Builder(cfg.activation, cfg.norm)
    cur, ch, stride = "input", 3, 1
    for i, op in enumerate(cfg.stem):
        if op.kind == "conv":
            spec = ConvSpec(ch, op.out_ch, kernel=(op.kernel, op.kernel),
                            stride=(op.stride, op.stride), padding=(op.kernel // 2, op.kernel // 2))
            cur = b.conv_block(f"stem{i}", cur, spec)
            ch = op.out_ch
        elif op.kind == "maxpool":
            pad = 1 if op.kernel == 3 else 0
            cur = b.add(GraphNode(f"stem{i}.pool", "maxpool", [cur], kernel=(op.kernel, op.kernel),
                                  stride=(op.stride, op.stride), padding=(pad, pad)))
        else:
            raise GraphBuildError(f"unknown stem op kind {op.kind!r}")
        stride *= op.stride
    taps_by_key = {(t.stage, t.point): t for t in cfg.taps}
    tap_nodes: dict[str, str] = {}

    def maybe_tap(stage_idx, point, node, width):
        t = taps_by_key.get((stage_idx, point))
        if t is None:
            return
        if stride != t.stride:
            raise GraphBuildError(
                f"stage {stage_idx}: tap {t.name!r} declared stride {t.stride} but stride bookkeeping gives {stride}")
        tap_nodes[t.name] = node
        tap_channels[t.name] = width

    tap_channels: dict[str, int] = {}
    for si, st in enumerate(cfg.stages, start=1):
        blk = HarDBlockCfg(st.n_layers, st.growth, cfg.multiplier, ch)
        cur, ch = build_hardblock(blk, b, cur, f"s{si}")
        cur = b.conv_block(f"s{si}.trans", cur, ConvSpec(ch, st.transition_ch))
        ch = st.transition_ch
        maybe_tap(si, "transition", cur, ch)
        if st.downsample:
            cur = b.add(GraphNode(f"s{si}.down", "maxpool", [cur], kernel=(2, 2), stride=(2, 2)))
            stride *= 2
            maybe_tap(si, "down", cur, ch)
    missing = [t.name for t in cfg.taps if t.name not in tap_nodes]
    if missing:
        raise GraphBuildError(f"taps never reached during build: {missing}")
    if own:
        g = Graph(b.nodes, taps=dict(sorted(tap_nodes.items())),
                  meta={"preset": cfg.name, "tap_channels": tap_channels, "final": cur})
        return g
    # embedded in a larger build: hand back bookkeeping through the builder
    b.tap_nodes = tap_nodes
    b.tap_channels = tap_channels
    return cur


def forward_backbone(graph: Graph, weights, x) -> FeaturePyramid:
    check_weights(graph, weights)
    if x.shape[1] != 3:
        raise ShapeError(f"backbone input must have 3 channels, got {x.shape[1]}")
    out = run_graph(graph, weights, x, outputs=["f8", "f16", "f32"])
    return FeaturePyramid(out["f8"], out["f16"], out["f32"])


# ---------------------------------------------------------------------------
# presets


def _hardnet68_cfg() -> BackboneCfg:
    return BackboneCfg(
        name="hardnet68-mseg",
        multiplier=1.7,
        stem=(StemOp("conv", 32, 3, 2), StemOp("conv", 64, 3, 1), StemOp("maxpool", kernel=3, stride=2)),
        stages=(
            StageCfg(14, 8, 128, True),
            StageCfg(16, 16, 256, False),
            StageCfg(20, 16, 320, True),
            StageCfg(40, 16, 640, True),
            StageCfg(160, 4, 1024, False),
        ),
        taps=(TapCfg("f8", 3, "transition", 8), TapCfg("f16", 4, "transition", 16),
              TapCfg("f32", 5, "transition", 32)),
    )


def _tiny_cfg() -> BackboneCfg:
    return BackboneCfg(
        name="tiny",
        multiplier=1.7,
        stem=(StemOp("conv", 16, 3, 2), StemOp("maxpool", kernel=3, stride=2)),
        stages=(StageCfg(8, 4, 32, True), StageCfg(10, 4, 48, True), StageCfg(12, 4, 64, True)),
        taps=(TapCfg("f8", 1, "down", 8), TapCfg("f16", 2, "down", 16), TapCfg("f32", 3, "down", 32)),
        norm="none",
    )


def _small_cfg() -> BackboneCfg:
    return BackboneCfg(
        name="small",
        multiplier=1.7,
        stem=(StemOp("conv", 24, 3, 2), StemOp("conv", 32, 3, 1), StemOp("maxpool", kernel=3, stride=2)),
        stages=(StageCfg(12, 6, 64, True), StageCfg(16, 6, 96, True), StageCfg(20, 6, 128, True)),
        taps=(TapCfg("f8", 1, "down", 8), TapCfg("f16", 2, "down", 16), TapCfg("f32", 3, "down", 32)),
        norm="none",
    )


BACKBONE_PRESETS = {
    "hardnet68-mseg": _hardnet68_cfg,
    "tiny": _tiny_cfg,
    "small": _small_cfg,
}


def backbone_preset(name: str) -> BackboneCfg:
    try:
        return BACKBONE_PRESETS[name]()
    except KeyError:
        raise ShapeError(f"unknown backbone preset {name!r}; known: {sorted(BACKBONE_PRESETS)}") from None
