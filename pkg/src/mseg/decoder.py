"""Decoder: multi-dilation skip modules and cascaded aggregation head.

Each backbone tap passes through a four-branch module (1x1, plus three
separable 1xk/kx1 chains ending in a dilated 3x3), is merged back to a
common width, and the three results are fused coarse-to-fine with
elementwise products and concatenations.  The head emits logits at
stride 8 which are upsampled to the input size; probabilities are the
sigmoid of that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .graph import Graph, GraphNode, run_graph, check_weights
from .hardnet import BackboneCfg, _Builder, build_backbone, backbone_preset
from .ops import ConvSpec


@dataclass(frozen=True)
class DecoderCfg:
    rfb_out_ch: int = 32
    dilations: tuple[int, int, int] = (3, 5, 7)
    activation: str = "relu"
    norm: str = "bn"

    def __post_init__(self):
        if self.rfb_out_ch < 1:
            raise ShapeError(f"rfb_out_ch must be >= 1, got {self.rfb_out_ch}")
        if len(self.dilations) != 3 or any(d < 1 for d in self.dilations):
            raise ShapeError(f"need three positive dilations, got {self.dilations}")


def build_rfb(b: _Builder, src: str, in_ch: int, cfg: DecoderCfg, prefix: str) -> str:
    """Four parallel branches -> concat -> 1x1 merge, residual 1x1, one
    activation after the add.  Inner convs carry norm but no activation."""
    oc = cfg.rfb_out_ch
    branches = [b.conv_block(f"{prefix}.b0", src, ConvSpec(in_ch, oc), act=None)]
    for bi, d in enumerate(cfg.dilations, start=1):
        k = 2 * bi + 1
        cur = b.conv_block(f"{prefix}.b{bi}.0", src, ConvSpec(in_ch, oc), act=None)
        cur = b.conv_block(f"{prefix}.b{bi}.1", cur,
                           ConvSpec(oc, oc, kernel=(1, k), padding=(0, k // 2)), act=None)
        cur = b.conv_block(f"{prefix}.b{bi}.2", cur,
                           ConvSpec(oc, oc, kernel=(k, 1), padding=(k // 2, 0)), act=None)
        cur = b.conv_block(f"{prefix}.b{bi}.3", cur,
                           ConvSpec(oc, oc, kernel=(3, 3), padding=(d, d), dilation=(d, d)), act=None)
        branches.append(cur)
    cat = b.add(GraphNode(f"{prefix}.cat", "concat", branches))
    merged = b.conv_block(f"{prefix}.merge", cat, ConvSpec(4 * oc, oc), act=None)
    res = b.conv_block(f"{prefix}.res", src, ConvSpec(in_ch, oc), act=None)
    added = b.add(GraphNode(f"{prefix}.add", "ewise", [merged, res], kind="add"))
    return b.add(GraphNode(f"{prefix}.act", "act", [added], kind=cfg.activation))


def build_aggregation(b: _Builder, g8: str, g16: str, g32: str, cfg: DecoderCfg) -> str:
    """Cascaded fusion of the three skip outputs; returns stride-8 logits node."""
    ch = cfg.rfb_out_ch

    def up(name, src, like):
        return b.add(GraphNode(name, "upsample_like", [src, like]))

    def conv3(name, src, cin, cout):
        return b.conv_block(name, src, ConvSpec(cin, cout, kernel=(3, 3), padding=(1, 1)), act=None)

    u1 = conv3("agg.u1", up("agg.u1.up", g32, g16), ch, ch)
    x2 = b.add(GraphNode("agg.x2", "ewise", [u1, g16], kind="mul"))
    u2 = conv3("agg.u2", up("agg.u2.upb", up("agg.u2.upa", g32, g16), g8), ch, ch)
    u3 = conv3("agg.u3", up("agg.u3.up", g16, g8), ch, ch)
    m1 = b.add(GraphNode("agg.x3.m1", "ewise", [u2, u3], kind="mul"))
    x3 = b.add(GraphNode("agg.x3", "ewise", [m1, g8], kind="mul"))
    u4 = conv3("agg.u4", up("agg.u4.up", g32, x2), ch, ch)
    c2 = conv3("agg.c2", b.add(GraphNode("agg.c2.cat", "concat", [x2, u4])), 2 * ch, 2 * ch)
    u5 = conv3("agg.u5", up("agg.u5.up", c2, x3), 2 * ch, 2 * ch)
    c3 = conv3("agg.c3", b.add(GraphNode("agg.c3.cat", "concat", [x3, u5])), 3 * ch, 3 * ch)
    c4 = conv3("agg.c4", c3, 3 * ch, 3 * ch)
    return b.add(GraphNode("head.logits", "conv", [c4], spec=ConvSpec(3 * ch, 1)))


def build_mseg(bcfg: BackboneCfg, dcfg: DecoderCfg) -> Graph:
    """Whole segmentation network as one executable graph.

    Taps: f8/f16/f32 (backbone), g8/g16/g32 (skip modules), logits_s8,
    logits (input resolution), prob (sigmoid of logits).
    """
    b = _Builder(bcfg.activation, bcfg.norm)
    build_backbone(bcfg, builder=b)
    taps = dict(b.tap_nodes)
    chans = b.tap_channels
    b.norm = dcfg.norm
    for s in (8, 16, 32):
        taps[f"g{s}"] = build_rfb(b, taps[f"f{s}"], chans[f"f{s}"], dcfg, f"rfb{s}")
    logits_s8 = build_aggregation(b, taps["g8"], taps["g16"], taps["g32"], dcfg)
    taps["logits_s8"] = logits_s8
    taps["logits"] = b.add(GraphNode("out.up", "upsample_like", [logits_s8, "input"]))
    taps["prob"] = b.add(GraphNode("out.prob", "act", [taps["logits"]], kind="sigmoid"))
    return Graph(b.nodes, taps=taps, meta={"preset": bcfg.name, "rfb_out_ch": dcfg.rfb_out_ch})


MODEL_PRESETS = {
    "hardnet68-mseg": lambda: (backbone_preset("hardnet68-mseg"), DecoderCfg()),
    "tiny": lambda: (backbone_preset("tiny"), DecoderCfg(rfb_out_ch=16, norm="none")),
    "small": lambda: (backbone_preset("small"), DecoderCfg(rfb_out_ch=24, norm="none")),
}


def model_preset(name: str) -> tuple[BackboneCfg, DecoderCfg]:
    try:
        return MODEL_PRESETS[name]()
    except KeyError:
        raise ShapeError(f"unknown model preset {name!r}; known: {sorted(MODEL_PRESETS)}") from None


def build_preset_model(name: str) -> Graph:
    bcfg, dcfg = model_preset(name)
    return build_mseg(bcfg, dcfg)


def forward_mseg(graph: Graph, weights, x: np.ndarray, outputs=("prob",)) -> dict[str, np.ndarray]:
    """Run the network; input is NCHW float, 3 channels, H and W >= 32."""
    check_weights(graph, weights)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ShapeError(f"expected (n,3,h,w) input, got {x.shape}")
    if x.shape[2] < 32 or x.shape[3] < 32:
        raise ShapeError(f"input spatial size must be >= 32, got {x.shape[2]}x{x.shape[3]}")
    return run_graph(graph, weights, x, outputs=list(outputs))
