"""Skip modules, aggregation wiring, and whole-network forward contracts."""

import numpy as np
import pytest

from mseg import graph as G
from mseg.decoder import (DecoderCfg, build_mseg, build_preset_model, build_rfb, forward_mseg,
                          model_preset)
from mseg.errors import ShapeError
from mseg.hardnet import _Builder
from mseg.ops import _sigmoid


def rfb_graph(in_ch=12, norm="none", **cfg_kw):
    b = _Builder("relu", norm)
    out = build_rfb(b, "input", in_ch, DecoderCfg(norm=norm, **cfg_kw), "rfb")
    return G.Graph(b.nodes, taps={"out": out})


class TestRFB:
    def test_output_shape(self):
        g = rfb_graph(in_ch=12, rfb_out_ch=16)
        w = G.init_weights(g, seed=0)
        x = np.random.default_rng(1).standard_normal((2, 12, 9, 7)).astype(np.float32)
        y = G.run_graph(g, w, x, outputs=["out"])["out"]
        assert y.shape == (2, 16, 9, 7)

    def test_structure(self):
        g = rfb_graph()
        ops = {}
        for n in g.nodes:
            ops.setdefault(n.op, []).append(n.name)
        assert len(ops["conv"]) == 15            # 1 + 3*4 branch convs + merge + res
        assert ops["concat"] == ["rfb.cat"]
        assert ops["ewise"] == ["rfb.add"]
        assert ops["act"] == ["rfb.act"]         # single activation, after the residual add

    def test_branch_kernels_and_dilations(self):
        g = rfb_graph(dilations=(3, 5, 7))
        spec = {n.name: n.spec for n in g.nodes if n.op == "conv"}
        for bi, d in enumerate((3, 5, 7), start=1):
            k = 2 * bi + 1
            assert spec[f"rfb.b{bi}.1"].kernel == (1, k)
            assert spec[f"rfb.b{bi}.2"].kernel == (k, 1)
            assert spec[f"rfb.b{bi}.3"].kernel == (3, 3)
            assert spec[f"rfb.b{bi}.3"].dilation == (d, d)
            # spatial size must be preserved by every branch conv
        shapes = G.infer_shapes(g, (1, 12, 13, 13))
        assert all(s[2:] == (13, 13) for s in shapes.values())

    def test_norm_variant_adds_bn_nodes(self):
        g = rfb_graph(norm="bn")
        bn = [n.name for n in g.nodes if n.op == "bn"]
        assert len(bn) == 15 and all(n.endswith(".norm") for n in bn)


class TestForwardContract:
    @pytest.mark.parametrize("size", [64, 96])
    def test_tap_shapes(self, size):
        g = build_preset_model("tiny")
        w = G.init_weights(g, seed=0)
        x = np.random.default_rng(0).standard_normal((2, 3, size, size)).astype(np.float32)
        out = forward_mseg(g, w, x, outputs=["g8", "g16", "g32", "logits_s8", "logits", "prob"])
        ch = g.meta["rfb_out_ch"]
        assert out["g8"].shape == (2, ch, size // 8, size // 8)
        assert out["g16"].shape == (2, ch, size // 16, size // 16)
        assert out["g32"].shape == (2, ch, size // 32, size // 32)
        assert out["logits_s8"].shape == (2, 1, size // 8, size // 8)
        assert out["logits"].shape == (2, 1, size, size)
        assert out["prob"].shape == (2, 1, size, size)
        assert np.all(out["prob"] >= 0) and np.all(out["prob"] <= 1)
        np.testing.assert_allclose(out["prob"], _sigmoid(out["logits"]), rtol=1e-6, atol=1e-7)

    def test_aggregation_channel_plan(self):
        g = build_preset_model("small")
        ch = g.meta["rfb_out_ch"]
        spec = {n.name: n.spec for n in g.nodes if n.op == "conv" and n.name.startswith(("agg", "head"))}
        assert all(spec[f"agg.u{i}"].out_ch == ch for i in (1, 2, 3, 4))
        assert spec["agg.c2"].in_ch == 2 * ch and spec["agg.c2"].out_ch == 2 * ch
        assert spec["agg.u5"].in_ch == 2 * ch
        assert spec["agg.c3"].in_ch == 3 * ch and spec["agg.c4"].out_ch == 3 * ch
        assert spec["head.logits"].kernel == (1, 1) and spec["head.logits"].out_ch == 1
        assert spec["head.logits"].has_bias

    def test_input_validation(self):
        g = build_preset_model("tiny")
        w = G.init_weights(g, seed=0)
        with pytest.raises(ShapeError):
            forward_mseg(g, w, np.zeros((3, 64, 64), dtype=np.float32))
        with pytest.raises(ShapeError):
            forward_mseg(g, w, np.zeros((1, 1, 64, 64), dtype=np.float32))
        with pytest.raises(ShapeError):
            forward_mseg(g, w, np.zeros((1, 3, 16, 64), dtype=np.float32))

    def test_batch_consistency(self):
        """Stacking two inputs must give the two single-image results."""
        g = build_preset_model("tiny")
        w = G.init_weights(g, seed=2)
        rng = np.random.default_rng(3)
        a, b = (rng.standard_normal((1, 3, 64, 64)).astype(np.float32) for _ in range(2))
        one = forward_mseg(g, w, np.concatenate([a, b]))["prob"]
        np.testing.assert_allclose(one[0], forward_mseg(g, w, a)["prob"][0], rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(one[1], forward_mseg(g, w, b)["prob"][0], rtol=1e-5, atol=1e-6)


def flip_weights(graph, weights, axis):
    """Mirror every conv kernel along the given spatial axis (2=H, 3=W)."""
    out = dict(weights)
    for n in graph.nodes:
        if n.op == "conv":
            w = out[f"{n.name}.w"]
            out[f"{n.name}.w"] = np.ascontiguousarray(np.flip(w, axis=axis))
    return out


class TestFlipEquivariance:
    """Mirroring input and kernels must mirror the output, even at odd sizes.

    Holds because every conv pads symmetrically and every stride-2 window
    grid lands mirror-symmetrically at size 61; catches off-by-one padding
    or resize alignment bugs that shape checks cannot see.
    """

    @pytest.mark.parametrize("axis", [2, 3])
    def test_tiny_at_61(self, axis):
        g = build_preset_model("tiny")
        w = G.init_weights(g, seed=4)
        x = np.random.default_rng(5).standard_normal((1, 3, 61, 61)).astype(np.float32)
        base = forward_mseg(g, w, x)["prob"]
        flipped = forward_mseg(g, flip_weights(g, w, axis), np.ascontiguousarray(np.flip(x, axis)))["prob"]
        np.testing.assert_allclose(flipped, np.flip(base, axis), rtol=1e-4, atol=1e-5)
