"""Cost model closed forms, wiring comparisons, and bench mechanics."""

import numpy as np
import pytest

from mseg import graph as G
from mseg.analyzer import bench, concat_input_bytes, summarize
from mseg.decoder import build_preset_model
from mseg.errors import ShapeError
from mseg.graph import Graph, GraphNode
from mseg.hardnet import HarDBlockCfg, _Builder, build_hardblock
from mseg.ops import ConvSpec


def conv1x1_graph():
    nodes = [GraphNode("input", "input"),
             GraphNode("c", "conv", ["input"], spec=ConvSpec(3, 4))]
    return Graph(nodes, taps={"out": "c"})


class TestSummarize:
    def test_conv1x1_closed_form(self):
        s = summarize(conv1x1_graph(), (1, 3, 8, 8))
        stat = s.layers[0]
        assert stat.params == 3 * 4 + 4                    # weights + bias
        assert stat.macs == (4 * 8 * 8) * 3                # out elems x in_ch x 1x1
        assert stat.traffic_bytes == 4 * (3 * 64 + 4 * 64 + 16)
        assert s.total_params == 16 and s.total_macs == 768

    def test_conv3x3_grouped_macs(self):
        nodes = [GraphNode("input", "input"),
                 GraphNode("c", "conv", ["input"],
                           spec=ConvSpec(8, 8, kernel=(3, 3), padding=(1, 1), groups=4))]
        s = summarize(Graph(nodes, taps={"out": "c"}), (1, 8, 10, 10))
        assert s.layers[0].macs == (8 * 10 * 10) * (8 // 4) * 9

    def test_totals_are_column_sums(self):
        s = summarize(build_preset_model("tiny"), (1, 3, 64, 64))
        assert s.total_params == sum(l.params for l in s.layers)
        assert s.total_macs == sum(l.macs for l in s.layers)
        assert s.total_traffic_bytes == sum(l.traffic_bytes for l in s.layers)

    @pytest.mark.parametrize("name", ["tiny", "small", "hardnet68-mseg"])
    def test_params_match_initialized_store_count(self, name):
        g = build_preset_model(name)
        s = summarize(g, (1, 3, 64, 64))
        w = G.init_weights(g, seed=0)
        assert s.total_params == sum(a.size for a in w.values())
        assert s.total_params == g.param_count()

    def test_bn_counts_four_per_channel(self):
        g = build_preset_model("hardnet68-mseg")
        s = summarize(g, (1, 3, 64, 64))
        by_name = {l.node: l for l in s.layers}
        assert by_name["stem0.norm"].params == 4 * 32

    def test_upsample_reads_data_input_only(self):
        nodes = [GraphNode("input", "input"),
                 GraphNode("small", "maxpool", ["input"], kernel=(2, 2), stride=(2, 2)),
                 GraphNode("up", "upsample_like", ["small", "input"])]
        s = summarize(Graph(nodes, taps={"out": "up"}), (1, 2, 8, 8))
        up = [l for l in s.layers if l.node == "up"][0]
        assert up.traffic_bytes == 4 * (2 * 16 + 2 * 64)   # 4x4 read, 8x8 written


def block_concat_bytes(n, connectivity):
    b = _Builder("relu", "none")
    out, _ = build_hardblock(HarDBlockCfg(n, 8, 1.7, 16), b, "input", "blk",
                             connectivity=connectivity)
    g = Graph(b.nodes, taps={"out": out})
    return concat_input_bytes(summarize(g, (1, 16, 32, 32)), prefix="blk")


class TestWiringComparison:
    @pytest.mark.parametrize("n", [8, 16])
    def test_sparse_concats_move_fewer_bytes(self, n):
        assert block_concat_bytes(n, "sparse") < block_concat_bytes(n, "dense")

    def test_prefix_filter(self):
        s = summarize(build_preset_model("tiny"), (1, 3, 64, 64))
        assert concat_input_bytes(s, prefix="s1") < concat_input_bytes(s)


class TestBench:
    def test_report_fields_consistent(self):
        g = build_preset_model("tiny")
        w = G.init_weights(g, seed=0)
        rep = bench(g, w, (1, 3, 64, 64), warmup_iters=1, measure_iters=10, seed=0)
        assert rep.measure_iters == 10 and len(rep.latencies_s) == 10
        assert all(t > 0 for t in rep.latencies_s)
        assert min(rep.latencies_s) <= rep.median_s <= rep.p95_s <= max(rep.latencies_s)
        assert rep.fps == pytest.approx(1.0 / rep.mean_s)
        assert "numpy" in rep.platform
        assert "forward pass only" in rep.note
        d = rep.to_dict()
        assert d["input_shape"] == [1, 3, 64, 64]

    def test_iteration_floors(self):
        g = build_preset_model("tiny")
        w = G.init_weights(g, seed=0)
        with pytest.raises(ShapeError):
            bench(g, w, (1, 3, 64, 64), warmup_iters=0, measure_iters=10)
        with pytest.raises(ShapeError):
            bench(g, w, (1, 3, 64, 64), warmup_iters=1, measure_iters=9)
