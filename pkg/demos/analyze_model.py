"""Tour of the static cost analyzer.

Builds the full-size network, prints the heaviest layers, and then shows
the number the sparse block wiring is designed to shrink: bytes moved
through concat nodes, compared against a hypothetical fully-dense block
of the same depth and widths.
"""

import numpy as np

from mseg import Graph, concat_input_bytes, init_weights, summarize
from mseg.analyzer import format_summary
from mseg.decoder import build_preset_model
from mseg.hardnet import HarDBlockCfg, _Builder, build_hardblock


def main():
    graph = build_preset_model("hardnet68-mseg")
    summary = summarize(graph, (1, 3, 352, 352))

    print("== ten most expensive layers at 352x352 ==")
    print(format_summary(summary, top=10))
    print()
    print(f"total params  {summary.total_params:,}")
    print(f"total MACs    {summary.total_macs:,}")
    print(f"total traffic {summary.total_traffic_bytes / 1e6:,.1f} MB (modeled, 4 B/elem)")
    print()

    # the wiring experiment: same widths, same depth, all shortcuts vs sparse
    print("== concat read traffic, sparse vs dense wiring (16-layer block) ==")
    for connectivity in ("sparse", "dense"):
        b = _Builder("relu", "none")
        out, _ = build_hardblock(HarDBlockCfg(16, 14, 1.7, 64), b, "input", "blk",
                                 connectivity=connectivity)
        s = summarize(Graph(b.nodes, taps={"out": out}), (1, 64, 44, 44))
        print(f"{connectivity:>6}: {concat_input_bytes(s, 'blk') / 1e6:7.2f} MB")

    # sanity: the accountant agrees with the actual weight store
    weights = init_weights(graph, seed=0)
    assert summary.total_params == sum(a.size for a in weights.values())
    print("\nparams match the initialized weight store, as they must.")


if __name__ == "__main__":
    main()
