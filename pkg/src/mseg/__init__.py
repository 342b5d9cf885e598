"""Self-contained HarDNet-MSEG segmentation engine on plain numpy.

Build a model from a preset, run it, score it, benchmark it, or train a
scaled-down version on synthetic data:

    >>> import mseg
    >>> graph = mseg.build_preset_model("tiny")
    >>> weights = mseg.init_weights(graph, seed=0)
    >>> out = mseg.forward_mseg(graph, weights, x)   # x: (n,3,h,w) float32
    >>> out["prob"].shape
    (1, 1, 64, 64)

Submodules group the rest: ``ops`` (numpy kernels), ``autodiff`` (reverse-mode
tape), ``graph`` (model description and execution), ``hardnet`` / ``decoder``
(architecture builders), ``weights`` (MSEG-W1 container), ``imageio`` (PPM/PGM),
``metrics``, ``analyzer`` (params/MACs/traffic and wall-clock bench),
``synthblobs`` + ``train`` (toy training), ``gradcheck``, and ``cli``.
"""

from .analyzer import BenchReport, CostSummary, bench, concat_input_bytes, summarize
from .decoder import (DecoderCfg, MODEL_PRESETS, build_mseg, build_preset_model, forward_mseg,
                      model_preset)
from .errors import (ConfigError, GraphBuildError, ImageFormatError, NumericError, ShapeError,
                     WeightFormatError)
from .graph import Graph, GraphNode, fold_batchnorms, infer_shapes, init_weights, run_graph
from .hardnet import BACKBONE_PRESETS, BackboneCfg, backbone_preset, build_backbone, hard_links
from .imageio import mask_from_u8, mask_to_u8, preprocess, read_pgm, read_ppm, write_pgm, write_ppm
from .metrics import MetricReport, evaluate_dataset, image_metrics
from .presets import load_preset, parse_preset, save_preset
from .synthblobs import BlobDataset, gen_blobs
from .train import TrainResult, train_toy
from .weights import WeightStore, load_weights, read_weights_bytes, save_weights, \
    write_weights_bytes

__version__ = "0.1.0"

__all__ = [
    "BACKBONE_PRESETS", "BackboneCfg", "BenchReport", "BlobDataset", "ConfigError",
    "CostSummary", "DecoderCfg", "Graph", "GraphBuildError", "GraphNode", "ImageFormatError",
    "MODEL_PRESETS", "MetricReport", "NumericError", "ShapeError", "TrainResult",
    "WeightFormatError", "WeightStore", "backbone_preset", "bench", "build_backbone",
    "build_mseg", "build_preset_model", "concat_input_bytes", "evaluate_dataset",
    "fold_batchnorms", "forward_mseg", "gen_blobs", "hard_links", "image_metrics",
    "infer_shapes", "init_weights", "load_preset", "load_weights", "mask_from_u8",
    "mask_to_u8", "model_preset", "parse_preset", "preprocess", "read_pgm", "read_ppm",
    "read_weights_bytes", "run_graph", "save_preset", "save_weights", "summarize",
    "train_toy", "write_pgm", "write_ppm", "write_weights_bytes",
]
