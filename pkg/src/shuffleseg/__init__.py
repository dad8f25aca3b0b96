"""CPU inference engine, static cost analyzer, and benchmark harness for
shuffle-unit semantic segmentation networks with atrous depthwise convolutions.
"""

__version__ = "0.1.0"

from .analysis import CostReport, count_costs, lint_guidelines
from .benchmark import BenchConfig, BenchResult, bench
from .datapipe import (CLASS_NAMES, IGNORE_LABEL, NUM_CLASSES, PALETTE,
                       colorize, load_image, load_labels, preprocess,
                       save_image, save_labels)
from .estimator import Segmenter, check_image, check_image_batch
from .graph import Graph, GraphBuilder, GraphError, LayerNode, infer_shapes
from .kernels import (BatchNormParams, ConvParams, ShapeError, argmax_channels,
                      batch_norm, batch_norm_fold, bilinear_resize,
                      channel_shuffle, channel_split, concat_channels, conv2d,
                      global_avg_pool, maxpool, relu)
from .metrics import ConfusionMatrix, IouSummary
from .network import (DEFAULT_DPC_BRANCHES, DpcBranchSpec, NetworkSpec,
                      build_backbone, build_basic_unit, build_downsample_unit,
                      build_exit_flow, build_head, build_network, shape_summary)
from .runtime import WeightError, execute, forward
from .trainproto import (SCALE_CHOICES, ScheduleConfig, poly_lr, random_crop,
                         random_flip, random_scale)
from .weights import (ValidationReport, WeightManifest, expected_entries,
                      fold_all, init_random, validate)

__all__ = [
    "__version__",
    # estimator facade
    "Segmenter", "check_image", "check_image_batch",
    # kernels
    "ShapeError", "ConvParams", "BatchNormParams", "conv2d", "batch_norm",
    "batch_norm_fold", "relu", "maxpool", "global_avg_pool", "channel_split",
    "channel_shuffle", "concat_channels", "bilinear_resize", "argmax_channels",
    # graph and network
    "Graph", "GraphBuilder", "GraphError", "LayerNode", "infer_shapes",
    "NetworkSpec", "DpcBranchSpec", "DEFAULT_DPC_BRANCHES", "build_network",
    "build_backbone", "build_basic_unit", "build_downsample_unit", "build_head",
    "build_exit_flow", "shape_summary",
    # runtime and weights
    "forward", "execute", "WeightError", "WeightManifest", "init_random",
    "validate", "ValidationReport", "fold_all", "expected_entries",
    # analysis
    "CostReport", "count_costs", "lint_guidelines",
    # data, metrics, training protocol, benchmark
    "preprocess", "load_image", "save_image", "load_labels", "save_labels",
    "colorize", "PALETTE", "CLASS_NAMES", "NUM_CLASSES", "IGNORE_LABEL",
    "ConfusionMatrix", "IouSummary",
    "ScheduleConfig", "poly_lr", "SCALE_CHOICES", "random_scale", "random_crop",
    "random_flip",
    "BenchConfig", "BenchResult", "bench",
]
