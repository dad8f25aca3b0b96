"""ShuffleNet V2 segmentation network assembly.

Builds the feature extractor (entry conv + maxpool + three stages of shuffle
units), rewrites strides to atrous rates for the requested output stride,
attaches the basic or DPC encoder head, and finishes with the exit flow
(1x1 reductions, dropout, bilinear upsampling, argmax).

Default head widths were chosen so the analyzer reproduces the published
GFLOPs totals; the DPC branch rates come from the dense-prediction-cell
reference design and can be overridden per branch via `dpc_branches`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from .graph import Graph, GraphBuilder, GraphError, infer_shapes

__all__ = [
    "DpcBranchSpec",
    "NetworkSpec",
    "DEFAULT_DPC_BRANCHES",
    "STAGE_WIDTHS",
    "STAGE_REPEATS",
    "NOMINAL_STRIDE",
    "scaled_stage_widths",
    "build_basic_unit",
    "build_downsample_unit",
    "build_backbone",
    "build_head",
    "build_exit_flow",
    "build_network",
    "shape_summary",
]

# Stage output widths at depth multiplier 1.0 (entry, stage2, stage3, stage4).
STAGE_WIDTHS = (24, 116, 232, 464)
# Basic units following each stage's downsampling unit.
STAGE_REPEATS = (3, 7, 3)
# Downsampling factor of the unmodified classification backbone.
NOMINAL_STRIDE = 32

HEAD_CHANNELS = 512
EXIT_CHANNELS = 256


@dataclass(frozen=True)
class DpcBranchSpec:
    """One DPC branch: parent (-1 = head input), atrous rate, output width."""

    input_ref: int = -1
    rate: Tuple[int, int] = (1, 1)
    width: int = 256


# Five depthwise-separable branches; the (6, 3) branch chains off the (1, 6)
# branch. Width 128 keeps the projected 512-channel head inside the published
# cost envelope.
DEFAULT_DPC_BRANCHES = (
    DpcBranchSpec(-1, (1, 6), 128),
    DpcBranchSpec(-1, (18, 15), 128),
    DpcBranchSpec(-1, (6, 21), 128),
    DpcBranchSpec(-1, (1, 1), 128),
    DpcBranchSpec(0, (6, 3), 128),
)


@dataclass(frozen=True)
class NetworkSpec:
    """Configuration of the full segmentation network."""

    output_stride: int = 16
    depth_multiplier: float = 1.0
    head: str = "basic"
    num_classes: int = 19
    input_size: Tuple[int, int] = (769, 769)
    dropout_keep_prob: float = 0.9
    dpc_branches: Tuple[DpcBranchSpec, ...] = DEFAULT_DPC_BRANCHES

    def __post_init__(self):
        if self.output_stride not in (8, 16):
            raise GraphError(f"unsupported output_stride {self.output_stride}; use 8 or 16")
        if self.depth_multiplier <= 0:
            raise GraphError(f"depth_multiplier must be positive, got {self.depth_multiplier}")
        if self.head not in ("basic", "dpc"):
            raise GraphError(f"unknown head {self.head!r}; use 'basic' or 'dpc'")
        if self.num_classes < 2:
            raise GraphError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0 < self.dropout_keep_prob <= 1:
            raise GraphError(
                f"dropout_keep_prob must be in (0, 1], got {self.dropout_keep_prob}")
        branches = tuple(
            b if isinstance(b, DpcBranchSpec) else DpcBranchSpec(*b)
            for b in self.dpc_branches
        )
        for i, b in enumerate(branches):
            if not -1 <= b.input_ref < i:
                raise GraphError(
                    f"dpc branch {i}: input_ref {b.input_ref} must name an earlier "
                    f"branch or the head input (-1)")
        object.__setattr__(self, "dpc_branches", branches)
        object.__setattr__(self, "input_size", (int(self.input_size[0]),
                                                int(self.input_size[1])))

    def stage_widths(self) -> Tuple[int, ...]:
        """Stage output widths scaled by the depth multiplier, rounded to even."""
        return scaled_stage_widths(self.depth_multiplier)


def scaled_stage_widths(depth_multiplier: float) -> Tuple[int, ...]:
    """Scale the stage widths, rounding to the nearest even integer (units split)."""
    if depth_multiplier == 1.0:
        return STAGE_WIDTHS
    return tuple(max(int(round(wd * depth_multiplier / 2.0)) * 2, 2)
                 for wd in STAGE_WIDTHS)


def _conv_bn_relu(b: GraphBuilder, src: str, prefix: str, in_c: int, out_c: int,
                  kernel=(1, 1), stride=(1, 1), rate=(1, 1), with_relu=True) -> str:
    node = b.add(f"{prefix}/conv", "conv", [src], in_channels=in_c,
                 out_channels=out_c, kernel=list(kernel), stride=list(stride),
                 rate=list(rate), groups=1, bias=False)
    node = b.add(f"{prefix}/bn", "bn", [node], channels=out_c)
    if with_relu:
        node = b.add(f"{prefix}/relu", "relu", [node])
    return node


def _dwconv_bn(b: GraphBuilder, src: str, prefix: str, channels: int,
               stride=(1, 1), rate=(1, 1), with_relu=False) -> str:
    node = b.add(f"{prefix}/dwconv", "dwconv", [src], channels=channels,
                 kernel=[3, 3], stride=list(stride), rate=list(rate))
    node = b.add(f"{prefix}/dwbn", "bn", [node], channels=channels)
    if with_relu:
        node = b.add(f"{prefix}/dwrelu", "relu", [node])
    return node


def build_basic_unit(b: GraphBuilder, src: str, name: str, channels: int,
                     rate: int = 1) -> str:
    """Stride-1 shuffle unit: split, pass-through left, conv path right, concat, shuffle.

    Output channel count equals the input's; requires an even channel count.
    """
    if channels % 2 != 0:
        raise GraphError(f"{name}: basic unit needs even channels, got {channels}")
    half = channels // 2
    left = b.add(f"{name}/split0", "split", [src], part=0)
    right = b.add(f"{name}/split1", "split", [src], part=1)
    right = _conv_bn_relu(b, right, f"{name}/right/pw1", half, half)
    right = _dwconv_bn(b, right, f"{name}/right", half, rate=(rate, rate))
    right = _conv_bn_relu(b, right, f"{name}/right/pw2", half, half)
    cat = b.add(f"{name}/concat", "concat", [left, right])
    return b.add(f"{name}/shuffle", "shuffle", [cat], groups=2)


def build_downsample_unit(b: GraphBuilder, src: str, name: str, in_channels: int,
                          out_channels: int, stride: int = 2, rate: int = 1) -> str:
    """Two-branch unit consuming the full input; halves spatial dims iff stride=2.

    With stride=1 this is the modified stage-entry form used when a stage is
    rewritten to keep resolution.
    """
    if out_channels % 2 != 0:
        raise GraphError(f"{name}: output channels must be even, got {out_channels}")
    if stride not in (1, 2):
        raise GraphError(f"{name}: stride must be 1 or 2, got {stride}")
    half = out_channels // 2
    left = _dwconv_bn(b, src, f"{name}/left", in_channels,
                      stride=(stride, stride), rate=(rate, rate))
    left = _conv_bn_relu(b, left, f"{name}/left/pw", in_channels, half)
    right = _conv_bn_relu(b, src, f"{name}/right/pw1", in_channels, half)
    right = _dwconv_bn(b, right, f"{name}/right", half,
                       stride=(stride, stride), rate=(rate, rate))
    right = _conv_bn_relu(b, right, f"{name}/right/pw2", half, half)
    cat = b.add(f"{name}/concat", "concat", [left, right])
    return b.add(f"{name}/shuffle", "shuffle", [cat], groups=2)


def build_backbone(b: GraphBuilder, src: str, output_stride: int = 16,
                   depth_multiplier: float = 1.0,
                   dilate_entry_units: bool = False) -> str:
    """Entry conv + maxpool + stages 2-4 with stride-to-rate rewriting.

    output_stride 16 keeps stage 4 at stride 1 with rate 2 on its basic
    units; output_stride 8 starts the rewrite at stage 3 (rates 2 then 4).
    output_stride 32 is the unmodified classification-network schedule.
    `dilate_entry_units` additionally applies the stage rate to the stride-1
    stage-entry units (off by default).
    """
    if output_stride not in (8, 16, NOMINAL_STRIDE):
        raise GraphError(f"unsupported output_stride {output_stride}")
    widths = scaled_stage_widths(depth_multiplier)

    node = _conv_bn_relu(b, src, "entry", 3, widths[0], kernel=(3, 3), stride=(2, 2))
    node = b.add("entry/pool", "maxpool", [node], kernel=[3, 3], stride=[2, 2])

    nominal = 4  # downsampling factor of the unmodified net entering each stage
    in_c = widths[0]
    for stage_idx, (out_c, repeats) in enumerate(zip(widths[1:], STAGE_REPEATS)):
        stage = f"stage{stage_idx + 2}"
        nominal *= 2
        if nominal <= output_stride:
            stride, rate = 2, 1
        else:
            stride, rate = 1, nominal // output_stride
        entry_rate = rate if (dilate_entry_units and stride == 1) else 1
        node = build_downsample_unit(b, node, f"{stage}/unit0", in_c, out_c,
                                     stride=stride, rate=entry_rate)
        for i in range(repeats):
            node = build_basic_unit(b, node, f"{stage}/unit{i + 1}", out_c, rate=rate)
        in_c = out_c
    return node


def build_head(b: GraphBuilder, src: str, spec: NetworkSpec, in_channels: int) -> str:
    """Encoder head producing HEAD_CHANNELS at backbone resolution."""
    if spec.head == "basic":
        return _build_basic_head(b, src, in_channels)
    return _build_dpc_head(b, src, spec, in_channels)


def _build_basic_head(b: GraphBuilder, src: str, in_channels: int) -> str:
    # 1x1 conv branch plus image-level pooling branch; the concat itself
    # carries the 512-channel head output, no trailing projection.
    half = HEAD_CHANNELS // 2
    conv_branch = _conv_bn_relu(b, src, "head/branch0", in_channels, half)
    pool = b.add("head/image_pool/gap", "gap", [src])
    pool = _conv_bn_relu(b, pool, "head/image_pool", in_channels, half)
    pool = b.add("head/image_pool/resize", "resize", [pool], target="node",
                 ref=src, align_corners=True)
    return b.add("head/concat", "concat", [conv_branch, pool])


def _build_dpc_head(b: GraphBuilder, src: str, spec: NetworkSpec,
                    in_channels: int) -> str:
    # Five depthwise-separable branches at heterogeneous rates, concatenated
    # and projected to HEAD_CHANNELS.
    outputs: List[str] = []
    out_widths: List[int] = []
    for i, branch in enumerate(spec.dpc_branches):
        if branch.input_ref == -1:
            parent, parent_c = src, in_channels
        else:
            parent, parent_c = outputs[branch.input_ref], out_widths[branch.input_ref]
        prefix = f"head/branch{i}"
        node = _dwconv_bn(b, parent, prefix, parent_c, rate=branch.rate,
                          with_relu=True)
        node = _conv_bn_relu(b, node, f"{prefix}/pw", parent_c, branch.width)
        outputs.append(node)
        out_widths.append(branch.width)
    cat = b.add("head/concat", "concat", outputs)
    return _conv_bn_relu(b, cat, "head/project", sum(out_widths), HEAD_CHANNELS)


def build_exit_flow(b: GraphBuilder, src: str, spec: NetworkSpec,
                    in_channels: int) -> str:
    """Reduce to 256 then num_classes, dropout, upsample to input size, argmax."""
    node = _conv_bn_relu(b, src, "exit/reduce", in_channels, EXIT_CHANNELS)
    node = b.add("exit/logits", "conv", [node], in_channels=EXIT_CHANNELS,
                 out_channels=spec.num_classes, kernel=[1, 1], stride=[1, 1],
                 rate=[1, 1], groups=1, bias=True)
    node = b.add("exit/dropout", "dropout", [node],
                 keep_prob=spec.dropout_keep_prob)
    node = b.add("exit/resize", "resize", [node], target="input",
                 align_corners=True)
    return b.add("exit/argmax", "argmax", [node])


def build_network(spec: NetworkSpec) -> Graph:
    """Assemble the full graph: backbone, head, exit flow."""
    b = GraphBuilder()
    node = b.add("input", "input", channels=3)
    node = build_backbone(b, node, spec.output_stride, spec.depth_multiplier)
    backbone_c = spec.stage_widths()[-1]
    node = build_head(b, node, spec, backbone_c)
    build_exit_flow(b, node, spec, HEAD_CHANNELS)
    return b.build()


# Rows of the architecture summary: (label, node id).
SUMMARY_ROWS = (
    ("Conv2D", "entry/conv"),
    ("MaxPool", "entry/pool"),
    ("Stage 2", "stage2/unit3/shuffle"),
    ("Stage 3", "stage3/unit7/shuffle"),
    ("Stage 4", "stage4/unit3/shuffle"),
    ("Head", "head/concat"),
    ("Conv2D 1x1", "exit/reduce/conv"),
    ("Conv2D logits", "exit/logits"),
    ("Bilinear Up", "exit/resize"),
    ("ArgMax", "exit/argmax"),
)


def shape_summary(graph: Graph, input_shape) -> List[Tuple[str, str, Tuple[int, int, int]]]:
    """Architecture-table view: (label, node id, (h, w, c)) for the key nodes."""
    shapes = infer_shapes(graph, tuple(input_shape))
    rows = []
    for label, node_id in SUMMARY_ROWS:
        node_id = _summary_node(graph, node_id)
        if node_id is None:
            continue
        n_, c, h, w = shapes[node_id]
        rows.append((label, node_id, (h, w, c)))
    return rows


def _summary_node(graph: Graph, node_id: str) -> Optional[str]:
    # The DPC head's output is its projection; the basic head's is the concat.
    if node_id == "head/concat" and "head/project/relu" in graph.by_id:
        return "head/project/relu"
    if node_id in graph.by_id:
        return node_id
    return None
