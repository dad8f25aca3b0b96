"""Static cost analysis: MACs, FLOPs, parameters, memory-access estimates.

Counts are per batch element at a given input resolution. Convolutions are
counted as out_h * out_w * c_out * c_in_per_group * k_h * k_w multiply-
accumulates; elementwise, pooling, and resize work is one op per output
element (batch norm: two). The primary FLOPs figure counts multiplies and
adds separately (2 per MAC), which is the convention the published GFLOPs
totals follow; the 1-per-MAC figure is reported alongside.

The memory-access estimate is input elements + output elements + parameters,
which for a 1x1 convolution reduces to h*w*(c_in + c_out) + c_in*c_out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

from .graph import Graph, GraphError, infer_shapes

__all__ = [
    "CostRow",
    "CostReport",
    "count_costs",
    "Finding",
    "lint_guidelines",
    "format_report",
    "report_csv",
]


@dataclass(frozen=True)
class CostRow:
    name: str
    kind: str
    out_shape: Tuple[int, int, int]  # (h, w, c)
    macs: int
    elementwise: int
    params: int
    mem_access: int

    @property
    def flops(self) -> int:
        """Primary convention: multiply and add counted separately."""
        return 2 * self.macs + self.elementwise

    @property
    def flops_single(self) -> int:
        """Fused multiply-accumulate convention."""
        return self.macs + self.elementwise


@dataclass
class CostReport:
    rows: List[CostRow]
    input_size: Tuple[int, int]
    scope: str
    graph_form: str  # "unfolded" or "folded"

    def _total(self, field: str) -> int:
        return sum(getattr(r, field) for r in self.rows)

    @property
    def total_macs(self) -> int:
        return self._total("macs")

    @property
    def total_elementwise(self) -> int:
        return self._total("elementwise")

    @property
    def total_params(self) -> int:
        return self._total("params")

    @property
    def total_mem_access(self) -> int:
        return self._total("mem_access")

    @property
    def total_flops(self) -> int:
        return self._total("flops")

    @property
    def total_flops_single(self) -> int:
        return self._total("flops_single")


def _node_counts(node, out_shape) -> Tuple[int, int, int]:
    """(macs, elementwise, params) for one node; shapes are (n, c, h, w)."""
    _, c_out, h, w = out_shape
    out_elems = c_out * h * w
    p = node.params
    kind = node.kind
    if kind == "conv":
        kh, kw = p["kernel"]
        per_group = p["in_channels"] // p.get("groups", 1)
        macs = h * w * c_out * per_group * kh * kw
        params = c_out * per_group * kh * kw
        ew = 0
        if p.get("bias"):
            params += c_out
            ew = out_elems
        return macs, ew, params
    if kind == "dwconv":
        kh, kw = p["kernel"]
        macs = h * w * c_out * kh * kw
        params = c_out * kh * kw
        ew = 0
        if p.get("bias"):
            params += c_out
            ew = out_elems
        return macs, ew, params
    if kind == "bn":
        return 0, 2 * out_elems, 4 * c_out
    if kind in ("relu", "maxpool", "resize"):
        return 0, out_elems, 0
    if kind == "gap":
        return 0, c_out, 0
    if kind == "argmax":
        return 0, h * w, 0
    # split / shuffle / concat / dropout (identity): data movement only
    return 0, 0, 0


def count_costs(graph: Graph, input_size, scope: str = "full") -> CostReport:
    """Per-layer and total cost table for the graph at `input_size`.

    `input_size` is (h, w) or a full (n, c, h, w) shape; counts are per batch
    element. `scope="backbone"` excludes the upsampling decoder and argmax;
    `scope="full"` counts every node.
    """
    if scope not in ("full", "backbone"):
        raise GraphError(f"unknown scope {scope!r}; use 'full' or 'backbone'")
    if len(input_size) == 2:
        h, w = input_size
        in_c = graph.by_id[graph.input_id].params.get("channels", 3)
        shape = (1, in_c, int(h), int(w))
    else:
        n_, c_, h, w = input_size
        shape = (1, int(c_), int(h), int(w))
    shapes = infer_shapes(graph, shape)

    has_bn = any(n.kind == "bn" for n in graph.nodes)
    rows = []
    for node in graph.nodes:
        if node.kind == "input":
            continue
        if scope == "backbone" and _is_decoder_node(node):
            continue
        out = shapes[node.id]
        in_elems = sum(s[1] * s[2] * s[3] for s in (shapes[r] for r in node.inputs))
        macs, ew, params = _node_counts(node, out)
        rows.append(CostRow(
            name=node.id, kind=node.kind,
            out_shape=(out[2], out[3], out[1]),
            macs=macs, elementwise=ew, params=params,
            mem_access=in_elems + out[1] * out[2] * out[3] + params,
        ))
    return CostReport(rows=rows, input_size=(shape[2], shape[3]), scope=scope,
                      graph_form="unfolded" if has_bn else "folded")


def _is_decoder_node(node) -> bool:
    if node.kind == "argmax":
        return True
    return node.kind == "resize" and node.params.get("target") == "input"


@dataclass(frozen=True)
class Finding:
    guideline: str
    node: Optional[str]
    message: str

    def __str__(self) -> str:
        where = f" [{self.node}]" if self.node else ""
        return f"{self.guideline}{where}: {self.message}"


def lint_guidelines(graph: Graph) -> List[Finding]:
    """Efficiency-guideline lint over a graph with consistent shapes.

    G1 flags channel-width changes in convolutions, G2 flags group
    convolutions beyond two groups (depthwise excepted, by convention),
    G3 flags fragmentation (fan-out above two), and G4 reports the
    element-wise op count.
    """
    findings: List[Finding] = []
    elementwise = 0
    for node in graph.nodes:
        p = node.params
        if node.kind == "conv":
            if p["in_channels"] != p["out_channels"]:
                findings.append(Finding(
                    "G1", node.id,
                    f"unequal channel widths {p['in_channels']} -> "
                    f"{p['out_channels']} raise memory access cost"))
            groups = p.get("groups", 1)
            if 2 < groups < p["in_channels"]:
                findings.append(Finding(
                    "G2", node.id, f"group convolution with {groups} groups"))
        if node.kind in ("relu", "bn"):
            elementwise += 1
        if node.kind in ("conv", "dwconv") and p.get("bias"):
            elementwise += 1
        fan_out = len(graph.consumers(node.id))
        if fan_out > 2:
            findings.append(Finding(
                "G3", node.id, f"fan-out {fan_out} fragments the graph"))
    findings.append(Finding("G4", None, f"{elementwise} element-wise ops (relu/bn/bias)"))
    return findings


def format_report(report: CostReport, detail: bool = True) -> str:
    """Aligned text table plus totals."""
    lines = []
    header = (f"{'layer':<36} {'kind':<8} {'output':>14} {'MACs':>14} "
              f"{'FLOPs':>14} {'params':>12} {'mem':>12}")
    if detail:
        lines.append(header)
        lines.append("-" * len(header))
        for r in report.rows:
            h, w, c = r.out_shape
            lines.append(
                f"{r.name:<36} {r.kind:<8} {f'{h}x{w}x{c}':>14} {r.macs:>14,} "
                f"{r.flops:>14,} {r.params:>12,} {r.mem_access:>12,}")
        lines.append("-" * len(header))
    h, w = report.input_size
    lines.append(f"input {h}x{w}  scope {report.scope}  graph {report.graph_form}")
    lines.append(f"total params        {report.total_params:,}")
    lines.append(f"total MACs          {report.total_macs:,} "
                 f"({report.total_macs / 1e9:.3f} G)")
    lines.append(f"total FLOPs (2/MAC) {report.total_flops:,} "
                 f"({report.total_flops / 1e9:.3f} G)")
    lines.append(f"total FLOPs (1/MAC) {report.total_flops_single:,} "
                 f"({report.total_flops_single / 1e9:.3f} G)")
    lines.append(f"memory access est.  {report.total_mem_access:,} elements")
    return "\n".join(lines)


def report_csv(report: CostReport) -> str:
    """Per-layer rows as CSV with a trailing totals row."""
    lines = ["layer,kind,out_h,out_w,out_c,macs,flops_2mac,flops_1mac,params,mem_access"]
    for r in report.rows:
        h, w, c = r.out_shape
        lines.append(f"{r.name},{r.kind},{h},{w},{c},{r.macs},{r.flops},"
                     f"{r.flops_single},{r.params},{r.mem_access}")
    lines.append(f"total,,,,,{report.total_macs},{report.total_flops},"
                 f"{report.total_flops_single},{report.total_params},"
                 f"{report.total_mem_access}")
    return "\n".join(lines) + "\n"
