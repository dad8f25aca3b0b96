"""Declarative layer graph: typed nodes, shape inference, text serialization.

A graph is an immutable DAG of LayerNodes with one `input` node and one
terminal node. Node ids double as weight-manifest key prefixes, following the
`stageN/unitM/branch/op` naming convention.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

__all__ = ["GraphError", "LayerNode", "Graph", "GraphBuilder", "infer_shapes"]

NODE_KINDS = frozenset({
    "input", "conv", "dwconv", "bn", "relu", "maxpool", "gap",
    "split", "shuffle", "concat", "resize", "dropout", "argmax",
})

Shape = Tuple[int, int, int, int]


class GraphError(ValueError):
    """Graph structure or shape inconsistency."""


@dataclass(frozen=True)
class LayerNode:
    """One typed layer: id, kind, input node ids, and kind-specific params."""

    id: str
    kind: str
    inputs: Tuple[str, ...] = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise GraphError(f"node {self.id!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))


class Graph:
    """Immutable DAG of layer nodes in topological order."""

    def __init__(self, nodes: Sequence[LayerNode]):
        self.nodes: Tuple[LayerNode, ...] = tuple(nodes)
        self.by_id: Dict[str, LayerNode] = {}
        seen = set()
        for node in self.nodes:
            if node.id in self.by_id:
                raise GraphError(f"duplicate node id {node.id!r}")
            for ref in node.inputs:
                if ref not in seen:
                    raise GraphError(
                        f"node {node.id!r} references {ref!r} before its definition")
            self.by_id[node.id] = node
            seen.add(node.id)

        inputs = [n for n in self.nodes if n.kind == "input"]
        if len(inputs) != 1:
            raise GraphError(f"graph must have exactly one input node, found {len(inputs)}")
        self.input_id = inputs[0].id

        consumed = {ref for n in self.nodes for ref in n.inputs}
        terminals = [n.id for n in self.nodes if n.id not in consumed]
        if len(terminals) != 1:
            raise GraphError(f"graph must have exactly one output node, found {terminals}")
        self.output_id = terminals[0]

        self._consumers: Dict[str, List[str]] = {n.id: [] for n in self.nodes}
        for node in self.nodes:
            for ref in node.inputs:
                self._consumers[ref].append(node.id)

    def consumers(self, node_id: str) -> List[str]:
        return list(self._consumers[node_id])

    def to_json(self) -> str:
        doc = {
            "format": "shuffleseg-graph/1",
            "nodes": [
                {"id": n.id, "kind": n.kind, "inputs": list(n.inputs),
                 "params": n.params}
                for n in self.nodes
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        doc = json.loads(text)
        if doc.get("format") != "shuffleseg-graph/1":
            raise GraphError(f"unsupported graph format {doc.get('format')!r}")
        nodes = [
            LayerNode(id=n["id"], kind=n["kind"], inputs=tuple(n["inputs"]),
                      params=n.get("params", {}))
            for n in doc["nodes"]
        ]
        return cls(nodes)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Graph":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.to_json() == other.to_json()

    def __len__(self) -> int:
        return len(self.nodes)


class GraphBuilder:
    """Append-only helper used by the network builders; emits topological order."""

    def __init__(self):
        self._nodes: List[LayerNode] = []
        self._ids = set()

    def add(self, node_id: str, kind: str, inputs: Sequence[str] = (), **params) -> str:
        if node_id in self._ids:
            raise GraphError(f"duplicate node id {node_id!r}")
        for ref in inputs:
            if ref not in self._ids:
                raise GraphError(f"node {node_id!r}: unknown input {ref!r}")
        self._nodes.append(LayerNode(node_id, kind, tuple(inputs), params))
        self._ids.add(node_id)
        return node_id

    def build(self) -> Graph:
        return Graph(self._nodes)


def _pair(v) -> Tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def infer_shapes(graph: Graph, input_shape: Shape) -> Dict[str, Shape]:
    """Annotate every node with its (n, c, h, w) output shape.

    Fails fast with the node id and the expected/actual dimensions on any
    inconsistency. The argmax node reports a single channel.
    """
    n, c, h, w = input_shape
    if min(n, c, h, w) < 1:
        raise GraphError(f"input shape must be positive, got {input_shape}")
    shapes: Dict[str, Shape] = {}

    def parent_shapes(node: LayerNode) -> List[Shape]:
        return [shapes[ref] for ref in node.inputs]

    for node in graph.nodes:
        kind = node.kind
        p = node.params
        if kind == "input":
            want = int(p.get("channels", c))
            if want != c:
                raise GraphError(
                    f"node {node.id!r}: expected {want} input channels, got {c}")
            shapes[node.id] = (n, c, h, w)
            continue

        ins = parent_shapes(node)
        bn_, cin, hin, win = ins[0]

        if kind in ("conv", "dwconv"):
            sh, sw = _pair(p.get("stride", 1))
            expect_in = int(p["in_channels"]) if kind == "conv" else int(p["channels"])
            if cin != expect_in:
                raise GraphError(
                    f"node {node.id!r}: expected {expect_in} input channels, got {cin}")
            cout = int(p["out_channels"]) if kind == "conv" else cin
            shapes[node.id] = (bn_, cout, _ceil_div(hin, sh), _ceil_div(win, sw))
        elif kind == "bn":
            if cin != int(p["channels"]):
                raise GraphError(
                    f"node {node.id!r}: expected {p['channels']} channels, got {cin}")
            shapes[node.id] = ins[0]
        elif kind in ("relu", "dropout"):
            shapes[node.id] = ins[0]
        elif kind == "maxpool":
            sh, sw = _pair(p.get("stride", 2))
            shapes[node.id] = (bn_, cin, _ceil_div(hin, sh), _ceil_div(win, sw))
        elif kind == "gap":
            shapes[node.id] = (bn_, cin, 1, 1)
        elif kind == "split":
            if cin % 2 != 0:
                raise GraphError(f"node {node.id!r}: split needs even channels, got {cin}")
            shapes[node.id] = (bn_, cin // 2, hin, win)
        elif kind == "shuffle":
            g = int(p.get("groups", 2))
            if cin % g != 0:
                raise GraphError(
                    f"node {node.id!r}: {cin} channels not divisible by groups {g}")
            shapes[node.id] = ins[0]
        elif kind == "concat":
            for i, s in enumerate(ins[1:], start=1):
                if (s[0], s[2], s[3]) != (bn_, hin, win):
                    raise GraphError(
                        f"node {node.id!r}: input {node.inputs[i]!r} shape {s} does not "
                        f"match {node.inputs[0]!r} spatial {(bn_, hin, win)}")
            shapes[node.id] = (bn_, sum(s[1] for s in ins), hin, win)
        elif kind == "resize":
            target = p.get("target", "size")
            if target == "input":
                th, tw = shapes[graph.input_id][2:]
            elif target == "node":
                ref = p.get("ref")
                if ref not in shapes:
                    raise GraphError(
                        f"node {node.id!r}: resize ref {ref!r} is not an earlier node")
                th, tw = shapes[ref][2:]
            else:
                th, tw = _pair(p["size"])
            shapes[node.id] = (bn_, cin, th, tw)
        elif kind == "argmax":
            shapes[node.id] = (bn_, 1, hin, win)
        else:  # pragma: no cover
            raise GraphError(f"node {node.id!r}: unhandled kind {kind!r}")
    return shapes
