"""Forward execution of a layer graph against a weight manifest.

Execution is a pure function of (graph, weights, image): nodes run in the
graph's topological order, dropout is an identity at inference, and every
kernel is deterministic, so repeated forwards are bit-identical.
"""

from __future__ import annotations

from typing import Dict, Optional, Tuple

import numpy as np

from . import kernels
from .graph import Graph, LayerNode

__all__ = ["WeightError", "forward", "execute"]


class WeightError(KeyError):
    """A required weight blob is missing from the manifest."""

    def __str__(self) -> str:  # KeyError would repr() the message
        return self.args[0] if self.args else ""


def _entry(manifest, name: str, layer: str) -> np.ndarray:
    try:
        return manifest.array(name)
    except KeyError:
        raise WeightError(f"missing weight blob {name!r} for layer {layer!r}") from None


def _conv_params(node: LayerNode, manifest) -> kernels.ConvParams:
    p = node.params
    kernel = _entry(manifest, f"{node.id}/kernel", node.id)
    bias = None
    if p.get("bias"):
        bias = _entry(manifest, f"{node.id}/bias", node.id)
    groups = kernel.shape[0] if node.kind == "dwconv" else int(p.get("groups", 1))
    return kernels.ConvParams(kernel=kernel, bias=bias, stride=tuple(p["stride"]),
                              rate=tuple(p["rate"]), groups=groups)


def _bn_params(node: LayerNode, manifest) -> kernels.BatchNormParams:
    return kernels.BatchNormParams(
        gamma=_entry(manifest, f"{node.id}/gamma", node.id),
        beta=_entry(manifest, f"{node.id}/beta", node.id),
        mean=_entry(manifest, f"{node.id}/mean", node.id),
        variance=_entry(manifest, f"{node.id}/variance", node.id),
        epsilon=manifest.bn_epsilon,
    )


def execute(graph: Graph, manifest, image: np.ndarray,
            upto: Optional[str] = None) -> Dict[str, np.ndarray]:
    """Run the graph on a preprocessed image; returns the node-value map.

    `upto` stops execution once that node has been computed (its value and
    every earlier node's are present in the result).
    """
    x = kernels.check_tensor(image, "image")
    values: Dict[str, np.ndarray] = {}
    for node in graph.nodes:
        if node.kind == "input":
            values[node.id] = x
        else:
            ins = [values[ref] for ref in node.inputs]
            values[node.id] = _run_node(node, ins, manifest, values, graph.input_id)
        if node.id == upto:
            break
    if upto is not None and upto not in values:
        raise KeyError(f"node {upto!r} not found in graph")
    return values


def _run_node(node: LayerNode, ins, manifest, values, input_id: str) -> np.ndarray:
    kind = node.kind
    x = ins[0]
    if kind in ("conv", "dwconv"):
        return kernels.conv2d(x, _conv_params(node, manifest))
    if kind == "bn":
        return kernels.batch_norm(x, _bn_params(node, manifest))
    if kind == "relu":
        return kernels.relu(x)
    if kind == "maxpool":
        return kernels.maxpool(x, kernel=tuple(node.params["kernel"]),
                               stride=tuple(node.params["stride"]))
    if kind == "gap":
        return kernels.global_avg_pool(x)
    if kind == "split":
        return kernels.channel_split(x)[node.params["part"]]
    if kind == "shuffle":
        return kernels.channel_shuffle(x, node.params["groups"])
    if kind == "concat":
        return kernels.concat_channels(ins)
    if kind == "resize":
        target = node.params.get("target", "size")
        if target == "input":
            th, tw = values[input_id].shape[2:]
        elif target == "node":
            th, tw = values[node.params["ref"]].shape[2:]
        else:
            th, tw = (int(v) for v in node.params["size"])
        return kernels.bilinear_resize(x, th, tw,
                                       align_corners=node.params.get("align_corners", True))
    if kind == "dropout":
        return x  # identity at inference
    if kind == "argmax":
        labels = kernels.argmax_channels(x)
        return labels[:, None].astype(np.float32)  # keep NCHW convention downstream
    raise ValueError(f"node {node.id!r}: unhandled kind {kind!r}")


def forward(graph: Graph, manifest, image: np.ndarray
            ) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Full inference: returns (logits, labels).

    `logits` is the value feeding the argmax node (the upsampled per-class
    scores); `labels` is the integer label map (n, h, w). Graphs without an
    argmax node return (final output, None).
    """
    values = execute(graph, manifest, image)
    out_node = graph.by_id[graph.output_id]
    if out_node.kind == "argmax":
        logits = values[out_node.inputs[0]]
        labels = values[out_node.id][:, 0].astype(np.int64)
        return logits, labels
    return values[graph.output_id], None
