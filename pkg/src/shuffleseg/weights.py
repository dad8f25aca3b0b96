"""Weight manifests: on-disk format, validation, random init, BN folding.

A manifest is a pair of files: `<name>.manifest`, a line-oriented text index
(entries with shape, byte offset, and CRC-32), and `<name>.bin`, the raw
little-endian float32 blob. Entry names follow the graph's node ids:
`stage2/unit0/right/pw1/conv/kernel`, `entry/bn/gamma`, and so on.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .graph import Graph, GraphBuilder, LayerNode

__all__ = [
    "ManifestError",
    "WeightEntry",
    "WeightManifest",
    "expected_entries",
    "validate",
    "ValidationReport",
    "init_random",
    "fold_all",
]

FORMAT_LINE = "format shuffleseg-weights/1"
DEFAULT_BN_EPSILON = 1e-3


class ManifestError(ValueError):
    """Malformed, corrupt, or inconsistent weight manifest."""


@dataclass(frozen=True)
class WeightEntry:
    name: str
    shape: Tuple[int, ...]
    dtype: str
    offset: int
    crc32: int

    @property
    def size(self) -> int:
        n = 1
        for d in self.shape:
            n *= d
        return n

    @property
    def nbytes(self) -> int:
        return self.size * 4


class WeightManifest:
    """Named float32 parameter blobs over a single contiguous byte buffer."""

    def __init__(self, entries: List[WeightEntry], blob: bytes,
                 metadata: Optional[Dict[str, str]] = None):
        self.entries: Dict[str, WeightEntry] = {}
        self.metadata: Dict[str, str] = dict(metadata or {})
        self.blob = bytes(blob)
        spans = []
        for e in entries:
            if e.name in self.entries:
                raise ManifestError(f"duplicate entry {e.name!r}")
            if e.offset < 0 or e.offset + e.nbytes > len(self.blob):
                raise ManifestError(
                    f"entry {e.name!r} extent [{e.offset}, {e.offset + e.nbytes}) "
                    f"outside blob of {len(self.blob)} bytes")
            spans.append((e.offset, e.offset + e.nbytes, e.name))
            self.entries[e.name] = e
        spans.sort()
        for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
            if s1 < e0:
                raise ManifestError(f"entries {n0!r} and {n1!r} overlap")

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def array(self, name: str) -> np.ndarray:
        """Read-only float32 view of one entry."""
        e = self.entries[name]
        arr = np.frombuffer(self.blob, dtype="<f4", count=e.size,
                            offset=e.offset).reshape(e.shape)
        return arr

    @property
    def bn_epsilon(self) -> float:
        return float(self.metadata.get("bn_epsilon", DEFAULT_BN_EPSILON))

    @classmethod
    def from_arrays(cls, arrays: Dict[str, np.ndarray],
                    metadata: Optional[Dict[str, str]] = None) -> "WeightManifest":
        """Pack arrays (in iteration order) into a manifest."""
        entries = []
        chunks = []
        offset = 0
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            raw = data.tobytes()
            entries.append(WeightEntry(name=name, shape=tuple(data.shape),
                                       dtype="float32", offset=offset,
                                       crc32=zlib.crc32(raw)))
            chunks.append(raw)
            offset += len(raw)
        return cls(entries, b"".join(chunks), metadata)

    def manifest_text(self) -> str:
        lines = [FORMAT_LINE]
        for key, value in self.metadata.items():
            lines.append(f"meta {key} {value}")
        for e in self.entries.values():
            shape = ",".join(str(d) for d in e.shape)
            lines.append(f"entry {e.name} {shape} {e.dtype} {e.offset} {e.crc32:08x}")
        return "\n".join(lines) + "\n"

    def save(self, prefix) -> Tuple[str, str]:
        """Write `<prefix>.manifest` and `<prefix>.bin`; returns both paths."""
        prefix = str(prefix)
        if prefix.endswith(".manifest"):
            prefix = prefix[: -len(".manifest")]
        manifest_path = prefix + ".manifest"
        bin_path = prefix + ".bin"
        with open(manifest_path, "w", encoding="utf-8") as fh:
            fh.write(self.manifest_text())
        with open(bin_path, "wb") as fh:
            fh.write(self.blob)
        return manifest_path, bin_path

    @classmethod
    def load(cls, prefix) -> "WeightManifest":
        """Load and checksum-verify a manifest pair."""
        prefix = str(prefix)
        if prefix.endswith(".manifest"):
            prefix = prefix[: -len(".manifest")]
        with open(prefix + ".manifest", "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != FORMAT_LINE:
            raise ManifestError(f"{prefix}.manifest: unrecognized format line")
        with open(prefix + ".bin", "rb") as fh:
            blob = fh.read()

        metadata: Dict[str, str] = {}
        entries: List[WeightEntry] = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(" ")
            if parts[0] == "meta" and len(parts) >= 3:
                metadata[parts[1]] = " ".join(parts[2:])
            elif parts[0] == "entry" and len(parts) == 6:
                name, shape_s, dtype, offset_s, crc_s = parts[1:]
                if dtype != "float32":
                    raise ManifestError(f"line {lineno}: unsupported dtype {dtype!r}")
                entries.append(WeightEntry(
                    name=name,
                    shape=tuple(int(d) for d in shape_s.split(",")),
                    dtype=dtype, offset=int(offset_s), crc32=int(crc_s, 16)))
            else:
                raise ManifestError(f"line {lineno}: unparseable line {line!r}")
        manifest = cls(entries, blob, metadata)
        for e in manifest.entries.values():
            raw = blob[e.offset : e.offset + e.nbytes]
            if zlib.crc32(raw) != e.crc32:
                raise ManifestError(f"entry {e.name!r}: checksum mismatch")
        return manifest


def expected_entries(graph: Graph) -> Dict[str, Tuple[int, ...]]:
    """Entry name -> shape for every parameterized node of the graph."""
    out: Dict[str, Tuple[int, ...]] = {}
    for node in graph.nodes:
        p = node.params
        if node.kind == "conv":
            kh, kw = p["kernel"]
            per_group = p["in_channels"] // p.get("groups", 1)
            out[f"{node.id}/kernel"] = (p["out_channels"], per_group, kh, kw)
            if p.get("bias"):
                out[f"{node.id}/bias"] = (p["out_channels"],)
        elif node.kind == "dwconv":
            kh, kw = p["kernel"]
            out[f"{node.id}/kernel"] = (p["channels"], 1, kh, kw)
            if p.get("bias"):
                out[f"{node.id}/bias"] = (p["channels"],)
        elif node.kind == "bn":
            for field in ("gamma", "beta", "mean", "variance"):
                out[f"{node.id}/{field}"] = (p["channels"],)
    return out


@dataclass
class ValidationReport:
    missing: List[str]
    extra: List[str]
    mismatched: List[Tuple[str, Tuple[int, ...], Tuple[int, ...]]]

    @property
    def ok(self) -> bool:
        return not (self.missing or self.extra or self.mismatched)

    def lines(self) -> List[str]:
        out = []
        for name in self.missing:
            out.append(f"missing: {name}")
        for name in self.extra:
            out.append(f"extra: {name}")
        for name, want, got in self.mismatched:
            out.append(f"shape mismatch: {name} expected {want} actual {got}")
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines()) if self.lines() else "ok"


def validate(manifest: WeightManifest, graph: Graph) -> ValidationReport:
    """Check that the manifest covers the graph's parameters exactly."""
    wanted = expected_entries(graph)
    missing = [n for n in wanted if n not in manifest.entries]
    extra = [n for n in manifest.entries if n not in wanted]
    mismatched = [
        (n, wanted[n], manifest.entries[n].shape)
        for n in wanted
        if n in manifest.entries and manifest.entries[n].shape != wanted[n]
    ]
    return ValidationReport(missing=missing, extra=extra, mismatched=mismatched)


def _feeds_relu(graph: Graph, node_id: str) -> bool:
    # Follow the single-consumer chain through bn/dropout to see whether a
    # rectifier absorbs this convolution's output.
    current = node_id
    while True:
        consumers = graph.consumers(current)
        if len(consumers) != 1:
            return False
        child = graph.by_id[consumers[0]]
        if child.kind == "relu":
            return True
        if child.kind in ("bn", "dropout"):
            current = child.id
            continue
        return False


def init_random(graph: Graph, seed: int = 0) -> WeightManifest:
    """Deterministic random weights: fan-in-scaled kernels, identity BN stats.

    Kernel gain is 2/fan_in where a ReLU follows and 1/fan_in otherwise, which
    keeps activation magnitudes near unity through the whole network.
    """
    rng = np.random.default_rng(seed)
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in expected_entries(graph).items():
        node_id, leaf = name.rsplit("/", 1)
        if leaf == "kernel":
            fan_in = shape[1] * shape[2] * shape[3]
            gain = 2.0 if _feeds_relu(graph, node_id) else 1.0
            arrays[name] = rng.normal(
                0.0, (gain / fan_in) ** 0.5, size=shape).astype(np.float32)
        elif leaf in ("bias", "beta", "mean"):
            arrays[name] = np.zeros(shape, dtype=np.float32)
        else:  # gamma, variance
            arrays[name] = np.ones(shape, dtype=np.float32)
    metadata = {
        "bn_epsilon": repr(DEFAULT_BN_EPSILON),
        "fingerprint": graph.fingerprint(),
        "seed": str(seed),
    }
    return WeightManifest.from_arrays(arrays, metadata)


def fold_all(manifest: WeightManifest, graph: Graph
             ) -> Tuple[Graph, WeightManifest]:
    """Fold every batch-norm into its preceding convolution.

    Returns a graph without bn nodes and a matching manifest; forward results
    agree with the unfused pair to float32 rounding. Folding an already
    folded graph is a no-op.
    """
    from .kernels import BatchNormParams, ConvParams, batch_norm_fold

    report = validate(manifest, graph)
    if not report.ok:
        raise ManifestError(f"manifest does not match graph:\n{report}")

    # bn node -> its conv parent; reject bn without a conv/dwconv parent.
    fold_into: Dict[str, LayerNode] = {}
    for node in graph.nodes:
        if node.kind != "bn":
            continue
        parent = graph.by_id[node.inputs[0]]
        if parent.kind not in ("conv", "dwconv"):
            raise ManifestError(
                f"bn node {node.id!r} does not follow a convolution "
                f"(parent {parent.id!r} is {parent.kind})")
        fold_into[node.id] = parent

    epsilon = manifest.bn_epsilon
    rewire: Dict[str, str] = {}  # bn id -> conv id
    folded_params: Dict[str, ConvParams] = {}
    for bn_id, conv in fold_into.items():
        bn = BatchNormParams(
            gamma=manifest.array(f"{bn_id}/gamma"),
            beta=manifest.array(f"{bn_id}/beta"),
            mean=manifest.array(f"{bn_id}/mean"),
            variance=manifest.array(f"{bn_id}/variance"),
            epsilon=epsilon,
        )
        bias = manifest.array(f"{conv.id}/bias") if f"{conv.id}/bias" in manifest else None
        groups = (manifest.array(f"{conv.id}/kernel").shape[0]
                  if conv.kind == "dwconv" else conv.params.get("groups", 1))
        params = ConvParams(kernel=manifest.array(f"{conv.id}/kernel"), bias=bias,
                            stride=tuple(conv.params["stride"]),
                            rate=tuple(conv.params["rate"]), groups=groups)
        folded_params[conv.id] = batch_norm_fold(params, bn)
        rewire[bn_id] = conv.id

    b = GraphBuilder()
    for node in graph.nodes:
        if node.kind == "bn" and node.id in rewire:
            continue
        inputs = [rewire.get(ref, ref) for ref in node.inputs]
        params = dict(node.params)
        if node.id in folded_params:
            params["bias"] = True
        if "ref" in params:
            params["ref"] = rewire.get(params["ref"], params["ref"])
        b.add(node.id, node.kind, inputs, **params)
    new_graph = b.build()

    arrays: Dict[str, np.ndarray] = {}
    for name in manifest.entries:
        node_id, leaf = name.rsplit("/", 1)
        if node_id in rewire:  # bn entries disappear
            continue
        if node_id in folded_params:
            if leaf == "kernel":
                arrays[name] = folded_params[node_id].kernel
                bias = folded_params[node_id].bias
                if bias is not None and node_id + "/bias" not in manifest:
                    arrays[f"{node_id}/bias"] = bias
            elif leaf == "bias":
                arrays[name] = folded_params[node_id].bias
            else:
                arrays[name] = manifest.array(name)
        else:
            arrays[name] = manifest.array(name)

    metadata = dict(manifest.metadata)
    metadata["fingerprint"] = new_graph.fingerprint()
    metadata["folded"] = "true"
    return new_graph, WeightManifest.from_arrays(arrays, metadata)
