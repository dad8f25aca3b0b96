"""Latency benchmark harness: wall-clock warm-up, fixed sample count.

The timed region covers input standardization, the forward pass, and the
final argmax when `include_pre_post` is on; with it off only the logits
computation is timed. Image decoding and resizing to the input size always
stay outside the clock. Results carry an environment fingerprint; two
results are only comparable when their fingerprints match.
"""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .datapipe import preprocess
from .graph import Graph
from .runtime import execute, forward
from .weights import WeightManifest, validate

__all__ = ["BenchConfig", "BenchResult", "bench", "synthetic_image",
           "format_result", "result_csv"]


@dataclass(frozen=True)
class BenchConfig:
    warmup_seconds: float = 30.0
    frames: int = 300
    input_size: Tuple[int, int] = (224, 224)
    threads: int = 1
    include_pre_post: bool = True

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if self.warmup_seconds < 0:
            raise ValueError(f"warmup_seconds must be >= 0, got {self.warmup_seconds}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")


@dataclass
class BenchResult:
    mean_ms: float
    variance_ms: float  # population variance over the samples
    fps: float
    samples_ms: List[float]
    fingerprint: Dict[str, str] = field(default_factory=dict)

    def comparable_with(self, other: "BenchResult") -> bool:
        return self.fingerprint == other.fingerprint


def synthetic_image(size: Tuple[int, int], seed: int = 0) -> np.ndarray:
    """Deterministic (h, w, 3) uint8 test pattern."""
    h, w = size
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def _fingerprint(graph: Graph, manifest: WeightManifest,
                 cfg: BenchConfig) -> Dict[str, str]:
    return {
        "graph": graph.fingerprint(),
        "weights": manifest.metadata.get("fingerprint", ""),
        "input_size": f"{cfg.input_size[0]}x{cfg.input_size[1]}",
        "threads": str(cfg.threads),
        "include_pre_post": str(cfg.include_pre_post).lower(),
        "numpy": np.__version__,
        "python": platform.python_version(),
        "machine": platform.machine(),
    }


def bench(graph: Graph, manifest: WeightManifest, cfg: BenchConfig,
          image: Optional[np.ndarray] = None) -> BenchResult:
    """Measure inference latency: warm up by wall clock, then time `frames` runs.

    `image` is an (h, w, 3) uint8 frame already at the input size; when
    omitted, a seeded synthetic frame is used. The engine executes
    single-threaded regardless of `threads`, which is recorded in the
    fingerprint for comparability.
    """
    report = validate(manifest, graph)
    if not report.ok:
        raise ValueError(f"weights do not match graph:\n{report}")
    if image is None:
        image = synthetic_image(cfg.input_size)
    if image.shape[:2] != tuple(cfg.input_size):
        raise ValueError(
            f"benchmark image {image.shape[:2]} does not match configured "
            f"input size {tuple(cfg.input_size)}")

    out_node = graph.by_id[graph.output_id]
    logits_node = (out_node.inputs[0] if out_node.kind == "argmax"
                   else graph.output_id)
    standardized = preprocess(image)

    if cfg.include_pre_post:
        def run_frame():
            x = preprocess(image)
            _, labels = forward(graph, manifest, x)
            return labels
    else:
        def run_frame():
            return execute(graph, manifest, standardized, upto=logits_node)

    clock = time.perf_counter
    t0 = clock()
    while clock() - t0 < cfg.warmup_seconds:
        run_frame()

    samples: List[float] = []
    for _ in range(cfg.frames):
        start = clock()
        run_frame()
        samples.append((clock() - start) * 1000.0)

    arr = np.asarray(samples, dtype=np.float64)
    mean = float(arr.mean())
    return BenchResult(
        mean_ms=mean,
        variance_ms=float(arr.var()),  # population variance
        fps=1000.0 / mean,
        samples_ms=samples,
        fingerprint=_fingerprint(graph, manifest, cfg),
    )


def format_result(result: BenchResult) -> str:
    lines = [
        f"frames          {len(result.samples_ms)}",
        f"mean latency    {result.mean_ms:.2f} ms",
        f"variance        {result.variance_ms:.2f} ms^2",
        f"fps             {result.fps:.2f}",
    ]
    for key, value in result.fingerprint.items():
        lines.append(f"env {key:<16} {value}")
    return "\n".join(lines)


def result_csv(result: BenchResult) -> str:
    fp = ";".join(f"{k}={v}" for k, v in result.fingerprint.items())
    lines = ["frame,latency_ms"]
    lines += [f"{i},{ms:.6f}" for i, ms in enumerate(result.samples_ms)]
    lines.append(f"mean,{result.mean_ms:.6f}")
    lines.append(f"variance,{result.variance_ms:.6f}")
    lines.append(f"fps,{result.fps:.6f}")
    lines.append(f"fingerprint,{fp}")
    return "\n".join(lines) + "\n"
