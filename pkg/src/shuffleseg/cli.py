"""Command-line surface: analyze, infer, bench, eval, lr-table, export-graph.

Exit codes: 0 on success, 2 on usage errors (argparse), 1 on runtime errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Tuple

import numpy as np

from . import __version__
from .analysis import count_costs, format_report, lint_guidelines, report_csv
from .benchmark import BenchConfig, bench, format_result, result_csv, synthetic_image
from .datapipe import (CLASS_NAMES, IGNORE_LABEL, colorize, load_image,
                       load_labels, load_palette, preprocess, save_image,
                       save_labels)
from .graph import Graph
from .metrics import ConfusionMatrix
from .network import NetworkSpec, build_network, shape_summary
from .runtime import forward
from .trainproto import ScheduleConfig, poly_lr, resize_image
from .weights import WeightManifest, fold_all, init_random, validate


def _parse_size(text: str) -> Tuple[int, int]:
    """Parse WxH (as printed for image resolutions) into (h, w)."""
    try:
        w, h = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"invalid size {text!r}; expected WIDTHxHEIGHT, e.g. 640x360")


def _network_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--head", choices=("basic", "dpc"), default="basic",
                        help="encoder head variant (default: basic)")
    parser.add_argument("--output-stride", type=int, choices=(8, 16), default=16,
                        help="feature extractor downsampling factor (default: 16)")
    parser.add_argument("--classes", type=int, default=19, metavar="N",
                        help="number of output classes (default: 19)")
    parser.add_argument("--weights", metavar="PATH",
                        help="weight manifest prefix or .manifest path")
    parser.add_argument("--seed", type=int, default=0, metavar="N",
                        help="seed for random weights when --weights is absent")
    parser.add_argument("--graph", metavar="PATH",
                        help="load a serialized graph instead of building one")


def _build(args) -> Tuple[Graph, NetworkSpec]:
    spec = NetworkSpec(output_stride=args.output_stride, head=args.head,
                       num_classes=args.classes)
    if getattr(args, "graph", None):
        return Graph.load(args.graph), spec
    return build_network(spec), spec


def _load_weights(args, graph: Graph) -> WeightManifest:
    if args.weights:
        manifest = WeightManifest.load(args.weights)
    else:
        manifest = init_random(graph, seed=args.seed)
    report = validate(manifest, graph)
    if not report.ok:
        raise ValueError(f"weights do not match the network:\n{report}")
    return manifest


def _cmd_analyze(args) -> int:
    graph, spec = _build(args)
    if args.folded:
        manifest = _load_weights(args, graph)
        graph, _ = fold_all(manifest, graph)
    report = count_costs(graph, args.size, scope=args.scope)
    if args.csv:
        sys.stdout.write(report_csv(report))
    else:
        h, w = args.size
        print("architecture summary:")
        for label, node_id, (sh, sw, sc) in shape_summary(graph, (1, 3, h, w)):
            print(f"  {label:<14} {sh}x{sw}x{sc}")
        print()
        print(format_report(report, detail=args.per_layer))
        if args.lint:
            print()
            print("guideline findings:")
            for finding in lint_guidelines(graph):
                print(f"  {finding}")
    return 0


def _cmd_infer(args) -> int:
    graph, spec = _build(args)
    manifest = _load_weights(args, graph)
    image = load_image(args.image)
    if args.size is not None:
        h, w = args.size
        image = np.clip(np.rint(resize_image(image, h, w)), 0, 255).astype(np.uint8)
    logits, labels = forward(graph, manifest, preprocess(image))
    mask = labels[0]
    save_labels(args.out, mask)
    print(f"wrote {args.out} ({mask.shape[1]}x{mask.shape[0]}, "
          f"{len(np.unique(mask))} distinct classes)")
    if args.color:
        palette = load_palette(args.palette)[0] if args.palette else None
        save_image(args.color, colorize(mask, palette=palette))
        print(f"wrote {args.color}")
    return 0


def _cmd_bench(args) -> int:
    graph, spec = _build(args)
    manifest = _load_weights(args, graph)
    if args.folded:
        graph, manifest = fold_all(manifest, graph)
    cfg = BenchConfig(warmup_seconds=args.warmup_seconds, frames=args.frames,
                      input_size=args.size, threads=args.threads,
                      include_pre_post=not args.no_pre_post)
    if args.image:
        image = load_image(args.image)
        h, w = cfg.input_size
        if image.shape[:2] != (h, w):
            image = np.clip(np.rint(resize_image(image, h, w)), 0, 255).astype(np.uint8)
    else:
        image = synthetic_image(cfg.input_size, seed=args.seed)
    result = bench(graph, manifest, cfg, image=image)
    sys.stdout.write(result_csv(result) if args.csv else format_result(result) + "\n")
    return 0


def _matched_label_files(pred_dir: str, gt_dir: str):
    preds = sorted(f for f in os.listdir(pred_dir) if f.lower().endswith(".png"))
    if not preds:
        raise ValueError(f"no .png label maps found in {pred_dir}")
    pairs = []
    for name in preds:
        gt_path = os.path.join(gt_dir, name)
        if not os.path.exists(gt_path):
            raise ValueError(f"no ground-truth file for {name} in {gt_dir}")
        pairs.append((os.path.join(pred_dir, name), gt_path))
    return pairs


def _cmd_eval(args) -> int:
    cm = ConfusionMatrix(args.classes, ignore_label=IGNORE_LABEL)
    for pred_path, gt_path in _matched_label_files(args.pred, args.gt):
        cm.update(load_labels(pred_path), load_labels(gt_path))
    summary = cm.summary()
    names = list(CLASS_NAMES) if args.classes == len(CLASS_NAMES) else [
        str(i) for i in range(args.classes)]
    print(f"{'class':<16} {'IOU':>8}")
    for i, iou in enumerate(summary.class_iou):
        text = "n/a" if np.isnan(iou) else f"{iou:.4f}"
        print(f"{names[i]:<16} {text:>8}")
    mean = "n/a" if not summary.defined else f"{summary.mean_iou:.4f}"
    print(f"{'mIOU':<16} {mean:>8}")
    print(f"ignored pixels: {summary.ignored_pixels}")
    if args.categories:
        grouping = _load_grouping(args.categories, args.classes)
        cats = cm.category_iou(grouping)
        print(f"{'category':<16} {'IOU':>8}")
        for i, iou in enumerate(cats):
            text = "n/a" if np.isnan(iou) else f"{iou:.4f}"
            print(f"{i:<16} {text:>8}")
    return 0


def _load_grouping(path: str, num_classes: int) -> dict:
    grouping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'class_id category_id'")
            grouping[int(parts[0])] = int(parts[1])
    return grouping


def _cmd_lr_table(args) -> int:
    cfg = ScheduleConfig(lr_initial=args.lr_initial, max_iter=args.max_iter,
                         power=args.power, slow_start_steps=args.slow_start_steps,
                         slow_start_lr=args.slow_start_lr)
    print("step,learning_rate")
    for step in range(0, cfg.max_iter + 1, args.every):
        print(f"{step},{poly_lr(step, cfg):.10g}")
    return 0


def _cmd_export_graph(args) -> int:
    graph, spec = _build(args)
    graph.save(args.out)
    print(f"wrote {args.out} ({len(graph)} nodes, fingerprint {graph.fingerprint()})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shuffleseg",
        description="CPU inference engine, cost analyzer, and benchmark harness "
                    "for shuffle-unit semantic segmentation networks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("analyze", help="static MACs/FLOPs/parameter report")
    _network_args(p)
    p.add_argument("--size", type=_parse_size, default=(769, 769), metavar="WxH",
                   help="input resolution (default: 769x769)")
    p.add_argument("--scope", choices=("full", "backbone"), default="full",
                   help="count everything, or stop before the decoder")
    p.add_argument("--per-layer", action="store_true", help="print per-layer rows")
    p.add_argument("--lint", action="store_true", help="print guideline findings")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of text")
    p.add_argument("--folded", action="store_true",
                   help="analyze the batch-norm-folded graph")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("infer", help="segment one image into a label-map PNG")
    _network_args(p)
    p.add_argument("--image", required=True, metavar="PATH", help="input image")
    p.add_argument("--out", required=True, metavar="PATH", help="label-map PNG output")
    p.add_argument("--color", metavar="PATH", help="also write a colorized mask")
    p.add_argument("--palette", metavar="FILE",
                   help="palette override file: one 'id r g b name' line per class")
    p.add_argument("--size", type=_parse_size, default=None, metavar="WxH",
                   help="resize input before inference (default: native size)")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("bench", help="latency benchmark with warm-up protocol")
    _network_args(p)
    p.add_argument("--frames", type=int, default=300, metavar="N",
                   help="timed frames after warm-up (default: 300)")
    p.add_argument("--warmup-seconds", type=float, default=30.0, metavar="S",
                   help="wall-clock warm-up duration (default: 30)")
    p.add_argument("--size", type=_parse_size, default=(224, 224), metavar="WxH",
                   help="input resolution (default: 224x224)")
    p.add_argument("--threads", type=int, default=1, metavar="N",
                   help="intra-op thread setting recorded in the fingerprint")
    p.add_argument("--no-pre-post", action="store_true",
                   help="exclude standardization and argmax from the timed region")
    p.add_argument("--image", metavar="PATH",
                   help="benchmark frame (default: synthetic)")
    p.add_argument("--folded", action="store_true",
                   help="benchmark the batch-norm-folded graph")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of text")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("eval", help="mIOU over directories of label-map PNGs")
    p.add_argument("--pred", required=True, metavar="DIR", help="predictions")
    p.add_argument("--gt", required=True, metavar="DIR", help="ground truth")
    p.add_argument("--classes", type=int, default=19, metavar="N")
    p.add_argument("--categories", metavar="FILE",
                   help="class-to-category grouping file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("lr-table", help="print the poly learning-rate schedule as CSV")
    p.add_argument("--lr-initial", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=60000)
    p.add_argument("--power", type=float, default=0.9)
    p.add_argument("--slow-start-steps", type=int, default=0)
    p.add_argument("--slow-start-lr", type=float, default=1e-5)
    p.add_argument("--every", type=int, default=1000, metavar="N",
                   help="print every N steps (default: 1000)")
    p.set_defaults(func=_cmd_lr_table)

    p = sub.add_parser("export-graph", help="serialize the network graph to a file")
    _network_args(p)
    p.add_argument("--out", required=True, metavar="PATH")
    p.set_defaults(func=_cmd_export_graph)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (ValueError, OSError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
