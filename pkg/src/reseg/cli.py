"""Command-line interface.

Subcommands: merge, pvsm-report, segment, eval, sweep-theta, gen-masks.
Every run with identical inputs and flags produces byte-identical outputs;
a hash of the input files and semantic flags is embedded in each output's
metadata (worker-thread count is excluded, since results do not depend on
it). RESEG_THREADS provides the default for --threads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import EncoderConfig
from .errors import ConfigError, ResegError
from .formats import (
    load_image_rgb,
    load_region_raster,
    write_container,
    write_label_png,
    write_rgl,
)
from .merge import build_report, merge_checkpoints
from .metrics import ConfusionMatrix, accumulate, iou
from .segment import SlidingWindowConfig, sliding_window_segment, tile_hierarchy_provider
from .synth import voronoi_hierarchy
from .text import (
    HashingTextEncoder,
    PromptGrammar,
    class_embedding_matrix,
    class_matrix_from_sets,
    encode_prompts,
    generate_variants,
    load_embedding_sets,
)


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config_hash(command: str, options: dict, inputs: dict[str, str]) -> str:
    payload = {
        "command": command,
        "options": {k: options[k] for k in sorted(options)},
        "inputs": {k: _file_digest(v) for k, v in sorted(inputs.items())},
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _default_threads() -> int:
    return int(os.environ.get("RESEG_THREADS", "1"))


def _feature_dim(ckpt: Checkpoint) -> int:
    if "proj" in ckpt.tensors:
        return int(ckpt.tensors["proj"].shape[1])
    return int(ckpt.arch()["dim"])


def _text_matrix(args, ckpt: Checkpoint) -> tuple[np.ndarray, list[str]]:
    """Class embedding matrix plus class names, from file or grammar."""
    if getattr(args, "text_embeddings", None):
        sets = load_embedding_sets(args.text_embeddings)
        model = args.text_model
        if model is None:
            if len(sets) != 1:
                raise ConfigError(
                    f"{args.text_embeddings} holds models {sorted(sets)}; pick one with --text-model"
                )
            model = next(iter(sets))
        if model not in sets:
            raise ConfigError(f"{args.text_embeddings} has no model '{model}'")
        classes = sorted(sets[model])
        matrix = class_matrix_from_sets(sets[model], classes)
    elif getattr(args, "grammar", None):
        if not args.toy_encoder:
            raise ConfigError("--grammar needs --toy-encoder (or use --text-embeddings)")
        grammar = PromptGrammar.load(args.grammar)
        dim = args.toy_dim or _feature_dim(ckpt)
        encoder = HashingTextEncoder(dim, seed=args.toy_seed)
        classes = grammar.classes
        matrix = class_embedding_matrix(grammar, encoder)
    else:
        raise ConfigError("provide --text-embeddings or --grammar with --toy-encoder")
    want = _feature_dim(ckpt)
    if matrix.shape[1] != want:
        raise ConfigError(
            f"text embedding dim {matrix.shape[1]} does not match encoder output dim {want}"
        )
    return matrix, classes


def _load_rasters(paths, image_shape) -> list[np.ndarray]:
    rasters = []
    for p in paths:
        li = load_region_raster(p)
        if (li.height, li.width) != image_shape:
            raise ConfigError(
                f"mask raster {p} is {li.height}x{li.width}, image is "
                f"{image_shape[0]}x{image_shape[1]}"
            )
        rasters.append(li.labels)
    return rasters


def _run_tiled(ckpt, image, rasters, theta, args, text):
    cfg = EncoderConfig.from_checkpoint(ckpt, masked_layers=theta)
    swc = SlidingWindowConfig(
        tile=args.tile, stride=args.stride, score_mode=getattr(args, "score_mode", "similarity")
    )
    provider = tile_hierarchy_provider(rasters, cfg.patch, args.tile) if rasters else None
    mean, std = ckpt.preprocess_constants()
    prepared = (image - mean) / std
    return sliding_window_segment(
        prepared, ckpt, cfg, swc, text, provider, threads=args.threads
    )


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_merge(args) -> int:
    ckpts = [load_checkpoint(p) for p in args.checkpoints]
    scores = None
    if args.weights:
        weights = [float(w) for w in args.weights.split(",")]
        if len(weights) != len(ckpts):
            raise ConfigError(f"{len(ckpts)} checkpoints but {len(weights)} weights")
    elif args.pvsm_report:
        report = json.loads(Path(args.pvsm_report).read_text())
        if not report.get("weights"):
            raise ConfigError(
                f"{args.pvsm_report} has no usable weights "
                f"(non-positive margins: {report.get('non_positive')})"
            )
        weights = []
        for ck in ckpts:
            if ck.model_id not in report["weights"]:
                raise ConfigError(f"report has no weight for model '{ck.model_id}'")
            weights.append(float(report["weights"][ck.model_id]))
        scores = report.get("scores")
    else:
        raise ConfigError("provide --weights or --pvsm-report")
    fused = merge_checkpoints(ckpts, weights)
    if scores is not None:
        fused.meta["pvsm"] = scores
    fused.meta["config_hash"] = _config_hash(
        "merge",
        {"weights": weights},
        {f"checkpoint{i}": p for i, p in enumerate(args.checkpoints)},
    )
    save_checkpoint(args.out, fused)
    print("merged " + ", ".join(f"{ck.model_id}={w:g}" for ck, w in zip(ckpts, weights)))
    print(f"wrote {args.out}")
    return 0


def cmd_pvsm_report(args) -> int:
    inputs: dict[str, str] = {}
    if args.embeddings:
        sets = load_embedding_sets(args.embeddings)
        models = args.models.split(",") if args.models else sorted(sets)
        missing = [m for m in models if m not in sets]
        if missing:
            raise ConfigError(f"{args.embeddings} lacks models {missing}")
        by_model = {m: sets[m] for m in models}
        inputs["embeddings"] = args.embeddings
    elif args.grammar and args.toy_encoder:
        if not args.models:
            raise ConfigError("--toy-encoder needs --models (comma-separated ids)")
        grammar = PromptGrammar.load(args.grammar)
        encoder = HashingTextEncoder(args.toy_dim, seed=args.toy_seed)
        per_class = {
            c: encode_prompts(generate_variants(grammar, c), encoder)
            for c in grammar.classes
        }
        by_model = {m: per_class for m in args.models.split(",")}
        inputs["grammar"] = args.grammar
    else:
        raise ConfigError("provide --embeddings or --grammar with --toy-encoder")

    report = build_report(by_model)
    payload = report.to_json()
    payload["config_hash"] = _config_hash(
        "pvsm-report",
        {"models": report.models, "toy_dim": args.toy_dim, "toy_seed": args.toy_seed},
        inputs,
    )
    _write_json(args.out, payload)
    print(f"wrote {args.out}")
    if report.weights is None:
        print(
            f"error: non-positive margin for {report.non_positive}; no weights emitted",
            file=sys.stderr,
        )
        return 3
    print(", ".join(f"{m}={w:.4f}" for m, w in report.weights.items()))
    return 0


def _segment_once(args):
    ckpt = load_checkpoint(args.checkpoint)
    image = load_image_rgb(args.image)
    text, classes = _text_matrix(args, ckpt)
    mask_paths = args.masks or []
    if args.theta == 0:
        if mask_paths:
            raise ConfigError("--theta 0 runs unmasked; drop the --masks arguments")
        rasters = []
    else:
        if len(mask_paths) != args.theta:
            raise ConfigError(
                f"--theta {args.theta} needs exactly {args.theta} mask rasters, got {len(mask_paths)}"
            )
        rasters = _load_rasters(mask_paths, image.shape[:2])
    scores, labels = _run_tiled(ckpt, image, rasters, args.theta, args, text)
    return ckpt, scores, labels, classes, mask_paths


def cmd_segment(args) -> int:
    ckpt, scores, labels, classes, mask_paths = _segment_once(args)
    inputs = {"checkpoint": args.checkpoint, "image": args.image}
    for i, p in enumerate(mask_paths):
        inputs[f"mask{i}"] = p
    if args.text_embeddings:
        inputs["text_embeddings"] = args.text_embeddings
    if args.grammar:
        inputs["grammar"] = args.grammar
    cfg_hash = _config_hash(
        "segment",
        {
            "tile": args.tile,
            "stride": args.stride,
            "theta": args.theta,
            "score_mode": args.score_mode,
            "toy_encoder": args.toy_encoder,
            "toy_dim": args.toy_dim,
            "toy_seed": args.toy_seed,
            "text_model": args.text_model,
        },
        inputs,
    )
    write_label_png(args.out_labels, labels)
    sidecar = {
        "config_hash": cfg_hash,
        "checkpoint": ckpt.model_id,
        "classes": classes,
        "tile": args.tile,
        "stride": args.stride,
        "theta": args.theta,
        "score_mode": args.score_mode,
        "height": int(labels.shape[0]),
        "width": int(labels.shape[1]),
    }
    _write_json(str(args.out_labels) + ".json", sidecar)
    if args.out_scores:
        write_container(
            args.out_scores,
            {"scores": scores},
            {"kind": "scores", "classes": classes, "config_hash": cfg_hash},
        )
    print(f"wrote {args.out_labels}")
    return 0


def cmd_eval(args) -> int:
    gt = load_region_raster(args.gt).labels
    pred = load_region_raster(args.pred).labels
    cm = ConfusionMatrix.zeros(args.classes, args.ignore_label)
    accumulate(cm, gt, pred)
    per_class, miou = iou(cm)
    gt_counts = cm.counts.sum(axis=1)
    payload = {
        "config_hash": _config_hash(
            "eval",
            {"classes": args.classes, "ignore_label": args.ignore_label},
            {"gt": args.gt, "pred": args.pred},
        ),
        "classes": args.classes,
        "ignore_label": args.ignore_label,
        "per_class_iou": per_class,
        "miou": miou,
        "pixel_counts": {
            "total": cm.total,
            "per_class_gt": [int(v) for v in gt_counts],
        },
    }
    _write_json(args.out, payload)
    print(f"mIoU {miou:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_sweep_theta(args) -> int:
    grid = [int(v) for v in args.grid.split(",")]
    ckpt = load_checkpoint(args.checkpoint)
    image = load_image_rgb(args.image)
    text, classes = _text_matrix(args, ckpt)
    pool_paths = args.masks or []
    pool = _load_rasters(pool_paths, image.shape[:2])
    layers = int(ckpt.arch()["layers"])
    gt = load_region_raster(args.gt).labels
    entries = []
    for theta in grid:
        if theta > layers:
            raise ConfigError(f"theta {theta} exceeds encoder depth {layers}")
        if theta > len(pool):
            raise ConfigError(
                f"theta {theta} needs {theta} mask rasters but the pool has {len(pool)}"
            )
        rasters = pool[len(pool) - theta :] if theta else []
        _, labels = _run_tiled(ckpt, image, rasters, theta, args, text)
        cm = ConfusionMatrix.zeros(len(classes), args.ignore_label)
        accumulate(cm, gt, labels)
        _, miou = iou(cm)
        entries.append({"theta": theta, "miou": miou})
    inputs = {"checkpoint": args.checkpoint, "image": args.image, "gt": args.gt}
    for i, p in enumerate(pool_paths):
        inputs[f"mask{i}"] = p
    if args.text_embeddings:
        inputs["text_embeddings"] = args.text_embeddings
    if args.grammar:
        inputs["grammar"] = args.grammar
    payload = {
        "config_hash": _config_hash(
            "sweep-theta",
            {
                "grid": grid,
                "tile": args.tile,
                "stride": args.stride,
                "score_mode": args.score_mode,
                "toy_encoder": args.toy_encoder,
                "toy_dim": args.toy_dim,
                "toy_seed": args.toy_seed,
                "text_model": args.text_model,
                "ignore_label": args.ignore_label,
            },
            inputs,
        ),
        "grid": grid,
        "entries": entries,
    }
    _write_json(args.out, payload)
    for e in entries:
        print(f"theta {e['theta']:3d}  mIoU {e['miou']:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_gen_masks(args) -> int:
    counts = [int(v) for v in args.counts.split(",")]
    levels = voronoi_hierarchy(args.height, args.width, counts, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_hash = _config_hash(
        "gen-masks",
        {"height": args.height, "width": args.width, "counts": counts, "seed": args.seed},
        {},
    )
    for r, li in enumerate(levels):
        path = out_dir / f"level_{r:02d}.rgl"
        write_rgl(path, li.labels, f"{li.provenance} config={cfg_hash[:12]}")
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# parser wiring
# --------------------------------------------------------------------------


def _add_text_source_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--text-embeddings", help="precomputed embedding container (.ckpt1)")
    p.add_argument("--text-model", help="model id inside the embedding container")
    p.add_argument("--grammar", help="prompt grammar JSON")
    p.add_argument("--toy-encoder", action="store_true", help="hash-based text encoder")
    p.add_argument("--toy-dim", type=int, default=None, help="toy encoder width")
    p.add_argument("--toy-seed", type=int, default=0)


def _add_tiling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tile", type=int, default=224)
    p.add_argument("--stride", type=int, default=50)
    p.add_argument("--score-mode", choices=["similarity", "probability"], default="similarity")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("merge", help="fuse checkpoints by weighted parameter averaging")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--weights", help="comma-separated weights summing to 1")
    p.add_argument("--pvsm-report", help="take weights from a pvsm-report JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("pvsm-report", help="score models by prompt-variant separation margin")
    p.add_argument("--embeddings", help="embedding container with text/<model>/<class> tensors")
    p.add_argument("--grammar", help="prompt grammar JSON (with --toy-encoder)")
    p.add_argument("--toy-encoder", action="store_true")
    p.add_argument("--toy-dim", type=int, default=64)
    p.add_argument("--toy-seed", type=int, default=0)
    p.add_argument("--models", help="comma-separated model ids")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pvsm_report)

    p = sub.add_parser("segment", help="dense prediction over one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="PNG or PPM input")
    p.add_argument("--masks", nargs="*", default=[], help="region rasters, coarse to fine")
    p.add_argument("--theta", type=int, default=6, help="number of masked final layers")
    _add_text_source_flags(p)
    _add_tiling_flags(p)
    p.add_argument("--out-labels", required=True, help="16-bit label PNG")
    p.add_argument("--out-scores", help="optional score-container output")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="confusion matrix, per-class IoU, mIoU")
    p.add_argument("--gt", required=True, help="ground-truth raster (.rgl or 16-bit PNG)")
    p.add_argument("--pred", required=True, help="prediction raster")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--ignore-label", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-theta", help="mIoU across masked-layer counts")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--masks", nargs="*", default=[], help="raster pool, coarse to fine")
    p.add_argument("--gt", required=True)
    p.add_argument("--grid", default="0,1,3,6,12,18")
    p.add_argument("--ignore-label", type=int, default=None)
    _add_text_source_flags(p)
    _add_tiling_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_theta)

    p = sub.add_parser("gen-masks", help="seeded Voronoi region rasters, coarse to fine")
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--counts", required=True, help="strictly increasing region counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_masks)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = _default_threads()
    try:
        return args.func(args)
    except (ResegError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
