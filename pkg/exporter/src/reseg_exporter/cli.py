"""Standalone export tool: real-world artifacts in, engine formats out."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .checkpoints import ExportManifest, ManifestError, export_checkpoint, load_source
from .sam import MaskLevelError, NpzStackSource, SamSource, export_hierarchy
from .textdump import export_text_embeddings, load_grammar, make_tower


def cmd_checkpoint(args) -> int:
    manifest = ExportManifest.load(args.manifest)
    source = load_source(args.source)
    export_checkpoint(source, manifest, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_text(args) -> int:
    grammar = load_grammar(args.grammar)
    tower = make_tower(args.model)
    model_id = args.model_id or args.model.replace(":", "-").replace("/", "-")
    export_text_embeddings(tower, grammar, model_id, args.out)
    print(f"wrote {args.out} (model '{model_id}')")
    return 0


def cmd_sam(args) -> int:
    configs = json.loads(Path(args.theta_config).read_text())
    if not isinstance(configs, list) or not configs:
        raise ManifestError(f"{args.theta_config} must hold a non-empty list of configs")
    image = np.asarray(Image.open(args.image).convert("RGB"))
    if args.masks_npz:
        if len(args.masks_npz) != len(configs):
            raise ManifestError(
                f"{len(configs)} configs but {len(args.masks_npz)} precomputed stacks"
            )
        source = NpzStackSource(args.masks_npz)
    elif args.sam_checkpoint:
        source = SamSource(args.sam_checkpoint, args.sam_model_type)
    else:
        raise ManifestError("provide --masks-npz stacks or a --sam-checkpoint")
    for path in export_hierarchy(image, configs, source, args.out_dir):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reseg-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("checkpoint", help="framework checkpoint -> .ckpt1")
    p.add_argument("--source", required=True, help=".safetensors, .npz, or torch .pt")
    p.add_argument("--manifest", required=True, help="name mapping + architecture JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_checkpoint)

    p = sub.add_parser("text", help="text-tower variant embeddings -> container")
    p.add_argument("--model", required=True, help="hash:<dim>[:<seed>] or hf:<model id>")
    p.add_argument("--model-id", help="id recorded in the container (defaults to --model)")
    p.add_argument("--grammar", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_text)

    p = sub.add_parser("sam", help="mask-generator output -> .rgl hierarchy")
    p.add_argument("--image", required=True)
    p.add_argument("--theta-config", required=True, help="JSON list of per-level configs")
    p.add_argument("--masks-npz", nargs="*", help="precomputed stacks, one per level")
    p.add_argument("--sam-checkpoint", help="run the real generator from this checkpoint")
    p.add_argument("--sam-model-type", default="vit_h")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sam)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ManifestError, MaskLevelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
