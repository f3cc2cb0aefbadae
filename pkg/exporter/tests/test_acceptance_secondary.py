"""Acceptance: exported artifacts must interoperate with the engine.

The engine is exercised exclusively through its public surfaces: the
`reseg` CLI and the documented file formats. Nothing here imports the
engine package.
"""

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from reseg_exporter import container, rgl
from reseg_exporter.checkpoints import ExportManifest, export_checkpoint
from reseg_exporter.cli import main as exporter_main
from reseg_exporter.sam import NpzStackSource, export_hierarchy
from reseg_exporter.textdump import HashTower, export_text_embeddings

from conftest import build_source

GRAMMAR = {
    "base_prompts": {
        "pavement": "an aerial image of pavement in the city",
        "rooftop": "an aerial image of rooftop in the city",
    },
    "synonyms": {"pavement": ["pavement"], "rooftop": ["rooftop"]},
    "prefixes": ["an aerial image"],
    "suffixes": ["in the city"],
    "K": 2,
    "seed": 3,
}


def run_engine(*argv):
    """Invoke the engine CLI as a subprocess; returns CompletedProcess."""
    exe = shutil.which("reseg")
    cmd = [exe] if exe else [sys.executable, "-m", "reseg.cli"]
    return subprocess.run(
        [*cmd, *[str(a) for a in argv]], capture_output=True, text=True
    )


def export_model(tmp_path, seed, name):
    source, manifest_dict = build_source(seed=seed)
    manifest_dict["model_id"] = name
    manifest = ExportManifest(
        manifest_dict["model_id"],
        manifest_dict["mapping"],
        manifest_dict["meta"],
        manifest_dict["transpose"],
    )
    out = tmp_path / f"{name}.ckpt1"
    export_checkpoint(source, manifest, out)
    return out


def test_criterion_10_round_trip_and_interop(tmp_path):
    ck_a = export_model(tmp_path, 71, "model-a")
    ck_b = export_model(tmp_path, 72, "model-b")

    # fixed point: read back and re-serialize, byte-identical
    tensors, meta = container.read(ck_a)
    rewritten = tmp_path / "rewritten.ckpt1"
    container.write(rewritten, tensors, meta)
    assert rewritten.read_bytes() == ck_a.read_bytes()

    # engine load: identity merge succeeds and preserves every value
    identity = tmp_path / "identity.ckpt1"
    proc = run_engine("merge", ck_a, "--weights", "1.0", "--out", identity)
    assert proc.returncode == 0, proc.stderr
    loaded, _ = container.read(identity)
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert np.array_equal(loaded[name], tensors[name])

    # reported weights accepted and recorded in fused metadata
    fused = tmp_path / "fused.ckpt1"
    proc = run_engine("merge", ck_a, ck_b, "--weights", "0.37,0.63", "--out", fused)
    assert proc.returncode == 0, proc.stderr
    _, fused_meta = container.read(fused)
    assert fused_meta["weights"] == [0.37, 0.63]
    assert fused_meta["sources"] == ["model-a", "model-b"]
    print("[acceptance] criterion 10a export round trip + merge interop: PASS", flush=True)


def test_criterion_10_rasters_and_embeddings_drive_engine(tmp_path):
    ck = export_model(tmp_path, 73, "model-c")

    # text embeddings through the exporter's own serializer
    emb = tmp_path / "emb.ckpt1"
    export_text_embeddings(HashTower(8, seed=4), GRAMMAR, "model-c", emb)

    # mask hierarchy from precomputed stacks, including an overlap
    stacks = []
    specs = [
        np.stack([np.ones((8, 8), bool)]),
        np.stack(
            [
                np.pad(np.ones((8, 4), bool), ((0, 0), (0, 4))),
                np.pad(np.ones((8, 5), bool), ((0, 0), (3, 0))),
                np.zeros((8, 8), bool),
            ]
        ),
    ]
    for level, stack in enumerate(specs):
        path = tmp_path / f"stack{level}.npz"
        np.savez(path, masks=stack)
        stacks.append(str(path))
    image = np.zeros((8, 8, 3), np.uint8)
    rasters = export_hierarchy(
        image, [{"level": "coarse"}, {"level": "fine"}], NpzStackSource(stacks), tmp_path / "rgl"
    )
    # overlap resolved to the lowest mask index in the exported raster
    labels, _ = rgl.read(rasters[1])
    assert set(np.unique(labels).tolist()) == {1, 2}
    assert np.all(labels[:, 3:4] == 1)

    from PIL import Image

    Image.fromarray(np.full((8, 8, 3), 128, np.uint8), "RGB").save(tmp_path / "img.png")

    out_labels = tmp_path / "labels.png"
    proc = run_engine(
        "segment", "--checkpoint", ck, "--image", tmp_path / "img.png",
        "--masks", rasters[0], rasters[1], "--theta", "2",
        "--text-embeddings", emb, "--text-model", "model-c",
        "--tile", "4", "--stride", "2", "--out-labels", out_labels,
    )
    assert proc.returncode == 0, proc.stderr
    assert out_labels.exists()
    sidecar = json.loads((tmp_path / "labels.png.json").read_text())
    assert sidecar["classes"] == ["pavement", "rooftop"]
    print("[acceptance] criterion 10b rasters + embeddings drive the engine: PASS", flush=True)


def test_exporter_cli_end_to_end(tmp_path):
    source, manifest_dict = build_source(seed=74)
    np.savez(tmp_path / "m.npz", **source)
    (tmp_path / "manifest.json").write_text(json.dumps(manifest_dict))
    assert exporter_main([
        "checkpoint", "--source", str(tmp_path / "m.npz"),
        "--manifest", str(tmp_path / "manifest.json"),
        "--out", str(tmp_path / "cli.ckpt1"),
    ]) == 0
    (tmp_path / "g.json").write_text(json.dumps(GRAMMAR))
    assert exporter_main([
        "text", "--model", "hash:8:4", "--model-id", "cli-model",
        "--grammar", str(tmp_path / "g.json"), "--out", str(tmp_path / "cli-emb.ckpt1"),
    ]) == 0
    np.savez(tmp_path / "s.npz", masks=np.ones((1, 4, 4), bool))
    from PIL import Image

    Image.fromarray(np.zeros((4, 4, 3), np.uint8), "RGB").save(tmp_path / "i.png")
    (tmp_path / "theta.json").write_text(json.dumps([{"cfg": 1}]))
    assert exporter_main([
        "sam", "--image", str(tmp_path / "i.png"),
        "--theta-config", str(tmp_path / "theta.json"),
        "--masks-npz", str(tmp_path / "s.npz"),
        "--out-dir", str(tmp_path / "rgl"),
    ]) == 0
    assert (tmp_path / "rgl" / "level_00.rgl").exists()
