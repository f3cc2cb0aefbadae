import json

import numpy as np
import pytest


def build_source(dim=8, layers=2, patch=2, heads=2, grid=2, seed=17, torch_layout=True):
    """Synthetic framework-style state dict plus the manifest that maps it.

    torch_layout stores linear weights as out-features x in-features, so
    the manifest lists them for transposition.
    """
    rng = np.random.default_rng(seed)
    source: dict[str, np.ndarray] = {}
    mapping: dict[str, str] = {}
    transpose: list[str] = []

    def add(src, canon, shape, flip=False):
        source[src] = (rng.standard_normal(shape) * 0.2).astype(np.float32)
        mapping[src] = canon
        if flip:
            transpose.append(src)

    def mat(src, canon, rows, cols):
        if torch_layout:
            add(src, canon, (cols, rows), flip=True)
        else:
            add(src, canon, (rows, cols))

    hidden = dim * 4
    mat("visual.patch.weight", "patch_proj.weight", 3 * patch * patch, dim)
    add("visual.patch.bias", "patch_proj.bias", (dim,))
    add("visual.cls", "cls_token", (dim,))
    add("visual.pos", "pos_embed", (grid * grid + 1, dim))
    add("visual.ln_post.weight", "ln_final.gamma", (dim,))
    add("visual.ln_post.bias", "ln_final.beta", (dim,))
    for i in range(layers):
        src = f"visual.blocks.{i}."
        dst = f"blocks.{i}."
        add(src + "ln_1.weight", dst + "ln1.gamma", (dim,))
        add(src + "ln_1.bias", dst + "ln1.beta", (dim,))
        add(src + "ln_2.weight", dst + "ln2.gamma", (dim,))
        add(src + "ln_2.bias", dst + "ln2.beta", (dim,))
        for part in ("q", "k", "v", "out"):
            mat(src + f"attn.{part}.weight", dst + f"attn.{part}.weight", dim, dim)
            add(src + f"attn.{part}.bias", dst + f"attn.{part}.bias", (dim,))
        mat(src + "mlp.fc1.weight", dst + "mlp.fc1.weight", dim, hidden)
        add(src + "mlp.fc1.bias", dst + "mlp.fc1.bias", (hidden,))
        mat(src + "mlp.fc2.weight", dst + "mlp.fc2.weight", hidden, dim)
        add(src + "mlp.fc2.bias", dst + "mlp.fc2.bias", (dim,))

    manifest = {
        "model_id": f"converted-{seed}",
        "mapping": mapping,
        "transpose": transpose,
        "meta": {
            "dim": dim,
            "layers": layers,
            "patch": patch,
            "heads": heads,
            "mlp_ratio": 4.0,
            "preprocess": {"mean": [0.0, 0.0, 0.0], "std": [1.0, 1.0, 1.0]},
        },
    }
    return source, manifest


@pytest.fixture
def source_and_manifest(tmp_path):
    source, manifest = build_source()
    src_path = tmp_path / "model.npz"
    np.savez(src_path, **source)
    man_path = tmp_path / "manifest.json"
    man_path.write_text(json.dumps(manifest))
    return source, manifest, src_path, man_path
