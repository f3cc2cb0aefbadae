import json

import numpy as np
import pytest
from PIL import Image

from reseg.checkpoint import save_checkpoint
from reseg.synth import synthetic_checkpoint
from reseg.rng import SplitMix64


def write_rgb_png(path, height, width, seed=0):
    stream = SplitMix64(seed)
    arr = np.empty((height, width, 3), np.uint8)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        flat[i] = stream.next_index(256)
    Image.fromarray(arr, "RGB").save(path)
    return arr


GRAMMAR = {
    "base_prompts": {
        "pavement": "an aerial image of pavement in the city",
        "rooftop": "an aerial image of rooftop in the city",
        "greenery": "an aerial image of greenery in the city",
    },
    "synonyms": {
        "pavement": ["pavement"],
        "rooftop": ["rooftop"],
        "greenery": ["greenery"],
    },
    "prefixes": ["an aerial image"],
    "suffixes": ["in the city"],
    "K": 2,
    "seed": 9,
}


@pytest.fixture
def workdir(tmp_path):
    """Checkpoint pair, an 8x8 image, and a grammar file on disk."""
    ck_a = synthetic_checkpoint(dim=8, layers=3, patch=2, heads=2, grid=2, seed=101)
    ck_b = synthetic_checkpoint(dim=8, layers=3, patch=2, heads=2, grid=2, seed=102)
    paths = {
        "ckpt_a": tmp_path / "a.ckpt1",
        "ckpt_b": tmp_path / "b.ckpt1",
        "image": tmp_path / "img.png",
        "grammar": tmp_path / "grammar.json",
    }
    save_checkpoint(paths["ckpt_a"], ck_a)
    save_checkpoint(paths["ckpt_b"], ck_b)
    write_rgb_png(paths["image"], 8, 8, seed=7)
    paths["grammar"].write_text(json.dumps(GRAMMAR))
    return tmp_path, paths
