import json

import numpy as np
import pytest

from reseg_exporter import rgl
from reseg_exporter.sam import MaskLevelError, NpzStackSource, export_hierarchy, rasterize


def test_single_full_mask_all_ones():
    labels = rasterize([np.ones((4, 5), bool)], (4, 5))
    assert np.all(labels == 1)


def test_uncovered_pixels_stay_background():
    mask = np.zeros((3, 3), bool)
    mask[0, 0] = True
    labels = rasterize([mask], (3, 3))
    assert labels[0, 0] == 1
    assert (labels == 0).sum() == 8


def test_overlap_lowest_index_wins_shared_fixture():
    # same overlap fixture the engine resolves: pixel (0,0) belongs to both
    m1 = np.array([[1, 1], [0, 0]], bool)
    m2 = np.array([[1, 0], [1, 0]], bool)
    labels = rasterize([m1, m2], (2, 2))
    assert labels.tolist() == [[1, 1], [2, 0]]


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        rasterize([np.ones((2, 3), bool)], (2, 2))


def test_export_hierarchy_writes_provenance(tmp_path):
    stacks = []
    for level, q in enumerate((1, 3)):
        masks = np.zeros((q, 6, 6), bool)
        for i in range(q):
            masks[i, i : i + 2, :] = True
        path = tmp_path / f"stack{level}.npz"
        np.savez(path, masks=masks)
        stacks.append(str(path))
    configs = [{"points_per_side": 4}, {"points_per_side": 16}]
    image = np.zeros((6, 6, 3), np.uint8)
    written = export_hierarchy(image, configs, NpzStackSource(stacks), tmp_path / "out")
    assert [p.name for p in written] == ["level_00.rgl", "level_01.rgl"]
    labels, provenance = rgl.read(written[1])
    assert labels.shape == (6, 6)
    assert json.loads(provenance) == configs[1]


def test_level_failure_names_level(tmp_path):
    good = tmp_path / "ok.npz"
    np.savez(good, masks=np.ones((1, 4, 4), bool))
    missing = tmp_path / "missing.npz"
    image = np.zeros((4, 4, 3), np.uint8)
    with pytest.raises(MaskLevelError, match="level 1"):
        export_hierarchy(
            image, [{}, {}], NpzStackSource([str(good), str(missing)]), tmp_path / "out"
        )
