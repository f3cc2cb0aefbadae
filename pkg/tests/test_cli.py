import json

import numpy as np
import pytest

from reseg.checkpoint import load_checkpoint, save_checkpoint
from reseg.cli import main
from reseg.formats import read_container, read_label_png, read_rgl
from reseg.synth import synthetic_checkpoint
from reseg.text import write_embedding_sets


def run(*argv):
    return main([str(a) for a in argv])


class TestMerge:
    def test_explicit_weights_and_rerun_identical(self, workdir):
        tmp, p = workdir
        out1, out2 = tmp / "f1.ckpt1", tmp / "f2.ckpt1"
        assert run("merge", p["ckpt_a"], p["ckpt_b"], "--weights", "0.37,0.63", "--out", out1) == 0
        assert run("merge", p["ckpt_a"], p["ckpt_b"], "--weights", "0.37,0.63", "--out", out2) == 0
        assert out1.read_bytes() == out2.read_bytes()
        fused = load_checkpoint(out1)
        assert fused.meta["weights"] == [0.37, 0.63]
        assert "config_hash" in fused.meta

    def test_single_checkpoint_weight_one(self, workdir):
        tmp, p = workdir
        out = tmp / "same.ckpt1"
        assert run("merge", p["ckpt_a"], "--weights", "1.0", "--out", out) == 0
        src = load_checkpoint(p["ckpt_a"])
        fused = load_checkpoint(out)
        for name in src.tensors:
            assert np.array_equal(fused.tensors[name], src.tensors[name])

    def test_shape_mismatch_names_tensor(self, workdir, capsys):
        tmp, p = workdir
        bad = synthetic_checkpoint(dim=8, layers=3, patch=2, heads=2, grid=2, seed=103)
        bad.tensors["cls_token"] = np.zeros(5, np.float32)
        save_checkpoint(tmp / "bad.ckpt1", bad)
        rc = run("merge", p["ckpt_a"], tmp / "bad.ckpt1", "--weights", "0.5,0.5", "--out", tmp / "x.ckpt1")
        assert rc == 2
        assert "cls_token" in capsys.readouterr().err


class TestPvsmReport:
    def test_identical_toy_models_split_evenly(self, workdir, capsys):
        tmp, p = workdir
        out = tmp / "report.json"
        rc = run(
            "pvsm-report", "--grammar", p["grammar"], "--toy-encoder",
            "--toy-dim", 64, "--models", "m1,m2", "--out", out,
        )
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["weights"]["m1"] == pytest.approx(0.5, abs=1e-9)
        assert report["weights"]["m2"] == pytest.approx(0.5, abs=1e-9)

    def test_single_model_gets_weight_one(self, workdir):
        tmp, p = workdir
        out = tmp / "solo.json"
        assert run(
            "pvsm-report", "--grammar", p["grammar"], "--toy-encoder",
            "--models", "only", "--out", out,
        ) == 0
        assert json.loads(out.read_text())["weights"]["only"] == pytest.approx(1.0)

    def test_synthetic_embedding_files_weights(self, workdir):
        # model "unit" scores margin 1 (orthonormal classes); model "scaled"
        # scores 3 (same geometry, rows scaled by sqrt(3)); weights 0.25/0.75
        tmp, p = workdir
        def basis(i, scale=1.0):
            v = np.zeros((2, 8), np.float32)
            v[:, i] = scale
            return v

        sets = {
            "unit": {"c0": basis(0), "c1": basis(1)},
            "scaled": {"c0": basis(2, np.sqrt(3)), "c1": basis(3, np.sqrt(3))},
        }
        emb = tmp / "emb.ckpt1"
        write_embedding_sets(emb, sets, {})
        out = tmp / "report.json"
        assert run("pvsm-report", "--embeddings", emb, "--models", "unit,scaled", "--out", out) == 0
        report = json.loads(out.read_text())
        assert report["scores"]["unit"] == pytest.approx(1.0, abs=1e-6)
        assert report["scores"]["scaled"] == pytest.approx(3.0, abs=1e-5)
        assert report["weights"]["unit"] == pytest.approx(0.25, abs=1e-6)
        assert report["weights"]["scaled"] == pytest.approx(0.75, abs=1e-6)

    def test_non_positive_margin_flagged_exit_3(self, workdir):
        tmp, p = workdir
        anti = np.stack([np.eye(8, dtype=np.float32)[0], -np.eye(8, dtype=np.float32)[0]])
        anti2 = np.stack([np.eye(8, dtype=np.float32)[1], -np.eye(8, dtype=np.float32)[1]])
        emb = tmp / "bad.ckpt1"
        write_embedding_sets(emb, {"bad": {"c0": anti, "c1": anti2}}, {})
        out = tmp / "bad.json"
        rc = run("pvsm-report", "--embeddings", emb, "--out", out)
        assert rc == 3
        report = json.loads(out.read_text())
        assert report["weights"] is None
        assert report["non_positive"] == ["bad"]

    def test_report_feeds_merge(self, workdir):
        tmp, p = workdir
        # models named after the checkpoints' ids so merge can match them
        ids = [load_checkpoint(p["ckpt_a"]).model_id, load_checkpoint(p["ckpt_b"]).model_id]
        def basis(i, scale=1.0):
            v = np.zeros((2, 8), np.float32)
            v[:, i] = scale
            return v
        sets = {
            ids[0]: {"c0": basis(0), "c1": basis(1)},
            ids[1]: {"c0": basis(2, np.sqrt(3)), "c1": basis(3, np.sqrt(3))},
        }
        emb = tmp / "models.ckpt1"
        write_embedding_sets(emb, sets, {})
        report = tmp / "r.json"
        assert run("pvsm-report", "--embeddings", emb, "--out", report) == 0
        out = tmp / "fused.ckpt1"
        assert run("merge", p["ckpt_a"], p["ckpt_b"], "--pvsm-report", report, "--out", out) == 0
        fused = load_checkpoint(out)
        assert fused.meta["weights"][0] == pytest.approx(0.25, abs=1e-6)
        assert "pvsm" in fused.meta


class TestGenMasks:
    def test_deterministic_and_ordered(self, workdir):
        tmp, p = workdir
        d1, d2 = tmp / "m1", tmp / "m2"
        for d in (d1, d2):
            assert run("gen-masks", "--height", 8, "--width", 8, "--counts", "1,3,6",
                       "--seed", 5, "--out-dir", d) == 0
        for name in ("level_00.rgl", "level_01.rgl", "level_02.rgl"):
            assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
        first = read_rgl(d1 / "level_00.rgl")
        assert np.all(first.labels == 1)
        assert "voronoi" in first.provenance

    def test_non_increasing_counts_rejected(self, workdir):
        tmp, p = workdir
        assert run("gen-masks", "--height", 4, "--width", 4, "--counts", "3,3",
                   "--seed", 1, "--out-dir", tmp / "x") == 2

    def test_missing_input_is_structured_error(self, workdir, capsys):
        tmp, p = workdir
        rc = run("merge", tmp / "does-not-exist.ckpt1", "--weights", "1.0",
                 "--out", tmp / "o.ckpt1")
        assert rc == 2
        assert "does-not-exist" in capsys.readouterr().err


class TestSegment:
    def _segment(self, tmp, p, out, theta=0, masks=(), extra=()):
        argv = [
            "segment", "--checkpoint", p["ckpt_a"], "--image", p["image"],
            "--grammar", p["grammar"], "--toy-encoder",
            "--tile", 4, "--stride", 2, "--theta", theta,
            "--out-labels", out,
        ]
        if masks:
            argv += ["--masks", *masks]
        argv += list(extra)
        return run(*argv)

    def test_theta_zero_plain_pipeline(self, workdir):
        tmp, p = workdir
        out = tmp / "labels.png"
        assert self._segment(tmp, p, out) == 0
        labels = read_label_png(out)
        assert labels.shape == (8, 8)
        assert labels.max() <= 2
        sidecar = json.loads((tmp / "labels.png.json").read_text())
        assert sidecar["theta"] == 0
        assert sidecar["classes"] == ["pavement", "rooftop", "greenery"]

    def test_theta_masks_roundtrip_and_scores(self, workdir):
        tmp, p = workdir
        mask_dir = tmp / "masks"
        assert run("gen-masks", "--height", 8, "--width", 8, "--counts", "2,5",
                   "--seed", 3, "--out-dir", mask_dir) == 0
        out = tmp / "masked.png"
        rc = self._segment(
            tmp, p, out, theta=2,
            masks=(mask_dir / "level_00.rgl", mask_dir / "level_01.rgl"),
            extra=("--out-scores", tmp / "scores.ckpt1"),
        )
        assert rc == 0
        tensors, meta = read_container(tmp / "scores.ckpt1")
        assert tensors["scores"].shape == (8, 8, 3)
        assert meta["kind"] == "scores"

    def test_missing_hierarchy_level_is_config_error(self, workdir, capsys):
        tmp, p = workdir
        mask_dir = tmp / "masks"
        run("gen-masks", "--height", 8, "--width", 8, "--counts", "2,5",
            "--seed", 3, "--out-dir", mask_dir)
        rc = self._segment(tmp, p, tmp / "x.png", theta=2, masks=(mask_dir / "level_00.rgl",))
        assert rc == 2
        assert "exactly 2" in capsys.readouterr().err

    def test_rerun_byte_identical(self, workdir):
        tmp, p = workdir
        out1, out2 = tmp / "r1.png", tmp / "r2.png"
        assert self._segment(tmp, p, out1) == 0
        assert self._segment(tmp, p, out2) == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert (tmp / "r1.png.json").read_text() == (tmp / "r2.png.json").read_text()

    def test_thread_count_does_not_change_outputs(self, workdir):
        tmp, p = workdir
        out1, out4 = tmp / "t1.png", tmp / "t4.png"
        assert self._segment(tmp, p, out1, extra=("--threads", 1)) == 0
        assert self._segment(tmp, p, out4, extra=("--threads", 4)) == 0
        assert out1.read_bytes() == out4.read_bytes()
        assert (tmp / "t1.png.json").read_text() == (tmp / "t4.png.json").read_text()


class TestEvalAndSweep:
    def test_eval_hand_case(self, workdir):
        tmp, p = workdir
        from reseg.formats import write_label_png

        write_label_png(tmp / "gt.png", np.array([[0, 1]], np.uint16))
        write_label_png(tmp / "pred.png", np.array([[1, 1]], np.uint16))
        out = tmp / "metrics.json"
        assert run("eval", "--gt", tmp / "gt.png", "--pred", tmp / "pred.png",
                   "--classes", 2, "--out", out) == 0
        report = json.loads(out.read_text())
        assert report["per_class_iou"] == [0.0, 0.5]
        assert report["miou"] == 0.25
        assert report["pixel_counts"]["total"] == 2

    def test_sweep_emits_grid(self, workdir):
        tmp, p = workdir
        mask_dir = tmp / "pool"
        assert run("gen-masks", "--height", 8, "--width", 8, "--counts", "2,4,6",
                   "--seed", 11, "--out-dir", mask_dir) == 0
        from reseg.formats import write_label_png

        gt = (np.arange(64).reshape(8, 8) % 3).astype(np.uint16)
        write_label_png(tmp / "gt.png", gt)
        out = tmp / "sweep.json"
        rc = run(
            "sweep-theta", "--checkpoint", p["ckpt_a"], "--image", p["image"],
            "--masks", mask_dir / "level_00.rgl", mask_dir / "level_01.rgl", mask_dir / "level_02.rgl",
            "--gt", tmp / "gt.png", "--grammar", p["grammar"], "--toy-encoder",
            "--grid", "0,1,3", "--tile", 4, "--stride", 2, "--out", out,
        )
        assert rc == 0
        report = json.loads(out.read_text())
        assert report["grid"] == [0, 1, 3]
        assert [e["theta"] for e in report["entries"]] == [0, 1, 3]
        for e in report["entries"]:
            assert 0.0 <= e["miou"] <= 1.0

    def test_sweep_theta_beyond_depth_rejected(self, workdir, capsys):
        tmp, p = workdir
        from reseg.formats import write_label_png

        write_label_png(tmp / "gt.png", np.zeros((8, 8), np.uint16))
        rc = run(
            "sweep-theta", "--checkpoint", p["ckpt_a"], "--image", p["image"],
            "--gt", tmp / "gt.png", "--grammar", p["grammar"], "--toy-encoder",
            "--grid", "0,9", "--tile", 4, "--stride", 4, "--out", tmp / "s.json",
        )
        assert rc == 2
