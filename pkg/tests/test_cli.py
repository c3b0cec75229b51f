import json

import numpy as np
import pytest
from click.testing import CliRunner

from mcgr.cli import main
from mcgr.image import ImageArray, save_png


@pytest.fixture
def runner():
    return CliRunner()


def make_tiles(dir_path, n=2, size=48):
    dir_path.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    for i in range(n):
        save_png(ImageArray(rng.uniform(0, 255, (3, size, size))),
                 dir_path / f"tile_{i}.png")


# ------------------------------------------------------------------ prepare


def test_prepare_empty_dir(runner, tmp_path):
    (tmp_path / "tiles").mkdir()
    res = runner.invoke(main, ["prepare", str(tmp_path / "tiles"),
                               "--out", str(tmp_path / "patches")])
    assert res.exit_code == 0, res.output
    assert "wrote 0 patches" in res.output
    assert (tmp_path / "patches" / "manifest.ndjson").exists()


def test_prepare_bad_overlap(runner, tmp_path):
    (tmp_path / "tiles").mkdir()
    res = runner.invoke(main, ["prepare", str(tmp_path / "tiles"),
                               "--out", str(tmp_path / "p"),
                               "--patch-size", "16", "--overlap", "16"])
    assert res.exit_code != 0


def test_prepare_patch_counts(runner, tmp_path):
    make_tiles(tmp_path / "tiles", n=2, size=48)
    res = runner.invoke(main, ["prepare", str(tmp_path / "tiles"),
                               "--out", str(tmp_path / "patches"),
                               "--patch-size", "16", "--overlap", "0"])
    assert res.exit_code == 0, res.output
    # 48/16 = 3 per axis -> 9 patches per tile, 2 tiles
    assert "wrote 18 patches" in res.output
    assert len(list((tmp_path / "patches").glob("tile_*.png"))) == 18


def test_prepare_skips_unreadable_tile(runner, tmp_path):
    make_tiles(tmp_path / "tiles", n=1, size=32)
    (tmp_path / "tiles" / "broken.png").write_bytes(b"not a png")
    res = runner.invoke(main, ["prepare", str(tmp_path / "tiles"),
                               "--out", str(tmp_path / "patches"),
                               "--patch-size", "16", "--overlap", "0"])
    assert res.exit_code == 0, res.output
    assert "broken.png" in res.output
    assert "wrote 4 patches" in res.output


# -------------------------------------------------------- degrade and split


@pytest.fixture
def toy_dir(runner, tmp_path):
    out = tmp_path / "toy"
    res = runner.invoke(main, ["toy", "--out", str(out), "--n-train", "4",
                               "--n-val", "2", "--image-size", "64"])
    assert res.exit_code == 0, res.output
    return out


def test_degrade_deterministic(runner, toy_dir, tmp_path):
    args = ["degrade", str(toy_dir / "manifest.ndjson"), "--scale", "2",
            "--data-root", str(toy_dir)]
    res = runner.invoke(main, args + ["--out", str(tmp_path / "lr1")])
    assert res.exit_code == 0, res.output
    res = runner.invoke(main, args + ["--out", str(tmp_path / "lr2")])
    assert res.exit_code == 0, res.output
    names = sorted(p.name for p in (tmp_path / "lr1").glob("*.png"))
    assert len(names) == 6 and all(n.endswith("_x2.png") for n in names)
    for n in names:
        assert (tmp_path / "lr1" / n).read_bytes() == (tmp_path / "lr2" / n).read_bytes()


def test_split_deterministic(runner, tmp_path):
    make_tiles(tmp_path / "tiles", n=2, size=48)
    runner.invoke(main, ["prepare", str(tmp_path / "tiles"),
                         "--out", str(tmp_path / "patches"),
                         "--patch-size", "16", "--overlap", "0"])
    man = str(tmp_path / "patches" / "manifest.ndjson")
    outs = []
    for name in ("s1.ndjson", "s2.ndjson"):
        res = runner.invoke(main, ["split", man, "--out", str(tmp_path / name),
                                   "--seed", "7"])
        assert res.exit_code == 0, res.output
        assert "train=13 val=3 test=2" in res.output  # floor(3.6), round(1.8), rest
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_split_bad_ratios(runner, toy_dir, tmp_path):
    res = runner.invoke(main, ["split", str(toy_dir / "manifest.ndjson"),
                               "--out", str(tmp_path / "x.ndjson"),
                               "--ratios", "0.5,0.5"])
    assert res.exit_code != 0


# ------------------------------------------------------------ stats / coco


def test_stats_totals(runner, toy_dir):
    res = runner.invoke(main, ["stats", str(toy_dir / "manifest.ndjson"), "--json"])
    assert res.exit_code == 0, res.output
    doc = json.loads(res.output)
    # 6 images x 2 objects
    assert doc["total_instances"] == 12
    assert sum(doc["classes"].values()) == 12


def test_stats_scheme_regrouping(runner, toy_dir):
    res = runner.invoke(main, ["stats", str(toy_dir / "manifest.ndjson"),
                               "--json", "--scheme", "one"])
    assert res.exit_code == 0, res.output
    doc = json.loads(res.output)
    assert list(doc["classes"]) == ["vehicle"]


def test_export_coco(runner, toy_dir, tmp_path):
    out = tmp_path / "coco.json"
    res = runner.invoke(main, ["export-coco", str(toy_dir / "manifest.ndjson"),
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    doc = json.loads(out.read_text())
    assert len(doc["images"]) == 6
    assert len(doc["annotations"]) == 12
    assert len(doc["categories"]) == 5


# --------------------------------------------------- train / infer / eval


def run_config(toy_dir, run_dir):
    return {
        "manifest": str(toy_dir / "manifest.ndjson"),
        "run_dir": str(run_dir),
        "data_root": str(toy_dir),
        "epochs": 1,
        "batch_size": 2,
        "crop_size": 16,
        "scale": 2,
        "eval_every": 1,
        "checkpoint_every": 1,
        "generator": {"n_rfa_blocks": 1, "width": 8, "kernel": 3, "scale": 2,
                      "units_per_block": 1},
        "detector": {"n_classes": 5, "strides": [8], "anchors_per_level": 2,
                     "base_width": 4},
    }


def test_train_rejects_unknown_config_key(runner, toy_dir, tmp_path):
    doc = run_config(toy_dir, tmp_path / "run")
    doc["bogus_knob"] = 1
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(doc))
    res = runner.invoke(main, ["train", "--config", str(cfg_path)])
    assert res.exit_code != 0
    assert "bogus_knob" in res.output


def test_train_infer_eval_plot_smoke(runner, toy_dir, tmp_path):
    run_dir = tmp_path / "run"
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(run_config(toy_dir, run_dir)))
    res = runner.invoke(main, ["train", "--config", str(cfg_path)])
    assert res.exit_code == 0, res.output
    ckpt = run_dir / "checkpoint_final.ckpt"
    assert ckpt.exists()

    det_out = tmp_path / "detections.ndjson"
    res = runner.invoke(main, ["infer", str(ckpt), str(toy_dir / "toy_0000.png"),
                               "--out", str(det_out), "--conf-threshold", "0.01"])
    assert res.exit_code == 0, res.output
    for line in det_out.read_text().splitlines():
        rec = json.loads(line)
        assert set(rec) == {"image", "class_id", "confidence", "box"}

    rep_out = tmp_path / "report.json"
    res = runner.invoke(main, ["eval", str(ckpt), str(toy_dir / "manifest.ndjson"),
                               "--split", "val", "--out", str(rep_out),
                               "--data-root", str(toy_dir)])
    assert res.exit_code == 0, res.output
    doc = json.loads(rep_out.read_text())
    assert doc["meta"]["split"] == "val" and doc["meta"]["n_images"] == 2

    plots_out = tmp_path / "plots"
    res = runner.invoke(main, ["plot", "--manifest", str(toy_dir / "manifest.ndjson"),
                               "--report", str(rep_out), "--run-dir", str(run_dir),
                               "--out", str(plots_out)])
    assert res.exit_code == 0, res.output
    for name in ("class_frequencies.png", "location_size.png", "pr_curves.png",
                 "map_history.png"):
        assert (plots_out / name).exists(), name


def test_plot_requires_a_source(runner, tmp_path):
    res = runner.invoke(main, ["plot", "--out", str(tmp_path / "p")])
    assert res.exit_code != 0


def test_infer_without_images(runner, toy_dir, tmp_path):
    res = runner.invoke(main, ["infer", "--out", str(tmp_path / "d.ndjson")])
    assert res.exit_code != 0
