"""Command-line entry point wiring dataset preparation, training,
inference, evaluation, and plot emission."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import plots
from .annotations import format_yolo_annotations
from .degrade import synthesize_lr
from .image import center_crop_to_multiple, load_png, save_png
from .manifest import (
    DEFAULT_SCHEMES,
    DatasetManifest,
    ManifestEntry,
    base_scheme,
    compute_statistics,
    export_coco,
    load_manifest,
    regroup_classes,
    save_manifest,
    split_dataset,
)
from .patches import extract_patches
from .toy import build_toy_corpus


def _data_root(override: str | None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get("MCGR_DATA_DIR", "."))


@click.group()
def main():
    """Super-resolution-assisted small-object detection toolkit."""


@main.command()
@click.argument("tiles_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--patch-size", default=1000, show_default=True)
@click.option("--overlap", default=100, show_default=True)
def prepare(tiles_dir, out, patch_size, overlap):
    """Extract overlapping patches from large tiles into a patch corpus."""
    if not 0 <= overlap < patch_size:
        raise click.UsageError(f"overlap must satisfy 0 <= overlap < patch_size")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    tiles = sorted(Path(tiles_dir).glob("*.png"))
    for tile_path in tiles:
        try:
            tile = load_png(tile_path)
        except Exception as exc:  # unreadable tile: report and continue
            click.echo(f"skipping unreadable tile {tile_path.name}: {exc}", err=True)
            continue
        for patch, name in extract_patches(tile, tile_path.stem, patch_size, overlap):
            save_png(patch, out_dir / f"{name}.png")
            entries.append(
                ManifestEntry(f"{name}.png", (patch.width, patch.height), ())
            )
    manifest = DatasetManifest(entries, scheme=base_scheme())
    save_manifest(manifest, out_dir / "manifest.ndjson")
    click.echo(f"wrote {len(entries)} patches to {out_dir}")


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--scale", type=click.Choice(["2", "4"]), required=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--data-root", default=None)
def degrade(manifest_path, scale, out, data_root):
    """Synthesize the bicubic LR counterpart of every manifest image."""
    scale = int(scale)
    manifest = load_manifest(manifest_path)
    root = _data_root(data_root)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for e in manifest.entries:
        img = load_png(root / e.image_path)
        img = center_crop_to_multiple(img, scale)
        lr = synthesize_lr(img, scale)
        name = Path(e.image_path).stem
        save_png(lr, out_dir / f"{name}_x{scale}.png")
    click.echo(f"wrote {len(manifest.entries)} LR images to {out_dir}")


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@click.option("--ratios", default="0.70,0.20,0.10", show_default=True)
def split(manifest_path, out, seed, ratios):
    """Assign 70:20:10 (or custom) train/val/test tags."""
    manifest = load_manifest(manifest_path)
    parts = tuple(float(r) for r in ratios.split(","))
    if len(parts) != 3:
        raise click.UsageError("--ratios needs three comma-separated values")
    tagged = split_dataset(manifest, parts, seed)
    save_manifest(tagged, out)
    counts = tagged.split_counts()
    click.echo(f"train={counts['train']} val={counts['val']} test={counts['test']}")


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@click.option("--scheme", "scheme_key", default=None,
              type=click.Choice(sorted(DEFAULT_SCHEMES)))
def stats(manifest_path, as_json, scheme_key):
    """Per-class instance counts and box location/size histograms."""
    manifest = load_manifest(manifest_path)
    if scheme_key:
        manifest = regroup_classes(manifest, DEFAULT_SCHEMES[scheme_key])
    st = compute_statistics(manifest)
    totals = [sum(st.class_counts[s][i] for s in st.class_counts)
              for i in range(len(manifest.scheme.classes))]
    if as_json:
        click.echo(json.dumps({
            "classes": dict(zip(manifest.scheme.classes, totals)),
            "total_instances": st.total_instances,
            "per_split": st.class_counts,
        }, sort_keys=True))
    else:
        for name, count in zip(manifest.scheme.classes, totals):
            click.echo(f"{name}\t{count}")
        click.echo(f"total\t{st.total_instances}")


@main.command("export-coco")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path())
def export_coco_cmd(manifest_path, out):
    """Write the manifest as a COCO-style JSON document."""
    manifest = load_manifest(manifest_path)
    doc = export_coco(manifest)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(json.dumps(doc, sort_keys=True, indent=1))
    click.echo(f"wrote {len(doc['annotations'])} annotations to {out}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def train(config_path):
    """Run MCGR training from a JSON run-config file."""
    from . import training

    doc = json.loads(Path(config_path).read_text())
    manifest_path = doc.pop("manifest")
    run_dir = doc.pop("run_dir")
    data_root = doc.pop("data_root", None)
    resume_from = doc.pop("resume_from", None)
    try:
        config = training.TrainConfig.from_dict(doc)
    except (ValueError, TypeError) as exc:
        raise click.UsageError(str(exc))
    manifest = load_manifest(manifest_path)
    root = _data_root(data_root)
    training.train(config, manifest, run_dir, data_root=root, resume_from=resume_from)
    click.echo(f"training complete; artifacts in {run_dir}")


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("images", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path())
@click.option("--conf-threshold", default=0.05, show_default=True)
@click.option("--nms-iou", default=0.45, show_default=True)
def infer(checkpoint, images, out, conf_threshold, nms_iou):
    """Run SR + detection on images; emits NDJSON detections."""
    from . import training as tr
    from .detection import build_anchor_grid, decode_predictions, nms as run_nms
    import torch

    if not images:
        raise click.UsageError("no input images")
    state, config = tr.load_state(checkpoint)
    config.conf_threshold = conf_threshold
    config.nms_iou = nms_iou
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for path in images:
            img = load_png(path)
            multiple = config.scale * max(config.detector.strides)
            hr = center_crop_to_multiple(img, multiple)
            lr = synthesize_lr(hr, config.scale)
            with torch.no_grad():
                sr = state.hr_gen(torch.from_numpy(lr.to_unit()).float()[None])[0]
                sr = sr.clamp(0, 1)
                grid = build_anchor_grid((hr.width, hr.height),
                                         config.detector.strides, state.anchors)
                raw = state.detector(sr[None])
            boxes = run_nms(decode_predictions(raw, grid, conf_threshold,
                                               config.detector.n_classes), nms_iou)
            for b in boxes:
                f.write(json.dumps({
                    "image": str(path),
                    "class_id": b.class_id,
                    "confidence": b.confidence,
                    "box": [b.x_min, b.y_min, b.x_max, b.y_max],
                }, sort_keys=True) + "\n")
    click.echo(f"detections written to {out}")


@main.command("eval")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="test", show_default=True)
@click.option("--iou", default=0.5, show_default=True)
@click.option("--scale", default=None, type=click.Choice(["2", "4"]))
@click.option("--out", required=True, type=click.Path())
@click.option("--data-root", default=None)
def eval_cmd(checkpoint, manifest_path, split, iou, scale, out, data_root):
    """Evaluate a checkpoint: IQA plus detection mAP report."""
    from . import training as tr

    state, config = tr.load_state(checkpoint)
    scale = int(scale) if scale else config.scale
    manifest = load_manifest(manifest_path)
    report = tr.evaluate(state, manifest, split, scale, iou_thresholds=(iou,),
                         conf_threshold=config.conf_threshold,
                         data_root=_data_root(data_root))
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    click.echo(f"report written to {out}")


@main.command()
@click.option("--manifest", "manifest_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--run-dir", default=None, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path())
def plot(manifest_path, report_path, run_dir, out):
    """Render PR curves, mAP history, and corpus histograms as PNGs."""
    if not any((manifest_path, report_path, run_dir)):
        raise click.UsageError("provide at least one of --manifest/--report/--run-dir")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if manifest_path:
        manifest = load_manifest(manifest_path)
        st = compute_statistics(manifest)
        plots.plot_class_frequencies(st, list(manifest.scheme.classes),
                                     out_dir / "class_frequencies.png")
        plots.plot_location_size(st, out_dir / "location_size.png")
        written += ["class_frequencies.png", "location_size.png"]
    if report_path:
        doc = json.loads(Path(report_path).read_text())
        curves = {
            k: [tuple(p) for p in v]
            for k, v in doc.get("meta", {}).get("pr_curves", {}).items()
        }
        plots.plot_pr_curves(curves or {"all": []}, out_dir / "pr_curves.png")
        written.append("pr_curves.png")
    if run_dir:
        epochs, maps = [], []
        for path in sorted(Path(run_dir).glob("metrics_epoch_*.json")):
            doc = json.loads(path.read_text())
            epochs.append(int(path.stem.rsplit("_", 1)[1]))
            m = doc["detection"]
            maps.append(m["map_sf2"] if m["map_sf2"] is not None else (m["map_sf4"] or 0.0))
        if epochs:
            plots.plot_map_history(epochs, maps, out_dir / "map_history.png")
            written.append("map_history.png")
    click.echo(f"wrote {', '.join(written)} to {out_dir}")


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--n-train", default=16, show_default=True)
@click.option("--n-val", default=4, show_default=True)
@click.option("--n-test", default=0, show_default=True)
@click.option("--image-size", default=160, show_default=True)
@click.option("--n-classes", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
def toy(out, n_train, n_val, n_test, image_size, n_classes, seed):
    """Generate the bundled synthetic toy corpus."""
    manifest = build_toy_corpus(out, n_train, n_val, n_test, image_size,
                                n_classes=n_classes, seed=seed)
    click.echo(f"toy corpus with {len(manifest.entries)} images at {out}")


if __name__ == "__main__":
    sys.exit(main())
