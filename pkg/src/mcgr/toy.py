"""Procedural toy corpus: colored shapes on textured backgrounds with
known boxes.  Lets every pipeline stage and acceptance check run without
downloading any real imagery."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .annotations import AnnotationRecord, format_yolo_annotations
from .image import ImageArray, save_png
from .manifest import DatasetManifest, ManifestEntry, base_scheme, save_manifest

_SHAPE_COLORS = np.array(
    [
        [230, 40, 40],    # class 0
        [40, 200, 60],    # class 1
        [60, 80, 230],    # class 2
        [235, 220, 50],   # class 3
        [200, 60, 220],   # class 4
    ],
    dtype=np.float64,
)


def _textured_background(rng: np.random.Generator, size: int) -> np.ndarray:
    # sharp-edged mosaic of 4-px blocks: plenty of learnable high-frequency
    # structure that plain interpolation cannot restore after downsampling
    coarse = rng.uniform(30, 220, size=(3, size // 4 + 1, size // 4 + 1))
    up = np.repeat(np.repeat(coarse, 4, axis=1), 4, axis=2)[:, :size, :size]
    return np.clip(up, 0, 255)


def _draw_object(img: np.ndarray, rng: np.random.Generator, class_id: int,
                 size: int) -> AnnotationRecord:
    obj = int(rng.integers(max(14, size // 8), max(20, size // 4)))
    x0 = int(rng.integers(0, size - obj))
    y0 = int(rng.integers(0, size - obj))
    color = _SHAPE_COLORS[class_id][:, None, None]
    yy, xx = np.mgrid[0:obj, 0:obj]
    if class_id % 2 == 0:
        mask = np.ones((obj, obj), dtype=bool)
    else:
        c = (obj - 1) / 2
        mask = ((yy - c) ** 2 + (xx - c) ** 2) <= c * c
    region = img[:, y0 : y0 + obj, x0 : x0 + obj]
    region[:, mask] = np.broadcast_to(color, region.shape)[:, mask]
    return AnnotationRecord(
        class_id,
        (x0 + obj / 2) / size,
        (y0 + obj / 2) / size,
        obj / size,
        obj / size,
    )


def make_toy_image(seed: int, size: int = 160, n_objects: int = 2,
                   n_classes: int = 5) -> tuple[ImageArray, list[AnnotationRecord]]:
    rng = np.random.default_rng(seed)
    img = _textured_background(rng, size)
    records = []
    for _ in range(n_objects):
        class_id = int(rng.integers(0, n_classes))
        records.append(_draw_object(img, rng, class_id, size))
    return ImageArray(img), records


def build_toy_corpus(out_dir: str | Path, n_train: int = 16, n_val: int = 4,
                     n_test: int = 0, image_size: int = 160, n_objects: int = 2,
                     n_classes: int = 5, seed: int = 0) -> DatasetManifest:
    """Write PNGs + YOLO sidecars + a split-tagged manifest under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    splits = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test
    for i, split in enumerate(splits):
        img, records = make_toy_image(seed * 100003 + i, image_size, n_objects, n_classes)
        name = f"toy_{i:04d}"
        save_png(img, out_dir / f"{name}.png")
        (out_dir / f"{name}.txt").write_text(format_yolo_annotations(records))
        entries.append(
            ManifestEntry(f"{name}.png", (image_size, image_size), tuple(records), split)
        )
    manifest = DatasetManifest(entries, scheme=base_scheme(), seed=seed)
    save_manifest(manifest, out_dir / "manifest.ndjson")
    return manifest
