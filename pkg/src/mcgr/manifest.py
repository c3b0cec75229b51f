"""Dataset manifests: class schemes, splits, regrouping, statistics, COCO export.

A manifest is the unit all pipeline stages exchange: a list of
(image path, size, annotations, split tag) entries plus the class scheme
and the seed used for any stochastic processing.  On disk it is
newline-delimited JSON: a header record followed by one record per image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .annotations import AnnotationRecord

BASE_CLASSES = ["vehicle", "tree", "airplane", "ship", "low-vegetation"]
SPLITS = ("train", "val", "test", "unassigned")


@dataclass(frozen=True)
class ClassScheme:
    name: str
    classes: tuple[str, ...]
    mapping: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.classes:
            raise ValueError("class scheme must have at least one class")
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.mapping:
            object.__setattr__(self, "mapping", {c: i for i, c in enumerate(self.classes)})
        if set(self.mapping.values()) != set(range(len(self.classes))):
            raise ValueError("mapping must be surjective onto contiguous indices")


def base_scheme() -> ClassScheme:
    return ClassScheme("five-class", tuple(BASE_CLASSES))


def subset_scheme(name: str, keep: list[str]) -> ClassScheme:
    unknown = [c for c in keep if c not in BASE_CLASSES]
    if unknown:
        raise ValueError(f"unknown base classes: {unknown}")
    return ClassScheme(name, tuple(keep), {c: i for i, c in enumerate(keep)})


# default class subsets; the 1-class set keeps the dominant vehicle class
DEFAULT_SCHEMES = {
    "five": base_scheme(),
    "four": subset_scheme("four-class", ["vehicle", "tree", "airplane", "ship"]),
    "two": subset_scheme("two-class", ["vehicle", "tree"]),
    "one": subset_scheme("one-class", ["vehicle"]),
}


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    image_size: tuple[int, int]  # (W, H)
    annotations: tuple[AnnotationRecord, ...]
    split: str = "unassigned"

    def __post_init__(self):
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError(f"non-positive image size {self.image_size}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split tag {self.split!r}")
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "image_size", (int(w), int(h)))


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    scheme: ClassScheme = field(default_factory=base_scheme)
    seed: int = 0

    def __post_init__(self):
        n = len(self.scheme.classes)
        for e in self.entries:
            for a in e.annotations:
                if a.class_id >= n:
                    raise ValueError(
                        f"{e.image_path}: class id {a.class_id} outside scheme "
                        f"({n} classes)"
                    )

    def split_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SPLITS}
        for e in self.entries:
            counts[e.split] += 1
        return counts

    def instance_count(self) -> int:
        return sum(len(e.annotations) for e in self.entries)


def split_dataset(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float] = (0.70, 0.20, 0.10),
    seed: int | None = None,
) -> DatasetManifest:
    """Assign train/val/test tags by a seeded shuffle.

    Apportionment: n_val = floor(r_val*N), n_test = round(r_test*N), train
    takes the remainder (this is the rule that yields 1232/351/176 from
    N = 1759 at 70:20:10).  The shuffle is over path-sorted entries, so
    the result is a function of the entry set and seed only.
    """
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")
    if any(e.split != "unassigned" for e in manifest.entries):
        raise ValueError("manifest already has split tags")
    n = len(manifest.entries)
    if n < 3:
        raise ValueError(f"need at least 3 entries to populate all splits, got {n}")
    if seed is None:
        seed = manifest.seed
    n_val = math.floor(ratios[1] * n)
    n_test = math.floor(ratios[2] * n + 0.5)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"ratios {ratios} leave an empty split for N={n}")
    order = sorted(range(n), key=lambda i: manifest.entries[i].image_path)
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [order[i] for i in perm]
    tags = {}
    for i in shuffled[:n_train]:
        tags[i] = "train"
    for i in shuffled[n_train : n_train + n_val]:
        tags[i] = "val"
    for i in shuffled[n_train + n_val :]:
        tags[i] = "test"
    entries = [replace(e, split=tags[i]) for i, e in enumerate(manifest.entries)]
    return DatasetManifest(entries, scheme=manifest.scheme, seed=seed)


def regroup_classes(manifest: DatasetManifest, scheme: ClassScheme) -> DatasetManifest:
    """Remap annotations into `scheme`; unmapped classes are dropped.

    Images left without annotations are retained as negative examples.
    """
    bad = [c for c in scheme.mapping if c not in manifest.scheme.classes]
    if bad:
        raise ValueError(f"mapping keys not in source scheme: {bad}")
    entries = []
    for e in manifest.entries:
        kept = []
        for a in e.annotations:
            name = manifest.scheme.classes[a.class_id]
            if name in scheme.mapping:
                kept.append(replace(a, class_id=scheme.mapping[name]))
        entries.append(replace(e, annotations=tuple(kept)))
    return DatasetManifest(entries, scheme=scheme, seed=manifest.seed)


@dataclass
class DatasetStats:
    class_counts: dict[str, list[int]]  # split -> per-class instance counts
    location_hist: np.ndarray  # (bins, bins) over (cy, cx) in [0,1]^2
    size_hist: np.ndarray  # (bins, bins) over (h, w) in [0,1]^2
    total_instances: int
    bins: int


def compute_statistics(manifest: DatasetManifest, bins: int = 9) -> DatasetStats:
    n_classes = len(manifest.scheme.classes)
    class_counts = {s: [0] * n_classes for s in SPLITS}
    cxs, cys, ws, hs = [], [], [], []
    for e in manifest.entries:
        for a in e.annotations:
            class_counts[e.split][a.class_id] += 1
            cxs.append(a.cx)
            cys.append(a.cy)
            ws.append(a.w)
            hs.append(a.h)
    edges = np.linspace(0.0, 1.0, bins + 1)
    loc, _, _ = np.histogram2d(cys, cxs, bins=[edges, edges])
    size, _, _ = np.histogram2d(hs, ws, bins=[edges, edges])
    return DatasetStats(
        class_counts=class_counts,
        location_hist=loc,
        size_hist=size,
        total_instances=len(cxs),
        bins=bins,
    )


# ---------------------------------------------------------------------------
# COCO export / import


def export_coco(manifest: DatasetManifest) -> dict:
    """Minimal COCO document: absolute [x, y, w, h] boxes, 1-based ids."""
    images = []
    annotations = []
    for img_id, e in enumerate(manifest.entries, start=1):
        w, h = e.image_size
        images.append({"id": img_id, "file_name": e.image_path, "width": w, "height": h})
        for a in e.annotations:
            bw = a.w * w
            bh = a.h * h
            annotations.append(
                {
                    "id": len(annotations) + 1,
                    "image_id": img_id,
                    "category_id": a.class_id + 1,
                    "bbox": [(a.cx - a.w / 2) * w, (a.cy - a.h / 2) * h, bw, bh],
                    "area": bw * bh,
                    "iscrowd": 0,
                }
            )
    categories = [
        {"id": i + 1, "name": name} for i, name in enumerate(manifest.scheme.classes)
    ]
    return {"images": images, "annotations": annotations, "categories": categories}


def import_coco(doc: dict, scheme: ClassScheme | None = None) -> DatasetManifest:
    if scheme is None:
        names = tuple(c["name"] for c in sorted(doc["categories"], key=lambda c: c["id"]))
        scheme = ClassScheme("imported", names)
    cat_to_idx = {c["id"]: i for i, c in enumerate(sorted(doc["categories"], key=lambda c: c["id"]))}
    by_image: dict[int, list[AnnotationRecord]] = {img["id"]: [] for img in doc["images"]}
    sizes = {img["id"]: (img["width"], img["height"]) for img in doc["images"]}
    for ann in doc["annotations"]:
        img_id = ann["image_id"]
        if img_id not in by_image:
            raise ValueError(f"annotation {ann['id']} references unknown image {img_id}")
        w, h = sizes[img_id]
        x, y, bw, bh = ann["bbox"]
        by_image[img_id].append(
            AnnotationRecord(
                cat_to_idx[ann["category_id"]],
                (x + bw / 2) / w,
                (y + bh / 2) / h,
                bw / w,
                bh / h,
            )
        )
    entries = [
        ManifestEntry(img["file_name"], (img["width"], img["height"]), tuple(by_image[img["id"]]))
        for img in doc["images"]
    ]
    return DatasetManifest(entries, scheme=scheme)


# ---------------------------------------------------------------------------
# NDJSON persistence


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "kind": "mcgr-manifest",
        "scheme": {
            "name": manifest.scheme.name,
            "classes": list(manifest.scheme.classes),
            "mapping": manifest.scheme.mapping,
        },
        "seed": manifest.seed,
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for e in manifest.entries:
            rec = {
                "image_path": e.image_path,
                "image_size": list(e.image_size),
                "split": e.split,
                "annotations": [[a.class_id, a.cx, a.cy, a.w, a.h] for a in e.annotations],
            }
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    with open(path, encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty manifest file")
    header = json.loads(lines[0])
    if header.get("kind") != "mcgr-manifest":
        raise ValueError(f"{path}: missing manifest header")
    scheme = ClassScheme(
        header["scheme"]["name"],
        tuple(header["scheme"]["classes"]),
        dict(header["scheme"]["mapping"]),
    )
    entries = []
    for line in lines[1:]:
        rec = json.loads(line)
        entries.append(
            ManifestEntry(
                rec["image_path"],
                tuple(rec["image_size"]),
                tuple(AnnotationRecord(int(a[0]), *a[1:]) for a in rec["annotations"]),
                rec["split"],
            )
        )
    return DatasetManifest(entries, scheme=scheme, seed=header.get("seed", 0))
