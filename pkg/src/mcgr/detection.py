"""Anchor grids, target assignment, prediction decoding, and NMS.

Raw detector grids carry, per anchor, (tx, ty, tw, th, objectness,
class logits).  Decoding is the usual logistic scheme: box center
(cell + sigmoid(t)) * stride, box size anchor * exp(t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .annotations import AnnotationRecord


@dataclass(frozen=True)
class DetectionBox:
    class_id: int
    confidence: float
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )
        if not math.isfinite(self.confidence):
            raise ValueError("non-finite confidence")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class AnchorLevel:
    stride: int
    anchors: tuple[tuple[float, float], ...]  # (w, h) in pixels
    rows: int
    cols: int


@dataclass(frozen=True)
class AnchorGrid:
    img_size: tuple[int, int]  # (W, H)
    levels: tuple[AnchorLevel, ...]


def build_anchor_grid(
    img_size: tuple[int, int],
    strides: tuple[int, ...],
    anchors_per_level: list[list[tuple[float, float]]],
) -> AnchorGrid:
    w, h = img_size
    if len(strides) != len(anchors_per_level):
        raise ValueError("one anchor list per stride level required")
    levels = []
    for stride, anchors in zip(strides, anchors_per_level):
        if w % stride or h % stride:
            raise ValueError(f"stride {stride} does not divide image size {w}x{h}")
        if any(aw <= 0 or ah <= 0 for aw, ah in anchors):
            raise ValueError(f"non-positive anchor in {anchors}")
        levels.append(
            AnchorLevel(stride, tuple((float(aw), float(ah)) for aw, ah in anchors),
                        rows=h // stride, cols=w // stride)
        )
    return AnchorGrid((w, h), tuple(levels))


def default_anchors(strides: tuple[int, ...], anchors_per_level: int = 3
                    ) -> list[list[tuple[float, float]]]:
    """Geometric fallback when no k-means sizes are available."""
    out = []
    for stride in strides:
        base = float(stride * 2)
        out.append([(base * 2 ** (i / 2), base * 2 ** (i / 2)) for i in range(anchors_per_level)])
    return out


def kmeans_anchors(manifest_boxes: list[tuple[float, float]], img_size: int,
                   strides: tuple[int, ...], per_level: int = 3, seed: int = 0,
                   iters: int = 50) -> list[list[tuple[float, float]]]:
    """Lloyd's k-means over training-set (w, h) in pixels; clusters are
    sorted by area and split evenly across levels (small to large)."""
    k = per_level * len(strides)
    if len(manifest_boxes) < k:
        return default_anchors(strides, per_level)
    pts = np.array([(w * img_size, h * img_size) for w, h in manifest_boxes], dtype=np.float64)
    rng = np.random.default_rng(seed)
    centers = pts[rng.choice(len(pts), size=k, replace=False)]
    for _ in range(iters):
        d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            mask = labels == j
            if mask.any():
                new_centers[j] = pts[mask].mean(axis=0)
        if np.allclose(new_centers, centers):
            break
        centers = new_centers
    order = np.argsort(centers[:, 0] * centers[:, 1])
    centers = centers[order]
    return [
        [tuple(centers[lvl * per_level + i]) for i in range(per_level)]
        for lvl in range(len(strides))
    ]


def _wh_iou(w1: float, h1: float, w2: float, h2: float) -> float:
    inter = min(w1, w2) * min(h1, h2)
    return inter / (w1 * h1 + w2 * h2 - inter)


@dataclass(frozen=True)
class Assignment:
    level: int
    row: int
    col: int
    anchor: int
    target: tuple[float, float, float, float]  # (cx, cy, w, h) normalized
    class_id: int
    gt_index: int


def assign_targets(gt: list[AnnotationRecord], grid: AnchorGrid) -> list[Assignment]:
    """Per level: the cell containing the GT center, best wh-IoU anchor;
    a contested (cell, anchor) slot keeps the larger-area GT."""
    img_w, img_h = grid.img_size
    chosen: dict[tuple[int, int, int, int], Assignment] = {}
    for gi, rec in enumerate(gt):
        for li, level in enumerate(grid.levels):
            col = min(int(rec.cx * level.cols), level.cols - 1)
            row = min(int(rec.cy * level.rows), level.rows - 1)
            gw, gh = rec.w * img_w, rec.h * img_h
            ious = [_wh_iou(gw, gh, aw, ah) for aw, ah in level.anchors]
            ai = int(np.argmax(ious))  # argmax takes the lowest index on ties
            key = (li, row, col, ai)
            cand = Assignment(li, row, col, ai, (rec.cx, rec.cy, rec.w, rec.h),
                              rec.class_id, gi)
            prev = chosen.get(key)
            if prev is None or rec.w * rec.h > prev.target[2] * prev.target[3]:
                chosen[key] = cand
    return [chosen[k] for k in sorted(chosen)]


def _check_geometry(raw_grids: list[torch.Tensor], grid: AnchorGrid, n_classes: int) -> None:
    if len(raw_grids) != len(grid.levels):
        raise ValueError(f"{len(raw_grids)} raw grids for {len(grid.levels)} levels")
    for raw, level in zip(raw_grids, grid.levels):
        want_c = len(level.anchors) * (5 + n_classes)
        if raw.shape[-3] != want_c or raw.shape[-2] != level.rows or raw.shape[-1] != level.cols:
            raise ValueError(
                f"raw grid {tuple(raw.shape[-3:])} does not match level "
                f"({want_c}, {level.rows}, {level.cols})"
            )


def gather_box_predictions(
    raw_grids: list[torch.Tensor],
    assignments: list[Assignment],
    grid: AnchorGrid,
    n_classes: int,
) -> torch.Tensor:
    """Differentiable (N, 4) normalized (cx, cy, w, h) predictions at the
    assigned slots; feeds the box regression loss."""
    _check_geometry([g[0] if g.ndim == 4 else g for g in raw_grids], grid, n_classes)
    img_w, img_h = grid.img_size
    preds = []
    for a in assignments:
        raw = raw_grids[a.level]
        if raw.ndim == 4:
            raw = raw[0]
        level = grid.levels[a.level]
        per = 5 + n_classes
        vec = raw[a.anchor * per : a.anchor * per + 4, a.row, a.col]
        aw, ah = level.anchors[a.anchor]
        cx = (a.col + torch.sigmoid(vec[0])) * level.stride / img_w
        cy = (a.row + torch.sigmoid(vec[1])) * level.stride / img_h
        bw = aw * torch.exp(vec[2]) / img_w
        bh = ah * torch.exp(vec[3]) / img_h
        preds.append(torch.stack([cx, cy, bw, bh]))
    if not preds:
        return torch.zeros((0, 4))
    return torch.stack(preds)


def objectness_class_losses(
    raw_grids: list[torch.Tensor],
    assignments: list[Assignment],
    grid: AnchorGrid,
    n_classes: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Binary cross-entropy objectness over every slot (positives at the
    assigned ones) and per-class BCE at the positives."""
    grids = [g[0] if g.ndim == 4 else g for g in raw_grids]
    _check_geometry(grids, grid, n_classes)
    per = 5 + n_classes
    obj_terms = []
    cls_logits = []
    cls_targets = []
    by_level: dict[int, list[Assignment]] = {}
    for a in assignments:
        by_level.setdefault(a.level, []).append(a)
    for li, (raw, level) in enumerate(zip(grids, grid.levels)):
        n_a = len(level.anchors)
        r = raw.reshape(n_a, per, level.rows, level.cols)
        obj_logit = r[:, 4]
        target = torch.zeros_like(obj_logit)
        for a in by_level.get(li, []):
            target[a.anchor, a.row, a.col] = 1.0
            cls_logits.append(r[a.anchor, 5:, a.row, a.col])
            one_hot = torch.zeros(n_classes, dtype=raw.dtype)
            one_hot[a.class_id] = 1.0
            cls_targets.append(one_hot)
        obj_terms.append(
            torch.nn.functional.binary_cross_entropy_with_logits(obj_logit, target)
        )
    l_obj = torch.stack(obj_terms).mean()
    if cls_logits:
        l_cls = torch.nn.functional.binary_cross_entropy_with_logits(
            torch.stack(cls_logits), torch.stack(cls_targets)
        )
    else:
        l_cls = grids[0].new_zeros(())
    return l_obj, l_cls


def decode_predictions(
    raw_grids: list[torch.Tensor],
    grid: AnchorGrid,
    conf_threshold: float = 0.05,
    n_classes: int | None = None,
) -> list[DetectionBox]:
    """Decode one image's raw grids to pixel-space boxes above threshold."""
    img_w, img_h = grid.img_size
    grids = [g[0] if g.ndim == 4 else g for g in raw_grids]
    if n_classes is None:
        n_anchors = len(grid.levels[0].anchors)
        n_classes = grids[0].shape[0] // n_anchors - 5
    _check_geometry(grids, grid, n_classes)
    boxes = []
    for raw, level in zip(grids, grid.levels):
        per = 5 + n_classes
        n_a = len(level.anchors)
        r = raw.detach().reshape(n_a, per, level.rows, level.cols)
        txy = torch.sigmoid(r[:, 0:2])
        twh = r[:, 2:4]
        obj = torch.sigmoid(r[:, 4])
        cls = torch.sigmoid(r[:, 5:])
        cls_prob, cls_id = cls.max(dim=1)
        conf = obj * cls_prob
        rows = torch.arange(level.rows).reshape(1, -1, 1)
        cols = torch.arange(level.cols).reshape(1, 1, -1)
        cx = (cols + txy[:, 0]) * level.stride
        cy = (rows + txy[:, 1]) * level.stride
        anchors = torch.tensor(level.anchors, dtype=raw.dtype)
        bw = anchors[:, 0].reshape(-1, 1, 1) * torch.exp(twh[:, 0])
        bh = anchors[:, 1].reshape(-1, 1, 1) * torch.exp(twh[:, 1])
        bw = bw.clamp(max=img_w)
        bh = bh.clamp(max=img_h)
        keep = conf >= conf_threshold
        for ai, ri, ci in zip(*keep.nonzero(as_tuple=True)):
            x0 = float((cx[ai, ri, ci] - bw[ai, ri, ci] / 2).clamp(0, img_w))
            x1 = float((cx[ai, ri, ci] + bw[ai, ri, ci] / 2).clamp(0, img_w))
            y0 = float((cy[ai, ri, ci] - bh[ai, ri, ci] / 2).clamp(0, img_h))
            y1 = float((cy[ai, ri, ci] + bh[ai, ri, ci] / 2).clamp(0, img_h))
            if x0 < x1 and y0 < y1:
                boxes.append(
                    DetectionBox(int(cls_id[ai, ri, ci]), float(conf[ai, ri, ci]),
                                 x0, y0, x1, y1)
                )
    return boxes


def box_iou(a: DetectionBox, b: DetectionBox) -> float:
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def nms(boxes: list[DetectionBox], iou_threshold: float = 0.45) -> list[DetectionBox]:
    """Per-class greedy suppression; output sorted by descending
    confidence, ties kept in input order."""
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].confidence, i))
    kept: list[DetectionBox] = []
    suppressed = set()
    for i in order:
        if i in suppressed:
            continue
        kept.append(boxes[i])
        for j in order:
            if j == i or j in suppressed:
                continue
            if boxes[j].class_id == boxes[i].class_id and box_iou(boxes[i], boxes[j]) > iou_threshold:
                suppressed.add(j)
    return kept
