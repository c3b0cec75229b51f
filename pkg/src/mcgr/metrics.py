"""Image-quality (MSE/PSNR/SSIM) and detection (IoU/AP/mAP/PR) metrics.

IQA runs on the luma channel in [0, 255].  AP uses the continuous
all-points definition: greedy confidence-ordered matching, then the area
under the monotone non-increasing precision envelope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detection import DetectionBox
from .image import ImageArray, luma

PSNR_CAP_DB = 100.0


def mse(a: ImageArray, b: ImageArray) -> float:
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch {a.data.shape} vs {b.data.shape}")
    ya = luma(a) * (255.0 / a.peak)
    yb = luma(b) * (255.0 / b.peak)
    return float(np.mean((ya - yb) ** 2))


def psnr(a: ImageArray, b: ImageArray, peak: float = 255.0) -> float:
    m = mse(a, b)
    if m == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / m))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2
    x = np.arange(size) - half
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


def ssim(a: ImageArray, b: ImageArray, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, peak: float = 255.0) -> float:
    """Mean local SSIM over valid (fully inside) windows."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch {a.data.shape} vs {b.data.shape}")
    ya = luma(a) * (255.0 / a.peak)
    yb = luma(b) * (255.0 / b.peak)
    if min(ya.shape) < window:
        raise ValueError(f"image {ya.shape} smaller than window {window}")
    w1 = gaussian_window(window, sigma)
    kernel = np.outer(w1, w1)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    wa = np.lib.stride_tricks.sliding_window_view(ya, (window, window))
    wb = np.lib.stride_tricks.sliding_window_view(yb, (window, window))
    mu_a = np.einsum("ijkl,kl->ij", wa, kernel)
    mu_b = np.einsum("ijkl,kl->ij", wb, kernel)
    var_a = np.einsum("ijkl,kl->ij", wa**2, kernel) - mu_a**2
    var_b = np.einsum("ijkl,kl->ij", wb**2, kernel) - mu_b**2
    cov = np.einsum("ijkl,kl->ij", wa * wb, kernel) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def iou(box_a: tuple[float, float, float, float],
        box_b: tuple[float, float, float, float]) -> float:
    ax0, ay0, ax1, ay1 = box_a
    bx0, by0, bx1, by1 = box_b
    if ax0 >= ax1 or ay0 >= ay1 or bx0 >= bx1 or by0 >= by1:
        raise ValueError(f"degenerate box: {box_a} / {box_b}")
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


@dataclass
class GroundTruthBox:
    image_id: str
    class_id: int
    box: tuple[float, float, float, float]  # pixel corners


@dataclass
class Prediction:
    image_id: str
    box: DetectionBox


@dataclass
class ClassEval:
    ap: float
    pr_points: list[tuple[float, float]]  # (recall, precision) per rank
    tp: int
    fp: int
    fn: int


def _match_predictions(preds: list[Prediction], gts: list[GroundTruthBox],
                       iou_threshold: float,
                       valid_ids: set[str] | None = None) -> tuple[list[bool], int]:
    """Greedy matching in descending-confidence order (stable on ties);
    returns per-prediction TP flags and the GT count."""
    gt_ids = valid_ids if valid_ids is not None else {g.image_id for g in gts}
    for p in preds:
        if p.image_id not in gt_ids:
            raise ValueError(f"prediction references unknown image id {p.image_id!r}")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].box.confidence, i))
    by_image: dict[str, list[int]] = {}
    for gi, g in enumerate(gts):
        by_image.setdefault(g.image_id, []).append(gi)
    matched = set()
    flags = [False] * len(preds)
    for i in order:
        p = preds[i]
        pb = (p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max)
        best, best_v = None, 0.0
        for gi in by_image.get(p.image_id, []):
            if gi in matched:
                continue
            v = iou(pb, gts[gi].box)
            if v >= iou_threshold and v > best_v:
                best, best_v = gi, v
        if best is not None:
            matched.add(best)
            flags[i] = True
    return [flags[i] for i in order], len(gts)


def average_precision(preds: list[Prediction], gts: list[GroundTruthBox],
                      iou_threshold: float = 0.5,
                      valid_ids: set[str] | None = None) -> ClassEval:
    """All-points AP for a single class."""
    flags, n_gt = _match_predictions(preds, gts, iou_threshold, valid_ids)
    points = []
    tp = 0
    for k, is_tp in enumerate(flags, start=1):
        tp += int(is_tp)
        precision = tp / k
        recall = tp / n_gt if n_gt else 0.0
        points.append((recall, precision))
    if n_gt == 0:
        return ClassEval(0.0, points, tp, len(flags) - tp, 0)
    # area under the monotone non-increasing precision envelope
    ap = 0.0
    prev_r = 0.0
    for r, _ in points:
        if r > prev_r:
            env = max(p for rr, p in points if rr >= r)
            ap += (r - prev_r) * env
            prev_r = r
    return ClassEval(ap, points, tp, len(flags) - tp, n_gt - tp)


def pr_curve(preds: list[Prediction], gts: list[GroundTruthBox],
             iou_threshold: float = 0.5) -> list[tuple[float, float]]:
    return average_precision(preds, gts, iou_threshold).pr_points


def map_at(preds: list[Prediction], gts: list[GroundTruthBox],
           iou_threshold: float = 0.5,
           valid_ids: set[str] | None = None) -> tuple[float, dict[int, ClassEval]]:
    """Unweighted class-mean AP over classes with at least one GT."""
    if valid_ids is None:
        valid_ids = {g.image_id for g in gts}
    classes = sorted({g.class_id for g in gts})
    per_class = {}
    for c in classes:
        per_class[c] = average_precision(
            [p for p in preds if p.box.class_id == c],
            [g for g in gts if g.class_id == c],
            iou_threshold,
            valid_ids,
        )
    if not classes:
        return 0.0, {}
    return sum(e.ap for e in per_class.values()) / len(classes), per_class
