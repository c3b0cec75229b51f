import math

import numpy as np
import pytest

from mcgr.detection import DetectionBox
from mcgr.image import ImageArray
from mcgr.metrics import (
    PSNR_CAP_DB,
    GroundTruthBox,
    Prediction,
    average_precision,
    gaussian_window,
    iou,
    map_at,
    mse,
    pr_curve,
    psnr,
    ssim,
)


def gray(arr):
    return ImageArray(np.asarray(arr, dtype=np.float64)[None])


# ----------------------------------------------------------------- MSE/PSNR


def test_identity_psnr_capped():
    a = gray(np.random.default_rng(0).uniform(0, 255, (16, 16)))
    assert mse(a, a) == 0.0
    assert psnr(a, a) == PSNR_CAP_DB


def test_offset_psnr_closed_form():
    base = np.random.default_rng(1).uniform(1, 254, (20, 20))
    a = gray(base)
    b = gray(base + 1)
    assert math.isclose(mse(a, b), 1.0, rel_tol=1e-12)
    assert math.isclose(psnr(a, b), 10 * math.log10(65025), rel_tol=1e-12)


def test_psnr_exact_20db():
    # mse 650.25 with peak 255 -> 10*log10(65025/650.25) = 20 dB exactly
    a = gray(np.zeros((10, 10)))
    delta = math.sqrt(650.25)
    b = gray(np.full((10, 10), delta))
    assert math.isclose(psnr(a, b), 20.0, rel_tol=1e-12)


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse(gray(np.zeros((4, 4))), gray(np.zeros((4, 5))))


def test_psnr_monotone_in_mse():
    a = gray(np.zeros((8, 8)))
    values = [psnr(a, gray(np.full((8, 8), d))) for d in (1, 2, 5, 20)]
    assert values == sorted(values, reverse=True)


# --------------------------------------------------------------------- SSIM


def brute_force_ssim(ya, yb, window=11, sigma=1.5, k1=0.01, k2=0.03, peak=255.0):
    """Explicit per-window loop with Gaussian-weighted moments."""
    w1 = gaussian_window(window, sigma)
    kernel = np.outer(w1, w1)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    h, w = ya.shape
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = ya[i : i + window, j : j + window]
            pb = yb[i : i + window, j : j + window]
            mu_a = (kernel * pa).sum()
            mu_b = (kernel * pb).sum()
            va = (kernel * (pa - mu_a) ** 2).sum()
            vb = (kernel * (pb - mu_b) ** 2).sum()
            cov = (kernel * (pa - mu_a) * (pb - mu_b)).sum()
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))


def test_ssim_identical_is_one():
    a = gray(np.random.default_rng(2).uniform(0, 255, (16, 16)))
    assert math.isclose(ssim(a, a), 1.0, rel_tol=1e-12)


def test_ssim_constant_extremes_closed_form():
    a = gray(np.zeros((12, 12)))
    b = gray(np.full((12, 12), 255.0))
    c1 = (0.01 * 255) ** 2
    expected = c1 / (255**2 + c1)
    assert math.isclose(ssim(a, b), expected, rel_tol=1e-9)


def test_ssim_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(5):
        ya = rng.uniform(0, 255, (32, 32))
        yb = np.clip(ya + rng.normal(0, 20, (32, 32)), 0, 255)
        got = ssim(gray(ya), gray(yb))
        want = brute_force_ssim(ya, yb)
        assert abs(got - want) < 1e-6


def test_ssim_window_too_large():
    with pytest.raises(ValueError):
        ssim(gray(np.zeros((8, 8))), gray(np.zeros((8, 8))))


def test_ssim_color_uses_luma():
    rng = np.random.default_rng(4)
    rgb = rng.uniform(0, 255, (3, 16, 16))
    img = ImageArray(rgb)
    y = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
    assert math.isclose(ssim(img, img), 1.0, rel_tol=1e-12)
    noisy = ImageArray(np.clip(rgb + rng.normal(0, 10, rgb.shape), 0, 255))
    yn = 0.299 * noisy.data[0] + 0.587 * noisy.data[1] + 0.114 * noisy.data[2]
    assert abs(ssim(img, noisy) - brute_force_ssim(y, yn)) < 1e-6


# ---------------------------------------------------------------------- IoU


def test_iou_examples():
    assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    assert iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0
    assert math.isclose(iou((0, 0, 2, 2), (1, 1, 3, 3)), 1 / 7, rel_tol=1e-12)


def test_iou_degenerate():
    with pytest.raises(ValueError):
        iou((0, 0, 0, 1), (0, 0, 1, 1))


# ----------------------------------------------------------------------- AP


def pred(img, conf, x0, y0, x1, y1, cls=0):
    return Prediction(img, DetectionBox(cls, conf, x0, y0, x1, y1))


def gt(img, x0, y0, x1, y1, cls=0):
    return GroundTruthBox(img, cls, (x0, y0, x1, y1))


def oracle_ap(preds, gts, iou_threshold):
    """Exhaustive oracle: greedy match (same protocol), then for each
    achieved recall level take the max precision over all threshold cuts
    with recall >= that level and sum the envelope area directly."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].box.confidence, i))
    matched = set()
    flags = []
    for i in order:
        p = preds[i]
        best, best_v = None, 0.0
        for gi, g in enumerate(gts):
            if gi in matched or g.image_id != p.image_id:
                continue
            pb = (p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max)
            v = iou(pb, g.box)
            if v >= iou_threshold and v > best_v:
                best, best_v = gi, v
        if best is not None:
            matched.add(best)
        flags.append(best is not None)
    n_gt = len(gts)
    if n_gt == 0:
        return 0.0
    cuts = []
    tp = 0
    for k in range(1, len(flags) + 1):
        tp += flags[k - 1]
        cuts.append((tp / n_gt, tp / k))
    recalls = sorted({r for r, _ in cuts})
    ap = 0.0
    prev = 0.0
    for r in recalls:
        if r <= 0:
            continue
        env = max(p for rr, p in cuts if rr >= r)
        ap += (r - prev) * env
        prev = r
    return ap


def test_ap_perfect_detector():
    preds = [pred("a", 0.9, 0, 0, 10, 10)]
    gts = [gt("a", 0, 0, 10, 10)]
    assert average_precision(preds, gts, 0.5).ap == 1.0


def test_ap_fp_then_tp():
    gts = [gt("a", 0, 0, 10, 10)]
    preds = [
        pred("a", 0.9, 50, 50, 60, 60),  # FP
        pred("a", 0.8, 0, 0, 10, 10),  # TP
    ]
    ev = average_precision(preds, gts, 0.5)
    assert ev.pr_points == [(0.0, 0.0), (1.0, 0.5)]
    assert ev.ap == 0.5
    assert pr_curve(preds, gts, 0.5) == [(0.0, 0.0), (1.0, 0.5)]


def test_ap_no_predictions():
    assert average_precision([], [gt("a", 0, 0, 5, 5)], 0.5).ap == 0.0
    assert pr_curve([], [gt("a", 0, 0, 5, 5)], 0.5) == []


def test_ap_unknown_image_id():
    with pytest.raises(ValueError):
        average_precision([pred("zzz", 0.9, 0, 0, 5, 5)], [gt("a", 0, 0, 5, 5)], 0.5)


def random_instance(rng, n_images=3, max_boxes=10):
    imgs = [f"im{i}" for i in range(n_images)]
    gts = []
    preds = []
    for _ in range(int(rng.integers(0, max_boxes + 1))):
        im = imgs[int(rng.integers(0, n_images))]
        x0, y0 = rng.uniform(0, 50, 2)
        w, h = rng.uniform(5, 30, 2)
        gts.append(gt(im, x0, y0, x0 + w, y0 + h))
    for _ in range(int(rng.integers(0, max_boxes + 1))):
        im = imgs[int(rng.integers(0, n_images))]
        x0, y0 = rng.uniform(0, 50, 2)
        w, h = rng.uniform(5, 30, 2)
        conf = round(float(rng.uniform(0, 1)), 2)  # encourage ties
        preds.append(pred(im, conf, x0, y0, x0 + w, y0 + h))
    return preds, gts


def test_ap_matches_exhaustive_oracle():
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 200:
        preds, gts = random_instance(rng)
        if not gts:
            continue
        got = average_precision(preds, gts, 0.5, valid_ids={f"im{i}" for i in range(3)}).ap
        want = oracle_ap(preds, gts, 0.5)
        assert math.isclose(got, want, rel_tol=0, abs_tol=0) or got == want
        checked += 1


def test_ap_stable_under_equal_confidence_order():
    gts = [gt("a", 0, 0, 10, 10), gt("a", 30, 30, 40, 40)]
    preds = [
        pred("a", 0.5, 0, 0, 10, 10),
        pred("a", 0.5, 30, 30, 40, 40),
    ]
    ap1 = average_precision(preds, gts, 0.5).ap
    ap2 = average_precision(list(reversed(preds)), gts, 0.5).ap
    assert ap1 == ap2 == 1.0


def test_map_class_relabel_invariant():
    gts = [gt("a", 0, 0, 10, 10, cls=0), gt("a", 30, 30, 40, 40, cls=1)]
    preds = [
        pred("a", 0.9, 0, 0, 10, 10, cls=0),
        pred("a", 0.8, 30, 30, 40, 40, cls=1),
    ]
    m1, _ = map_at(preds, gts, 0.5)

    def relabel(c):
        return {0: 1, 1: 0}[c]

    gts2 = [GroundTruthBox(g.image_id, relabel(g.class_id), g.box) for g in gts]
    preds2 = [
        Prediction(p.image_id, DetectionBox(relabel(p.box.class_id), p.box.confidence,
                                            p.box.x_min, p.box.y_min, p.box.x_max, p.box.y_max))
        for p in preds
    ]
    m2, _ = map_at(preds2, gts2, 0.5)
    assert m1 == m2 == 1.0
