"""Synthetic LR generation by bicubic resampling.

Keys-style cubic kernel with a = -0.5 and half-pixel-centered sampling.
Downsampling widens the kernel support by the scale factor (antialias),
matching the conventional "Bicubic" baseline.  Borders are edge-replicated.
"""

from __future__ import annotations

import numpy as np

from .image import ImageArray

SUPPORTED_SCALES = (2, 4)


def cubic_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(np.asarray(t, dtype=np.float64))
    t2 = t * t
    t3 = t2 * t
    return np.where(
        t <= 1.0,
        (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0,
        np.where(t < 2.0, a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a, 0.0),
    )


def _axis_taps(n_in: int, n_out: int, kernel_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Tap indices and normalized weights mapping n_in samples to n_out.

    Output sample j reads input coordinate (j + 0.5) * n_in / n_out - 0.5;
    the kernel is stretched by `kernel_scale` (1 for upsampling, the scale
    factor for antialiased downsampling).
    """
    step = n_in / n_out
    centers = (np.arange(n_out) + 0.5) * step - 0.5
    support = 2.0 * kernel_scale
    left = np.floor(centers - support).astype(int) + 1
    taps = int(np.ceil(2 * support))
    idx = left[:, None] + np.arange(taps)[None, :]
    w = cubic_kernel((idx - centers[:, None]) / kernel_scale)
    w = w / w.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, n_in - 1), w


def _resample_axis(data: np.ndarray, axis: int, n_out: int, kernel_scale: float) -> np.ndarray:
    idx, w = _axis_taps(data.shape[axis], n_out, kernel_scale)
    moved = np.moveaxis(data, axis, 0)
    gathered = moved[idx]  # (n_out, taps, ...)
    out = np.einsum("ot...,ot->o...", gathered, w)
    return np.moveaxis(out, 0, axis)


def synthesize_lr(hr: ImageArray, scale: int) -> ImageArray:
    if scale not in SUPPORTED_SCALES:
        raise ValueError(f"scale must be one of {SUPPORTED_SCALES}, got {scale}")
    if hr.height % scale or hr.width % scale:
        raise ValueError(
            f"dims {hr.height}x{hr.width} not divisible by scale {scale}; crop first"
        )
    out = _resample_axis(hr.data, 1, hr.height // scale, float(scale))
    out = _resample_axis(out, 2, hr.width // scale, float(scale))
    return ImageArray(np.clip(out, 0.0, hr.peak), peak=hr.peak)


def bicubic_upsample(lr: ImageArray, scale: int) -> ImageArray:
    """Bicubic upsampling; the classical SR baseline."""
    if scale not in SUPPORTED_SCALES:
        raise ValueError(f"scale must be one of {SUPPORTED_SCALES}, got {scale}")
    out = _resample_axis(lr.data, 1, lr.height * scale, 1.0)
    out = _resample_axis(out, 2, lr.width * scale, 1.0)
    return ImageArray(np.clip(out, 0.0, lr.peak), peak=lr.peak)
