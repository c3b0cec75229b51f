"""Image carrier type and lossless PNG I/O.

Images are held channel-first (C, H, W) as float64 in [0, peak].  PNG files
on disk are 8-bit; load/save round-trips are exact for integer-valued data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass
class ImageArray:
    """A (C, H, W) image with its dynamic-range maximum."""

    data: np.ndarray
    peak: float = 255.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"expected (C, H, W) array, got shape {self.data.shape}")
        c, h, w = self.data.shape
        if c not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {c}")
        if h < 1 or w < 1:
            raise ValueError(f"degenerate spatial dims {h}x{w}")
        if not np.isfinite(self.data).all():
            raise ValueError("image contains non-finite values")
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < -1e-9 or hi > self.peak + 1e-9:
            raise ValueError(f"values [{lo}, {hi}] exceed [0, {self.peak}]")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def to_unit(self) -> np.ndarray:
        """Values rescaled to [0, 1]."""
        return self.data / self.peak

    @classmethod
    def from_unit(cls, unit: np.ndarray, peak: float = 255.0) -> "ImageArray":
        return cls(np.clip(unit, 0.0, 1.0) * peak, peak=peak)


def luma(img: ImageArray) -> np.ndarray:
    """Grayscale (H, W) view; BT.601 weights for color inputs."""
    if img.channels == 1:
        return img.data[0]
    r, g, b = img.data
    return 0.299 * r + 0.587 * g + 0.114 * b


def load_png(path: str | Path, peak: float = 255.0) -> ImageArray:
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    else:
        arr = arr.transpose(2, 0, 1)
    return ImageArray(arr, peak=peak)


def save_png(img: ImageArray, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.round(img.data * (255.0 / img.peak)), 0, 255).astype(np.uint8)
    if arr.shape[0] == 1:
        pil = Image.fromarray(arr[0], mode="L")
    else:
        pil = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    pil.save(path, format="PNG")


def center_crop_to_multiple(img: ImageArray, multiple: int) -> ImageArray:
    """Center-crop so both spatial dims are divisible by `multiple`."""
    h, w = img.height, img.width
    nh = (h // multiple) * multiple
    nw = (w // multiple) * multiple
    if nh == 0 or nw == 0:
        raise ValueError(f"image {h}x{w} smaller than multiple {multiple}")
    top = (h - nh) // 2
    left = (w - nw) // 2
    return ImageArray(img.data[:, top : top + nh, left : left + nw], peak=img.peak)
