"""Evaluation report structure and its JSON schema.

The IQA section mirrors the MSE/PSNR/SSIM summary columns; the detection
section carries mAP for HR input and for scale factors 2 and 4 (null when
the evaluated model does not cover that scale) plus mean per-image
inference milliseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

REPORT_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["iqa", "detection", "meta"],
    "additionalProperties": False,
    "properties": {
        "iqa": {
            "type": "object",
            "required": ["mse", "psnr", "ssim"],
            "additionalProperties": False,
            "properties": {
                "mse": {"type": "number", "minimum": 0},
                "psnr": {"type": "number"},
                "ssim": {"type": "number", "minimum": -1, "maximum": 1},
            },
        },
        "detection": {
            "type": "object",
            "required": ["map_hr", "map_sf2", "map_sf4", "mean_inference_ms"],
            "additionalProperties": False,
            "properties": {
                "map_hr": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "map_sf2": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "map_sf4": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                "mean_inference_ms": {"type": "number", "minimum": 0},
            },
        },
        "meta": {
            "type": "object",
            "required": ["split", "iou_threshold", "n_images"],
            "properties": {
                "split": {"type": "string"},
                "iou_threshold": {"type": "number"},
                "n_images": {"type": "integer", "minimum": 0},
            },
        },
    },
}


@dataclass
class MetricsReport:
    mse: float
    psnr: float
    ssim: float
    map_hr: float | None
    map_sf2: float | None
    map_sf4: float | None
    mean_inference_ms: float
    split: str
    iou_threshold: float
    n_images: int
    per_class_ap: dict[str, float] = field(default_factory=dict)
    pr_curves: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iqa": {"mse": self.mse, "psnr": self.psnr, "ssim": self.ssim},
            "detection": {
                "map_hr": self.map_hr,
                "map_sf2": self.map_sf2,
                "map_sf4": self.map_sf4,
                "mean_inference_ms": self.mean_inference_ms,
            },
            "meta": {
                "split": self.split,
                "iou_threshold": self.iou_threshold,
                "n_images": self.n_images,
                "per_class_ap": self.per_class_ap,
                "pr_curves": {k: [list(p) for p in v] for k, v in self.pr_curves.items()},
            },
        }
