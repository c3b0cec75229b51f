"""Annotation records and format conversions (YOLO text, pixel boxes, COCO JSON)."""

from __future__ import annotations

from dataclasses import dataclass


class AnnotationFormatError(ValueError):
    """Raised on malformed annotation input; carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class AnnotationRecord:
    """One labeled object: class id plus a normalized center-format box."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"negative class id {self.class_id}")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"center ({self.cx}, {self.cy}) outside [0, 1]")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"size ({self.w}, {self.h}) outside (0, 1]")
        # the box clipped to the unit square must keep positive area
        if min(self.cx + self.w / 2, 1.0) <= max(self.cx - self.w / 2, 0.0):
            raise ValueError("box clips to empty in x")
        if min(self.cy + self.h / 2, 1.0) <= max(self.cy - self.h / 2, 0.0):
            raise ValueError("box clips to empty in y")


def parse_yolo_annotations(text: str, class_count: int) -> list[AnnotationRecord]:
    """Parse "class cx cy w h" lines; empty lines are skipped, order kept."""
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise AnnotationFormatError(f"expected 5 fields, got {len(fields)}", lineno)
        try:
            class_id = int(fields[0])
            cx, cy, w, h = (float(f) for f in fields[1:])
        except ValueError as exc:
            raise AnnotationFormatError(f"non-numeric field: {exc}", lineno) from None
        if not 0 <= class_id < class_count:
            raise AnnotationFormatError(
                f"class id {class_id} out of range [0, {class_count})", lineno
            )
        try:
            records.append(AnnotationRecord(class_id, cx, cy, w, h))
        except ValueError as exc:
            raise AnnotationFormatError(str(exc), lineno) from None
    return records


def format_yolo_annotations(records: list[AnnotationRecord]) -> str:
    lines = [f"{r.class_id} {r.cx:.10g} {r.cy:.10g} {r.w:.10g} {r.h:.10g}" for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


def yolo_to_pixel(rec: AnnotationRecord, img_w: int, img_h: int) -> tuple[float, float, float, float]:
    """(x_min, y_min, x_max, y_max) in pixels."""
    if img_w <= 0 or img_h <= 0:
        raise ValueError(f"non-positive image size {img_w}x{img_h}")
    return (
        (rec.cx - rec.w / 2) * img_w,
        (rec.cy - rec.h / 2) * img_h,
        (rec.cx + rec.w / 2) * img_w,
        (rec.cy + rec.h / 2) * img_h,
    )


def pixel_to_yolo(
    box: tuple[float, float, float, float], img_w: int, img_h: int, class_id: int = 0
) -> AnnotationRecord:
    if img_w <= 0 or img_h <= 0:
        raise ValueError(f"non-positive image size {img_w}x{img_h}")
    x_min, y_min, x_max, y_max = box
    return AnnotationRecord(
        class_id,
        (x_min + x_max) / 2 / img_w,
        (y_min + y_max) / 2 / img_h,
        (x_max - x_min) / img_w,
        (y_max - y_min) / img_h,
    )
