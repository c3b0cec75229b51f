import numpy as np
import pytest

from mcgr.annotations import (
    AnnotationFormatError,
    AnnotationRecord,
    format_yolo_annotations,
    parse_yolo_annotations,
    pixel_to_yolo,
    yolo_to_pixel,
)


def test_parse_single_record():
    recs = parse_yolo_annotations("0 0.5 0.5 0.1 0.2", 5)
    assert recs == [AnnotationRecord(0, 0.5, 0.5, 0.1, 0.2)]


def test_parse_empty_text():
    assert parse_yolo_annotations("", 5) == []
    assert parse_yolo_annotations("\n\n", 5) == []


def test_class_out_of_range():
    with pytest.raises(AnnotationFormatError) as exc:
        parse_yolo_annotations("7 0.5 0.5 0.1 0.1", 5)
    assert "line 1" in str(exc.value)


def test_non_numeric_field_reports_line():
    with pytest.raises(AnnotationFormatError) as exc:
        parse_yolo_annotations("0 0.5 0.5 0.1 0.1\n0 x 0.5 0.1 0.1", 5)
    assert "line 2" in str(exc.value)


def test_out_of_range_fraction():
    with pytest.raises(AnnotationFormatError):
        parse_yolo_annotations("0 1.5 0.5 0.1 0.1", 5)
    with pytest.raises(AnnotationFormatError):
        parse_yolo_annotations("0 0.5 0.5 0.0 0.1", 5)


def test_parse_format_roundtrip():
    recs = [AnnotationRecord(1, 0.25, 0.75, 0.125, 0.0625)]
    assert parse_yolo_annotations(format_yolo_annotations(recs), 5) == recs


def test_yolo_to_pixel_example():
    rec = AnnotationRecord(0, 0.5, 0.5, 0.1, 0.2)
    assert yolo_to_pixel(rec, 1000, 1000) == (450, 400, 550, 600)


def test_full_image_box():
    rec = AnnotationRecord(0, 0.5, 0.5, 1.0, 1.0)
    assert yolo_to_pixel(rec, 1000, 1000) == (0, 0, 1000, 1000)


def test_inverse_pair_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        w = rng.uniform(0.01, 1.0)
        h = rng.uniform(0.01, 1.0)
        cx = rng.uniform(w / 4, 1 - w / 4)
        cy = rng.uniform(h / 4, 1 - h / 4)
        rec = AnnotationRecord(int(rng.integers(0, 5)), cx, cy, w, h)
        back = pixel_to_yolo(yolo_to_pixel(rec, 1000, 1000), 1000, 1000, rec.class_id)
        for a, b in zip((rec.cx, rec.cy, rec.w, rec.h), (back.cx, back.cy, back.w, back.h)):
            assert abs(a - b) < 1e-12
