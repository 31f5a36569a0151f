"""Dual-pipeline composition tests with stubbed stage models.

The detector stub echoes ground truth (optionally plus noise); the
classifier stub reads the brightness cue painted into each box. This makes
the composed behaviour fully predictable without any training.
"""

import numpy as np
import pytest

import dualscreen.pipeline as pipeline
from dualscreen.metrics import EvalConfig
from dualscreen.pipeline import ScreenedDetection, evaluate_pipeline, screen_image
from dualscreen.types import AnomalyLabel, BoundingBox, Detection, ObjectClass
from conftest import make_record

A = AnomalyLabel.ANOMALOUS
B = AnomalyLabel.BENIGN

DARK = 0.05  # painted into anomalous boxes
LIGHT = 0.9


def build_records():
    """Records whose anomalous boxes are dark and benign boxes bright."""
    records = []
    layout = [
        ("r0", [((2, 2, 20, 20), ObjectClass.BOTTLE, A), ((25, 5, 38, 25), ObjectClass.IRON, B)]),
        ("r1", [((4, 4, 30, 28), ObjectClass.LAPTOP, B)]),
        ("r2", [((1, 1, 15, 15), ObjectClass.MOBILE, A)]),
    ]
    for rec_id, anns in layout:
        rec = make_record(
            rec_id, width=40, height=30,
            boxes=[a[0] for a in anns],
            classes=[a[1] for a in anns],
            anomalies=[a[2] for a in anns],
            fill=0.5,
        )
        for (x0, y0, x1, y1), _, anomaly in anns:
            value = DARK if anomaly is A else LIGHT
            rec.pixels[int(y0):int(y1), int(x0):int(x1)] = value
        records.append(rec)
    return records


class StubDetector:
    """Echoes each record's ground truth at a fixed score, plus extras."""

    def __init__(self, records, score=0.9, extra_by_image=None):
        self.gt = {
            r.id: [
                Detection(bbox=a.bbox, object_class=a.object_class, score=score)
                for a in r.annotations
            ]
            for r in records
        }
        self.score = score
        self.extra = extra_by_image or {}


class StubClassifier:
    input_size = (32, 32)
    threshold = 0.5


def stub_detect(model, record, score_threshold=0.3, nms_threshold=0.5):
    dets = model.gt[record.id] + model.extra.get(record.id, [])
    return [d for d in dets if d.score >= score_threshold]


def stub_classify(model, patch):
    score = 1.0 if patch.mean() < 0.4 else 0.0
    return (A if score >= model.threshold else B), score


@pytest.fixture(autouse=True)
def patch_stages(monkeypatch):
    monkeypatch.setattr(pipeline, "detect", stub_detect)
    monkeypatch.setattr(pipeline, "classify", stub_classify)


class TestScreenImage:
    def test_screened_fields(self):
        records = build_records()
        out = screen_image(StubDetector(records), StubClassifier(), records[0])
        assert len(out) == 2
        for s in out:
            assert isinstance(s, ScreenedDetection)
            assert s.anomaly in (A, B)
            assert 0.0 <= s.anomaly_score <= 1.0

    def test_verdicts_follow_painted_cue(self):
        records = build_records()
        out = screen_image(StubDetector(records), StubClassifier(), records[0])
        verdicts = {s.detection.object_class: s.anomaly for s in out}
        assert verdicts[ObjectClass.BOTTLE] is A
        assert verdicts[ObjectClass.IRON] is B


class TestEvaluatePipeline:
    def test_perfect_composition(self):
        records = build_records()
        cls_rep, det_rep = evaluate_pipeline(
            StubDetector(records), StubClassifier(), records
        )
        assert cls_rep.accuracy == 1.0
        assert cls_rep.tp + cls_rep.tn == 4
        assert det_rep.map == 1.0
        assert not cls_rep.degenerate

    def test_no_detections_degenerate(self):
        records = build_records()
        cls_rep, det_rep = evaluate_pipeline(
            StubDetector(records), StubClassifier(), records, score_threshold=1.0
        )
        assert cls_rep.degenerate
        assert cls_rep.accuracy is None
        assert det_rep.map == 0.0

    def test_unmatched_detection_excluded_from_classification(self):
        records = build_records()
        spurious = Detection(
            bbox=BoundingBox(30, 25, 39, 29), object_class=ObjectClass.TOASTER, score=0.8
        )
        det_model = StubDetector(records, extra_by_image={"r1": [spurious]})
        cls_rep, det_rep = evaluate_pipeline(det_model, StubClassifier(), records)
        # classification unchanged: the spurious box matches no ground truth
        assert cls_rep.tp + cls_rep.tn + cls_rep.fp + cls_rep.fn == 4
        assert cls_rep.accuracy == 1.0
        # but detection metrics see the false positive
        assert det_rep.n_det[ObjectClass.TOASTER] == 1
        assert det_rep.per_class_ap50[ObjectClass.TOASTER] == 0.0

    def test_custom_eval_config(self):
        records = build_records()
        cls_rep, det_rep = evaluate_pipeline(
            StubDetector(records), StubClassifier(), records,
            eval_config=EvalConfig(theta_set=(0.5,)),
        )
        assert det_rep.theta_set == (0.5,)
        assert det_rep.map == 1.0
